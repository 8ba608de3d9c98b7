//! Cross-subject drowsiness regression from EEG band powers.
//!
//! The crate covers the full path from raw recordings to evaluated models:
//!
//! - [`sigproc`]: band-pass, downsample, earlobe re-reference, Welch theta and
//!   alpha band powers, reaction-time drowsiness labels.
//! - [`numcore`]: a small dense-network engine with exact gradients and
//!   momentum SGD.
//! - [`dg`]: the four neural trainers (aggregation, feature-weighted
//!   aggregation, episodic training and feature-weighted episodic training).
//! - [`baselines`]: k-nearest-neighbour and ridge regressors.
//! - [`eval`]: leave-one-subject-out evaluation, metrics, Dunn's test with
//!   Benjamini-Hochberg adjustment, and the perturbation and cross-subject
//!   analyses.
//! - [`synth`]: seeded synthetic benchmarks with planted ground truth.
//! - [`cli`]: the `fwet` command-line tool.
//!
//! Runnable walkthroughs of each capability live in `examples/`.

pub mod baselines;
pub mod checkpoint;
pub mod cli;
pub mod dg;
pub mod error;
pub mod eval;
pub mod numcore;
pub mod seed;
pub mod sigproc;
pub mod synth;

pub use error::{Error, Result};
pub use seed::SeedTree;
pub use sigproc::TrialTable;
