//! Domain-generalization trainers.
//!
//! All four trainers share one model shape: optional softmax feature
//! weights `w`, a feature transform `theta` and a regressor `psi`, so that
//! `y_hat = psi(theta(softmax(w) * x))`.
//!
//! | variant  | feature weighting | episodic updates |
//! |----------|-------------------|------------------|
//! | `Agg`    | no                | no               |
//! | `FwAgg`  | yes               | no               |
//! | `Et`     | no                | yes              |
//! | `Fwet`   | yes               | yes              |
//!
//! Episodic variants additionally keep one [`DomainModel`] per source
//! subject. Each epoch first takes one step on every domain model using only
//! that subject's data, then takes one shared step for every ordered pair
//! `(s, j)`, `j != s`, on a batch from `s` scored by the frozen regressor of
//! `j` (see [`Episodic`]).

mod batching;
mod episodic;
mod fit;
pub mod fw;
mod losses;
mod model;

pub use batching::{epoch_batches, BatchSampler};
pub use episodic::{agg_step, Episodic, NoopObserver, SharedStep, TrainObserver};
pub use fit::{
    export_channel_weights, fit, fit_with_observer, split_validation, EarlyStopping, EpochRecord, FitOutcome,
    StopDecision,
};
pub use fw::{apply_fw, softmax};
pub use losses::{
    agg_gradients, epic_gradients, epir_gradients, et_gradients, ft_gradients, loss_agg, loss_epic, loss_epir, loss_et,
    loss_ft, Batch, Episode, EtGradients, LossParts,
};
pub use model::{Architecture, DomainModel, SharedModel};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::OptState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "agg")]
    Agg,
    #[serde(rename = "fw-agg")]
    FwAgg,
    #[serde(rename = "et")]
    Et,
    #[serde(rename = "fwet")]
    Fwet,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Agg, Variant::FwAgg, Variant::Et, Variant::Fwet];

    pub fn uses_fw(self) -> bool {
        matches!(self, Variant::FwAgg | Variant::Fwet)
    }

    pub fn is_episodic(self) -> bool {
        matches!(self, Variant::Et | Variant::Fwet)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Agg => "agg",
            Variant::FwAgg => "fw-agg",
            Variant::Et => "et",
            Variant::Fwet => "fwet",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Usage(format!("unknown trainer {s:?}")))
    }
}

/// Episodic regularizers. `Epif` scores the shared feature transform with
/// frozen domain regressors, `Epic` scores the shared regressor on frozen
/// domain feature transforms, `Epir` scores the shared feature transform
/// with a freshly drawn random regressor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularizer {
    Epif,
    Epic,
    Epir,
}

impl FromStr for Regularizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "epif" => Ok(Regularizer::Epif),
            "epic" => Ok(Regularizer::Epic),
            "epir" => Ok(Regularizer::Epir),
            other => Err(Error::Usage(format!("unknown regularizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the episodic feature term.
    pub lambda: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_frac: f64,
    pub clip_range: (f64, f64),
    pub regularizers: Vec<Regularizer>,
    pub epic_weight: f64,
    pub epir_weight: f64,
    pub arch: Architecture,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            batch_size: 32,
            lr: 1e-3,
            momentum: 0.9,
            weight_decay: 5e-5,
            max_epochs: 500,
            patience: 10,
            val_frac: 0.10,
            clip_range: (-10.0, 10.0),
            regularizers: vec![Regularizer::Epif],
            epic_weight: 0.1,
            epir_weight: 0.1,
            arch: Architecture::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Configuration(format!("lambda {} must be >= 0", self.lambda)));
        }
        if self.batch_size == 0 {
            return Err(Error::Configuration("batch size must be >= 1".into()));
        }
        if !(self.val_frac > 0.0 && self.val_frac < 1.0) {
            return Err(Error::Configuration(format!(
                "validation fraction {} must lie in (0, 1)",
                self.val_frac
            )));
        }
        if !(self.clip_range.0 < self.clip_range.1) {
            return Err(Error::Configuration(format!(
                "clip range {:?} is empty",
                self.clip_range
            )));
        }
        if !self.regularizers.contains(&Regularizer::Epif) {
            return Err(Error::Configuration(
                "episodic training always includes the epif term".into(),
            ));
        }
        if self.epic_weight < 0.0 || self.epir_weight < 0.0 {
            return Err(Error::Configuration("regularizer weights must be >= 0".into()));
        }
        self.arch.validate()?;
        self.optimizer()?;
        Ok(())
    }

    pub fn uses(&self, reg: Regularizer) -> bool {
        self.regularizers.contains(&reg)
    }

    pub fn optimizer(&self) -> Result<OptState> {
        OptState::new(self.lr, self.momentum, self.weight_decay)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!(matches!("mlp".parse::<Variant>(), Err(Error::Usage(_))));
    }

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
        let bad = TrainConfig {
            regularizers: vec![Regularizer::Epic],
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            val_frac: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
