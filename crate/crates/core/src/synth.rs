//! Seeded synthetic data with planted ground truth.
//!
//! [`gen_feature_benchmark`] produces a multi-subject regression task shaped
//! like band-power features: a handful of informative features drive the
//! label through a fixed random nonlinearity, every subject applies its own
//! affine shift to the features and its own monotone distortion to the
//! labels. [`gen_raw_fixture`] produces sum-of-sinusoid recordings whose band
//! powers are known analytically.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::SeedTree;
use crate::sigproc::{RawRecording, TrialTable, ALPHA_BAND, THETA_BAND};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub subjects: usize,
    pub trials: usize,
    pub dim: usize,
    pub informative: Vec<usize>,
    /// Range of the population feature means, drawn uniformly per feature.
    pub mean_range: (f64, f64),
    /// Range of the population feature standard deviations.
    pub sd_range: (f64, f64),
    /// Standard deviation of the per-subject feature offsets, in units of
    /// each feature's spread.
    pub shift: f64,
    /// Fraction of `shift` applied to the informative features.
    pub informative_shift: f64,
    /// Half-width of the per-subject multiplicative feature distortion.
    pub scale_shift: f64,
    pub label_noise_sd: f64,
    /// Half-width of the per-subject label offset.
    pub label_offset: f64,
    /// Half-width of the per-subject label gain around 1.
    pub label_scale: f64,
    pub hidden_units: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            subjects: 6,
            trials: 600,
            dim: 60,
            informative: vec![3, 10, 17, 24, 31, 38, 45, 52],
            mean_range: (-5.0, 5.0),
            sd_range: (5.0, 15.0),
            shift: 1.0,
            informative_shift: 0.25,
            scale_shift: 0.1,
            label_noise_sd: 0.05,
            label_offset: 0.3,
            label_scale: 0.5,
            hidden_units: 16,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.subjects == 0 || self.trials == 0 || self.dim == 0 {
            return Err(Error::Configuration("subjects, trials and dim must be >= 1".into()));
        }
        if self.informative.is_empty() {
            return Err(Error::Configuration("informative set is empty".into()));
        }
        if let Some(&l) = self.informative.iter().find(|&&l| l >= self.dim) {
            return Err(Error::Configuration(format!(
                "informative feature {l} outside [0, {})",
                self.dim
            )));
        }
        let mut sorted = self.informative.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.informative.len() {
            return Err(Error::Configuration("informative set has duplicates".into()));
        }
        if !(self.mean_range.0 <= self.mean_range.1 && self.mean_range.0.is_finite() && self.mean_range.1.is_finite()) {
            return Err(Error::Configuration(format!(
                "mean_range {:?} is empty",
                self.mean_range
            )));
        }
        if !(0.0 < self.sd_range.0 && self.sd_range.0 <= self.sd_range.1 && self.sd_range.1.is_finite()) {
            return Err(Error::Configuration(format!(
                "sd_range {:?} must be positive and ordered",
                self.sd_range
            )));
        }
        let nonneg = [
            ("shift", self.shift),
            ("informative_shift", self.informative_shift),
            ("scale_shift", self.scale_shift),
            ("label_noise_sd", self.label_noise_sd),
            ("label_offset", self.label_offset),
            ("label_scale", self.label_scale),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Configuration(format!("{name} = {v} must be >= 0")));
            }
        }
        if self.scale_shift >= 1.0 || self.label_scale >= 1.0 {
            return Err(Error::Configuration(
                "scale_shift and label_scale must stay below 1 to keep distortions monotone".into(),
            ));
        }
        if self.hidden_units == 0 {
            return Err(Error::Configuration("hidden_units must be >= 1".into()));
        }
        Ok(())
    }

    pub fn subject_id(s: usize) -> String {
        format!("s{:02}", s + 1)
    }
}

/// Fixed latent nonlinearity `g(z) = v . tanh(W z + b)` followed by
/// standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Latent {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub v: Vec<f64>,
    pub center: f64,
    pub spread: f64,
}

impl Latent {
    fn raw(&self, z: &[f64]) -> f64 {
        self.w
            .iter()
            .zip(&self.b)
            .zip(&self.v)
            .map(|((row, b), v)| v * (row.iter().zip(z).map(|(a, x)| a * x).sum::<f64>() + b).tanh())
            .sum()
    }

    /// Noise-free, undistorted label in `[0, 1)` for informative latents `z`.
    pub fn label(&self, z: &[f64]) -> f64 {
        let u = LABEL_GAIN * (self.raw(z) - self.center) / self.spread + LABEL_BIAS;
        squash(u)
    }
}

const LABEL_GAIN: f64 = 2.0;
const LABEL_BIAS: f64 = 0.5;

/// `max(0, (1 - e^-u) / (1 + e^-u))`, the drowsiness-index shape.
pub fn squash(u: f64) -> f64 {
    (u / 2.0).tanh().max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectShift {
    pub subject_id: String,
    pub feature_scale: Vec<f64>,
    pub feature_offset: Vec<f64>,
    pub label_scale: f64,
    pub label_offset: f64,
}

/// Everything needed to regenerate and interpret a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDescriptor {
    pub spec: SynthSpec,
    pub feature_mean: Vec<f64>,
    pub feature_sd: Vec<f64>,
    pub latent: Latent,
    pub subjects: Vec<SubjectShift>,
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub tables: Vec<TrialTable>,
    pub descriptor: SynthDescriptor,
}

const STRIDE_S: f64 = 3.0;
const FIRST_TIME_S: f64 = 30.0;

pub fn gen_feature_benchmark(spec: &SynthSpec) -> Result<Benchmark> {
    spec.validate()?;
    let seeds = SeedTree::new(spec.seed).child("synth");
    let mut rng = seeds.child("global").rng();
    let d = spec.dim;
    let k = spec.informative.len();
    let feature_mean: Vec<f64> = (0..d)
        .map(|_| rng.random_range(spec.mean_range.0..=spec.mean_range.1))
        .collect();
    let feature_sd: Vec<f64> = (0..d)
        .map(|_| rng.random_range(spec.sd_range.0..=spec.sd_range.1))
        .collect();

    let in_scale = 1.0 / (k as f64).sqrt();
    let w: Vec<Vec<f64>> = (0..spec.hidden_units)
        .map(|_| (0..k).map(|_| normal(&mut rng) * 1.5 * in_scale).collect())
        .collect();
    let b = (0..spec.hidden_units).map(|_| 0.5 * normal(&mut rng)).collect();
    let v = (0..spec.hidden_units).map(|_| normal(&mut rng)).collect();
    let mut latent = Latent {
        w,
        b,
        v,
        center: 0.0,
        spread: 1.0,
    };
    let reference: Vec<f64> = (0..4000)
        .map(|_| {
            let z: Vec<f64> = (0..k).map(|_| normal(&mut rng)).collect();
            latent.raw(&z)
        })
        .collect();
    let center = reference.iter().sum::<f64>() / reference.len() as f64;
    let spread = (reference.iter().map(|r| (r - center).powi(2)).sum::<f64>() / reference.len() as f64).sqrt();
    latent.center = center;
    latent.spread = if spread > 0.0 { spread } else { 1.0 };

    let informative_mask: Vec<bool> = (0..d).map(|l| spec.informative.contains(&l)).collect();
    let mut shifts = Vec::with_capacity(spec.subjects);
    let mut tables = Vec::with_capacity(spec.subjects);
    for s in 0..spec.subjects {
        let subject = seeds.child(format!("subject-{s}"));
        let mut srng = subject.child("shift").rng();
        let shift = SubjectShift {
            subject_id: SynthSpec::subject_id(s),
            feature_scale: (0..d)
                .map(|_| 1.0 + spec.scale_shift * srng.random_range(-1.0..=1.0))
                .collect(),
            feature_offset: (0..d)
                .map(|l| {
                    let mag = if informative_mask[l] {
                        spec.shift * spec.informative_shift
                    } else {
                        spec.shift
                    };
                    mag * feature_sd[l] * normal(&mut srng)
                })
                .collect(),
            label_scale: 1.0 + spec.label_scale * srng.random_range(-1.0..=1.0),
            label_offset: spec.label_offset * srng.random_range(-1.0..=1.0),
        };

        let mut trng = subject.child("trials").rng();
        let mut features = Vec::with_capacity(spec.trials);
        let mut labels = Vec::with_capacity(spec.trials);
        let noise = Normal::new(0.0, spec.label_noise_sd).expect("validated sd");
        for _ in 0..spec.trials {
            let z: Vec<f64> = (0..d).map(|_| normal(&mut trng)).collect();
            let zi: Vec<f64> = spec.informative.iter().map(|&l| z[l]).collect();
            let clean = latent.label(&zi);
            let y = (shift.label_scale * clean + shift.label_offset + noise.sample(&mut trng)).clamp(0.0, 1.0);
            let row = (0..d)
                .map(|l| shift.feature_scale[l] * (feature_mean[l] + feature_sd[l] * z[l]) + shift.feature_offset[l])
                .collect();
            features.push(row);
            labels.push(y);
        }
        let times = (0..spec.trials).map(|i| FIRST_TIME_S + STRIDE_S * i as f64).collect();
        tables.push(TrialTable::new(shift.subject_id.clone(), features, labels, times)?);
        shifts.push(shift);
    }
    Ok(Benchmark {
        tables,
        descriptor: SynthDescriptor {
            spec: spec.clone(),
            feature_mean,
            feature_sd,
            latent,
            subjects: shifts,
        },
    })
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// One sinusoid of a raw fixture, present on the listed channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToneComponent {
    pub freq_hz: f64,
    pub amplitude: f64,
    pub channels: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Theta,
    Alpha,
}

/// Analytic mean-square power of the tones falling in each band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelBandPower {
    pub theta: f64,
    pub alpha: f64,
    pub dominant: Option<Band>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawFixtureSpec {
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub channels: usize,
    pub components: Vec<ToneComponent>,
    pub noise_sd: f64,
    /// Appends two silent earlobe channels `A1` and `A2`.
    pub earlobes: bool,
    pub seed: u64,
}

impl Default for RawFixtureSpec {
    fn default() -> Self {
        Self {
            duration_s: 60.0,
            sample_rate_hz: 250.0,
            channels: 30,
            components: Vec::new(),
            noise_sd: 0.0,
            earlobes: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RawFixture {
    pub recording: RawRecording,
    /// One entry per scalp channel.
    pub expected: Vec<ChannelBandPower>,
}

pub fn gen_raw_fixture(spec: &RawFixtureSpec) -> Result<RawFixture> {
    let fs = spec.sample_rate_hz;
    if !(fs > 0.0 && spec.duration_s > 0.0) || spec.channels == 0 {
        return Err(Error::InvalidArgument(
            "fixture needs positive duration, rate and channels".into(),
        ));
    }
    if !(spec.noise_sd >= 0.0) {
        return Err(Error::InvalidArgument("noise sd must be >= 0".into()));
    }
    for c in &spec.components {
        if !(c.freq_hz >= 0.0 && c.freq_hz < fs / 2.0) {
            return Err(Error::InvalidArgument(format!(
                "tone at {} Hz is not below Nyquist ({} Hz)",
                c.freq_hz,
                fs / 2.0
            )));
        }
        if let Some(&ch) = c.channels.iter().find(|&&ch| ch >= spec.channels) {
            return Err(Error::InvalidArgument(format!("tone targets missing channel {ch}")));
        }
    }
    let n = (spec.duration_s * fs).round() as usize;
    let mut rng = SeedTree::new(spec.seed).child("raw-fixture").rng();
    let total = spec.channels + if spec.earlobes { 2 } else { 0 };
    let mut samples = vec![vec![0.0; n]; total];
    for c in &spec.components {
        let phase = rng.random_range(0.0..2.0 * PI);
        let wave: Vec<f64> = (0..n)
            .map(|k| c.amplitude * (2.0 * PI * c.freq_hz * k as f64 / fs + phase).sin())
            .collect();
        for &ch in &c.channels {
            for (a, b) in samples[ch].iter_mut().zip(&wave) {
                *a += b;
            }
        }
    }
    if spec.noise_sd > 0.0 {
        let noise = Normal::new(0.0, spec.noise_sd).expect("checked sd");
        for ch in samples.iter_mut().take(spec.channels) {
            for v in ch.iter_mut() {
                *v += noise.sample(&mut rng);
            }
        }
    }
    let mut names: Vec<String> = (0..spec.channels).map(|c| format!("C{:02}", c + 1)).collect();
    let earlobes = if spec.earlobes {
        names.push("A1".into());
        names.push("A2".into());
        Some((spec.channels, spec.channels + 1))
    } else {
        None
    };
    let expected = (0..spec.channels)
        .map(|ch| {
            let in_band = |band: (f64, f64)| -> f64 {
                spec.components
                    .iter()
                    .filter(|c| c.channels.contains(&ch) && c.freq_hz >= band.0 && c.freq_hz <= band.1)
                    .map(|c| c.amplitude * c.amplitude / 2.0)
                    .sum()
            };
            let theta = in_band(THETA_BAND);
            let alpha = in_band(ALPHA_BAND);
            let dominant = if theta == 0.0 && alpha == 0.0 {
                None
            } else if theta > alpha {
                Some(Band::Theta)
            } else {
                Some(Band::Alpha)
            };
            ChannelBandPower { theta, alpha, dominant }
        })
        .collect();
    Ok(RawFixture {
        recording: RawRecording::new(samples, fs, names, earlobes)?,
        expected,
    })
}
