use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineConfig;
use crate::dg::{Architecture, Regularizer, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{Algorithm, LosoConfig};
use crate::synth::SynthSpec;

/// How the reaction-time offset of the drowsiness index is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tau0Mode {
    Fixed(f64),
    /// 5th percentile of the session's reaction times.
    Percentile5,
}

impl std::str::FromStr for Tau0Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("percentile5") {
            return Ok(Tau0Mode::Percentile5);
        }
        let value = s.strip_prefix("fixed:").unwrap_or(s);
        value
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Tau0Mode::Fixed)
            .ok_or_else(|| {
                Error::Usage(format!(
                    "tau0 must be `percentile5`, `fixed:<value>` or a number, got {s:?}"
                ))
            })
    }
}

impl std::fmt::Display for Tau0Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tau0Mode::Fixed(v) => write!(f, "fixed:{v}"),
            Tau0Mode::Percentile5 => f.write_str("percentile5"),
        }
    }
}

/// Which LOSO cells get a checkpoint file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointPolicy {
    All,
    Neural,
    None,
}

/// Every tunable of every subcommand as one flat key/value table.
///
/// Read from TOML; unknown keys are rejected. The effective configuration
/// is written next to each command's outputs as `run_config.toml` and
/// reproduces the run when passed back with `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// LOSO worker threads; 0 uses every core.
    pub workers: usize,

    pub lambda: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_frac: f64,
    pub clip_min: f64,
    pub clip_max: f64,
    pub regularizers: Vec<String>,
    pub epic_weight: f64,
    pub epir_weight: f64,
    pub theta_hidden: Vec<usize>,
    pub psi_hidden: Vec<usize>,

    pub knn_k: usize,
    pub ridge_alpha: f64,
    pub standardize: bool,

    pub algorithms: Vec<String>,
    pub repeats: usize,
    pub checkpoints: CheckpointPolicy,

    pub subjects: usize,
    pub trials: usize,
    pub dim: usize,
    pub informative: Vec<usize>,
    pub mean_range: (f64, f64),
    pub sd_range: (f64, f64),
    pub shift: f64,
    pub informative_shift: f64,
    pub scale_shift: f64,
    pub label_noise_sd: f64,
    pub label_offset: f64,
    pub label_scale: f64,
    pub hidden_units: usize,

    pub tau0: String,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub decimate: usize,
    pub epoch_s: f64,
    pub stride_s: f64,
    pub smooth_window_s: f64,

    pub sigmas: Vec<f64>,
    pub draws: usize,
    pub regressor_epochs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let b = BaselineConfig::default();
        let s = SynthSpec::default();
        Self {
            seed: 0,
            workers: 0,
            lambda: t.lambda,
            batch_size: t.batch_size,
            lr: t.lr,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            max_epochs: t.max_epochs,
            patience: t.patience,
            val_frac: t.val_frac,
            clip_min: t.clip_range.0,
            clip_max: t.clip_range.1,
            regularizers: t.regularizers.iter().map(|r| format!("{r:?}").to_lowercase()).collect(),
            epic_weight: t.epic_weight,
            epir_weight: t.epir_weight,
            theta_hidden: t.arch.theta_hidden,
            psi_hidden: t.arch.psi_hidden,
            knn_k: b.knn_k,
            ridge_alpha: b.ridge_alpha,
            standardize: b.standardize,
            algorithms: Algorithm::ALL.iter().map(|a| a.name().to_string()).collect(),
            repeats: 5,
            checkpoints: CheckpointPolicy::All,
            subjects: s.subjects,
            trials: s.trials,
            dim: s.dim,
            informative: s.informative,
            mean_range: s.mean_range,
            sd_range: s.sd_range,
            shift: s.shift,
            informative_shift: s.informative_shift,
            scale_shift: s.scale_shift,
            label_noise_sd: s.label_noise_sd,
            label_offset: s.label_offset,
            label_scale: s.label_scale,
            hidden_units: s.hidden_units,
            tau0: "fixed:1".into(),
            band_low_hz: 1.0,
            band_high_hz: 50.0,
            decimate: 2,
            epoch_s: 30.0,
            stride_s: 3.0,
            smooth_window_s: 90.0,
            sigmas: vec![0.0, 0.01, 0.02, 0.05, 0.1, 0.2],
            draws: 20,
            regressor_epochs: 50,
        }
    }
}

impl RunConfig {
    /// Defaults, overlaid with `path` (if any), overlaid with `overrides`
    /// given as `key=value` with TOML values.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| match e.kind() {
                    std::io::ErrorKind::NotFound => Error::NotFound(p.to_path_buf()),
                    _ => e.into(),
                })?;
                text.parse::<toml::Table>().map_err(|e| {
                    let line = e.span().map_or(0, |s| text[..s.start].matches('\n').count() as u64 + 1);
                    Error::parse(p, line, e.message().to_string())
                })?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("override {o:?} is not key=value")))?;
            let key = key.trim();
            let parsed = parse_value(value.trim());
            table.insert(key.to_string(), parsed);
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Configuration(e.message().to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Configuration(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let regularizers = self
            .regularizers
            .iter()
            .map(|r| r.parse::<Regularizer>())
            .collect::<Result<Vec<_>>>()?;
        let cfg = TrainConfig {
            lambda: self.lambda,
            batch_size: self.batch_size,
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            max_epochs: self.max_epochs,
            patience: self.patience,
            val_frac: self.val_frac,
            clip_range: (self.clip_min, self.clip_max),
            regularizers,
            epic_weight: self.epic_weight,
            epir_weight: self.epir_weight,
            arch: Architecture {
                theta_hidden: self.theta_hidden.clone(),
                psi_hidden: self.psi_hidden.clone(),
            },
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn baseline_config(&self) -> BaselineConfig {
        BaselineConfig {
            knn_k: self.knn_k,
            ridge_alpha: self.ridge_alpha,
            standardize: self.standardize,
        }
    }

    pub fn loso_config(&self) -> Result<LosoConfig> {
        Ok(LosoConfig {
            train: self.train_config()?,
            baselines: self.baseline_config(),
            repeats: self.repeats,
            workers: self.workers,
            seed: self.seed,
            keep_models: self.checkpoints != CheckpointPolicy::None,
        })
    }

    pub fn algorithm_list(&self) -> Result<Vec<Algorithm>> {
        Algorithm::parse_list(&self.algorithms.join(","))
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            subjects: self.subjects,
            trials: self.trials,
            dim: self.dim,
            informative: self.informative.clone(),
            mean_range: self.mean_range,
            sd_range: self.sd_range,
            shift: self.shift,
            informative_shift: self.informative_shift,
            scale_shift: self.scale_shift,
            label_noise_sd: self.label_noise_sd,
            label_offset: self.label_offset,
            label_scale: self.label_scale,
            hidden_units: self.hidden_units,
            seed: self.seed,
        }
    }

    pub fn tau0_mode(&self) -> Result<Tau0Mode> {
        self.tau0.parse()
    }
}

/// Parses an override value as TOML, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        cfg.save(&p).unwrap();
        assert_eq!(RunConfig::load(Some(&p), &[]).unwrap(), cfg);
        assert_eq!(cfg.train_config().unwrap(), TrainConfig::default());
    }

    #[test]
    fn overrides_and_errors() {
        let cfg = RunConfig::load(
            None,
            &[
                "lr=0.01".into(),
                "algorithms=[\"knn\"]".into(),
                "tau0=percentile5".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.lr, 0.01);
        assert_eq!(cfg.algorithm_list().unwrap(), vec![Algorithm::Knn]);
        assert_eq!(cfg.tau0_mode().unwrap(), Tau0Mode::Percentile5);
        assert!(matches!(
            RunConfig::load(None, &["bogus=1".into()]),
            Err(Error::Configuration(_))
        ));
        assert!(matches!(RunConfig::load(None, &["lr".into()]), Err(Error::Usage(_))));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seed = 1\nlr = [\n").unwrap();
        assert!(matches!(
            RunConfig::load(Some(&p), &[]),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn tau0_modes() {
        assert_eq!("fixed:1".parse::<Tau0Mode>().unwrap(), Tau0Mode::Fixed(1.0));
        assert_eq!("0.5".parse::<Tau0Mode>().unwrap(), Tau0Mode::Fixed(0.5));
        assert!("median".parse::<Tau0Mode>().is_err());
    }
}
