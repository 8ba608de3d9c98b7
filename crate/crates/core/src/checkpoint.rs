//! Self-describing JSON container for fitted models.
//!
//! A checkpoint stores every layer with its shape, the feature-weight
//! vector, the domain models of episodic runs, and the seed lineage that
//! produced the model. Floats are written in shortest round-trip form and
//! parsed exactly, so save, load and save again yields identical bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{KnnModel, RidgeModel};
use crate::dg::{DomainModel, FitOutcome, SharedModel, Variant};
use crate::error::{Error, Result};
use crate::eval::{Algorithm, LosoCell, TrainedModel};
use crate::numcore::Network;

pub const FORMAT: &str = "fwet-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CheckpointModel {
    Neural {
        variant: Variant,
        shared: SharedModel,
        domains: Vec<DomainModel>,
        best_epoch: Option<usize>,
        best_val_rmse: Option<f64>,
    },
    Knn(KnnModel),
    Ridge(RidgeModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub algorithm: Algorithm,
    pub target_subject: Option<String>,
    pub repeat: Option<usize>,
    pub train_subjects: Vec<String>,
    pub seed_lineage: Vec<String>,
    pub model: CheckpointModel,
}

impl Checkpoint {
    /// Wraps a model with empty provenance; fill in the public fields as
    /// needed.
    pub fn new(algorithm: Algorithm, model: &TrainedModel) -> Self {
        let model = match model {
            TrainedModel::Knn(m) => CheckpointModel::Knn(m.clone()),
            TrainedModel::Ridge(m) => CheckpointModel::Ridge(m.clone()),
            TrainedModel::Neural(f) => CheckpointModel::Neural {
                variant: f.variant,
                shared: f.model.clone(),
                domains: f.domains.clone(),
                best_epoch: f.best_epoch,
                best_val_rmse: f.best_val_rmse,
            },
        };
        Self {
            format: FORMAT.into(),
            version: VERSION,
            algorithm,
            target_subject: None,
            repeat: None,
            train_subjects: Vec::new(),
            seed_lineage: Vec::new(),
            model,
        }
    }

    /// Builds a checkpoint from a LOSO cell that kept its model.
    pub fn from_cell(cell: &LosoCell) -> Result<Self> {
        let model = cell.model.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "cell {}/{}/r{} holds no model",
                cell.algorithm, cell.target, cell.repeat
            ))
        })?;
        Ok(Self {
            target_subject: Some(cell.target.clone()),
            repeat: Some(cell.repeat),
            train_subjects: cell.train_subjects.clone(),
            seed_lineage: cell.seed_lineage.clone(),
            ..Self::new(cell.algorithm, model)
        })
    }

    /// Conventional file name: `{alg}_t{target}_r{repeat}.json`.
    pub fn file_name(algorithm: Algorithm, target: &str, repeat: usize) -> String {
        format!("{}_t{target}_r{repeat}.json", algorithm.name())
    }

    pub fn trained_model(&self) -> TrainedModel {
        match &self.model {
            CheckpointModel::Knn(m) => TrainedModel::Knn(m.clone()),
            CheckpointModel::Ridge(m) => TrainedModel::Ridge(m.clone()),
            CheckpointModel::Neural {
                variant,
                shared,
                domains,
                best_epoch,
                best_val_rmse,
            } => TrainedModel::Neural(Box::new(FitOutcome {
                variant: *variant,
                model: shared.clone(),
                domains: domains.clone(),
                trace: Vec::new(),
                best_epoch: *best_epoch,
                best_val_rmse: *best_val_rmse,
            })),
        }
    }

    pub fn shared_model(&self) -> Option<&SharedModel> {
        match &self.model {
            CheckpointModel::Neural { shared, .. } => Some(shared),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.format != FORMAT {
            return Err(Error::InvalidArgument(format!(
                "unknown checkpoint format {:?}",
                self.format
            )));
        }
        if self.version != VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        match &self.model {
            CheckpointModel::Neural {
                variant,
                shared,
                domains,
                ..
            } => {
                if self.algorithm.variant() != Some(*variant) {
                    return Err(Error::InvalidArgument(format!(
                        "algorithm {} does not match variant {variant}",
                        self.algorithm
                    )));
                }
                check_shared(shared)?;
                for d in domains {
                    check_shared(&d.model)?;
                    if d.model.input_dim() != shared.input_dim() {
                        return Err(Error::Shape(format!(
                            "domain model {} has input width {}, shared model {}",
                            d.subject_id,
                            d.model.input_dim(),
                            shared.input_dim()
                        )));
                    }
                }
            }
            CheckpointModel::Knn(m) => {
                let d = m.dim();
                if m.train_features.iter().any(|r| r.len() != d) || m.train_features.len() != m.train_labels.len() {
                    return Err(Error::Shape("inconsistent kNN training set".into()));
                }
            }
            CheckpointModel::Ridge(m) => {
                if let Some(s) = &m.scaler {
                    if s.mean.len() != m.weights.len() || s.scale.len() != m.weights.len() {
                        return Err(Error::Shape("ridge scaler width differs from weights".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_shared(m: &SharedModel) -> Result<()> {
    Network::new(m.theta.layers.clone())?;
    Network::new(m.psi.layers.clone())?;
    if m.theta.output_dim() != m.psi.input_dim() || m.psi.output_dim() != 1 {
        return Err(Error::Shape("theta output does not feed a scalar psi".into()));
    }
    if let Some(w) = &m.w {
        if w.len() != m.theta.input_dim() {
            return Err(Error::Shape(format!(
                "feature weights have {} entries, theta expects {}",
                w.len(),
                m.theta.input_dim()
            )));
        }
    }
    Ok(())
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, ckpt)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => e.into(),
    })?;
    let ckpt: Checkpoint =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line() as u64, e.to_string()))?;
    ckpt.validate()?;
    Ok(ckpt)
}

/// Loads every `*.json` checkpoint in `dir`, sorted by file name.
pub fn load_checkpoint_dir(dir: &Path) -> Result<Vec<(String, Checkpoint)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(dir.to_path_buf()),
        _ => e.into(),
    })?;
    let mut paths = Vec::new();
    for e in entries {
        let p = e?.path();
        if p.extension().is_some_and(|x| x == "json") {
            paths.push(p);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::NotFound(dir.join("*.json")));
    }
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            load_checkpoint(&p).map(|c| (name, c))
        })
        .collect()
}
