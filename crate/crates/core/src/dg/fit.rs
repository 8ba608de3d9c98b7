use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::batching::epoch_batches;
use super::episodic::{agg_step, Episodic, NoopObserver, TrainObserver};
use super::losses::Batch;
use super::model::{DomainModel, SharedModel};
use super::{TrainConfig, Variant};
use crate::error::{Error, Result};
use crate::numcore::Parameters;
use crate::seed::SeedTree;
use crate::sigproc::{feature_index, TrialTable};

/// One line of the training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_rmse: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub variant: Variant,
    /// Shared model restored to the best validation epoch.
    pub model: SharedModel,
    /// Domain models from the best validation epoch (episodic variants only).
    pub domains: Vec<DomainModel>,
    pub trace: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_rmse: Option<f64>,
}

impl FitOutcome {
    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.model.predict_rows(rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Patience-based early stopping on a metric where lower is better.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            stale: 0,
        }
    }

    /// Records the metric of `epoch`. Returns whether it is a new best and
    /// whether training should stop.
    pub fn observe(&mut self, epoch: usize, metric: f64) -> (bool, StopDecision) {
        let improved = match self.best {
            None => true,
            Some((_, b)) => metric < b,
        };
        if improved {
            self.best = Some((epoch, metric));
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        let decision = if self.stale > 0 && self.stale >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        };
        (improved, decision)
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

/// Splits off the earliest `round(frac * n)` trials (at least one) as the
/// validation set; the rest are returned for training.
pub fn split_validation(table: &TrialTable, frac: f64) -> Result<(TrialTable, TrialTable)> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "validation fraction {frac} must lie in (0, 1)"
        )));
    }
    let n = table.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "subject {} needs at least 2 trials to hold out validation data, has {n}",
            table.subject_id
        )));
    }
    let n_val = ((frac * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| table.trial_times[a].total_cmp(&table.trial_times[b]));
    let pick = |idx: &[usize]| TrialTable {
        subject_id: table.subject_id.clone(),
        features: idx.iter().map(|&i| table.features[i].clone()).collect(),
        labels: idx.iter().map(|&i| table.labels[i]).collect(),
        trial_times: idx.iter().map(|&i| table.trial_times[i]).collect(),
    };
    Ok((pick(&order[n_val..]), pick(&order[..n_val])))
}

fn pooled_rmse(model: &SharedModel, sets: &[TrialTable]) -> Result<f64> {
    let mut sq = 0.0;
    let mut count = 0usize;
    for t in sets {
        for (yh, y) in model.predict_rows(&t.features)?.into_iter().zip(&t.labels) {
            sq += (yh - y) * (yh - y);
            count += 1;
        }
    }
    let rmse = (sq / count as f64).sqrt();
    if !rmse.is_finite() {
        return Err(Error::Divergence(format!("validation RMSE is {rmse}")));
    }
    Ok(rmse)
}

fn check_data(data: &[TrialTable]) -> Result<usize> {
    let first = data
        .first()
        .ok_or_else(|| Error::InvalidArgument("no training subjects".into()))?;
    let d = first.dim();
    for t in data {
        t.validate()?;
        if t.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "subject {} has no trials",
                t.subject_id
            )));
        }
        if t.dim() != d {
            return Err(Error::Shape(format!(
                "subject {} has {} features, expected {d}",
                t.subject_id,
                t.dim()
            )));
        }
    }
    Ok(d)
}

pub fn fit(variant: Variant, data: &[TrialTable], cfg: &TrainConfig) -> Result<FitOutcome> {
    fit_with_observer(variant, data, cfg, &mut NoopObserver)
}

/// Trains one of the four variants with early stopping on pooled
/// validation RMSE.
///
/// Every subject contributes its earliest `cfg.val_frac` of trials to the
/// validation set. Pooled variants run shuffled mini-batch epochs over all
/// remaining trials; episodic variants warm up the domain models and then
/// run [`Episodic::epoch`]. The returned model (and domain models) are the
/// ones from the epoch with the lowest validation RMSE.
pub fn fit_with_observer(
    variant: Variant,
    data: &[TrialTable],
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<FitOutcome> {
    cfg.validate()?;
    let d = check_data(data)?;
    if variant.is_episodic() && data.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{variant} needs at least 2 source subjects, got {}",
            data.len()
        )));
    }
    let mut train = Vec::with_capacity(data.len());
    let mut val = Vec::with_capacity(data.len());
    for t in data {
        let (tr, va) = split_validation(t, cfg.val_frac)?;
        train.push(tr);
        val.push(va);
    }
    let seeds = SeedTree::new(cfg.seed);
    let start = Instant::now();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut trace = Vec::new();

    if variant.is_episodic() {
        let mut et = Episodic::new(&train, cfg, variant.uses_fw(), &seeds)?;
        let mut best = (et.shared.clone(), et.domains.clone());
        if cfg.max_epochs > 0 {
            et.warmup()?;
        }
        for epoch in 1..=cfg.max_epochs {
            let train_loss = et.epoch(observer)?;
            let val_rmse = pooled_rmse(&et.shared, &val)?;
            trace.push(EpochRecord {
                epoch,
                train_loss,
                val_rmse,
                wall_time_s: start.elapsed().as_secs_f64(),
            });
            let (improved, decision) = stopper.observe(epoch, val_rmse);
            if improved {
                best = (et.shared.clone(), et.domains.clone());
            }
            if decision == StopDecision::Stop {
                break;
            }
        }
        let (model, domains) = best;
        return Ok(outcome(variant, model, domains, trace, &stopper));
    }

    let mut model = SharedModel::initialized(d, &cfg.arch, variant.uses_fw(), &mut seeds.child("init/shared").rng());
    let mut opt = cfg.optimizer()?;
    let mut rng = seeds.child("batches").rng();
    let pooled: Vec<(usize, usize)> = train
        .iter()
        .enumerate()
        .flat_map(|(s, t)| (0..t.len()).map(move |i| (s, i)))
        .collect();
    let mut best = model.clone();
    for epoch in 1..=cfg.max_epochs {
        let mut loss_sum = 0.0;
        let batches = epoch_batches(pooled.len(), cfg.batch_size, &mut rng);
        let count = batches.len();
        for idx in batches {
            let batch = Batch {
                domain: 0,
                x: idx
                    .iter()
                    .map(|&k| {
                        let (s, i) = pooled[k];
                        train[s].features[i].as_slice()
                    })
                    .collect(),
                y: idx
                    .iter()
                    .map(|&k| {
                        let (s, i) = pooled[k];
                        train[s].labels[i]
                    })
                    .collect(),
            };
            loss_sum += agg_step(&mut model, &mut opt, &batch)?;
        }
        if !model.all_finite() {
            return Err(Error::Divergence("model holds non-finite parameters".into()));
        }
        observer.after_epoch(epoch, &model);
        let val_rmse = pooled_rmse(&model, &val)?;
        trace.push(EpochRecord {
            epoch,
            train_loss: loss_sum / count as f64,
            val_rmse,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        let (improved, decision) = stopper.observe(epoch, val_rmse);
        if improved {
            best = model.clone();
        }
        if decision == StopDecision::Stop {
            break;
        }
    }
    Ok(outcome(variant, best, Vec::new(), trace, &stopper))
}

fn outcome(
    variant: Variant,
    model: SharedModel,
    domains: Vec<DomainModel>,
    trace: Vec<EpochRecord>,
    stopper: &EarlyStopping,
) -> FitOutcome {
    FitOutcome {
        variant,
        model,
        domains,
        trace,
        best_epoch: stopper.best().map(|b| b.0),
        best_val_rmse: stopper.best().map(|b| b.1),
    }
}

/// `softmax(w)` regrouped as one `[theta, alpha]` pair per channel, in the
/// feature layout used by feature extraction.
pub fn export_channel_weights(model: &SharedModel) -> Result<Vec<[f64; 2]>> {
    let soft = model
        .feature_weights()
        .ok_or_else(|| Error::NotApplicable("model has no feature weights".into()))?;
    if soft.len() % 2 != 0 {
        return Err(Error::Shape(format!(
            "{} feature weights cannot be split into two bands",
            soft.len()
        )));
    }
    let channels = soft.len() / 2;
    Ok((0..channels)
        .map(|c| [soft[feature_index(c, 0, channels)], soft[feature_index(c, 1, channels)]])
        .collect())
}
