use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::loso::{mean, LosoReport};
use super::{pearson_cc, rmse};
use crate::dg::{epoch_batches, EpochRecord, SharedModel, TrainConfig};
use crate::error::{Error, Result};
use crate::numcore::{sgd_step, Network, Parameters};
use crate::seed::SeedTree;
use crate::sigproc::TrialTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbPoint {
    pub sigma: f64,
    /// Mean RMSE over the noise draws.
    pub rmse: f64,
    /// Mean CC over the draws where it is defined.
    pub cc: Option<f64>,
    pub draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCurve {
    pub points: Vec<PerturbPoint>,
}

/// Copy of `model` with i.i.d. `N(0, sigma^2)` noise added to every
/// parameter, feature weights included.
pub fn perturb_parameters<R: Rng + ?Sized>(model: &SharedModel, sigma: f64, rng: &mut R) -> SharedModel {
    let mut out = model.clone();
    if sigma == 0.0 {
        return out;
    }
    let noise = Normal::new(0.0, sigma).expect("sigma checked by caller");
    for t in out.tensors_mut() {
        for v in t.iter_mut() {
            *v += noise.sample(rng);
        }
    }
    out
}

fn score(model: &SharedModel, test: &[TrialTable]) -> Result<(f64, Option<f64>)> {
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for t in test {
        pred.extend(model.predict_rows(&t.features)?);
        truth.extend_from_slice(&t.labels);
    }
    Ok((rmse(&pred, &truth)?, pearson_cc(&pred, &truth).ok()))
}

/// Degradation of a trained model under Gaussian parameter noise.
///
/// For every `sigma` the model is perturbed `draws` times (draw `k` uses the
/// seed stream `sigma-<index>/draw-<k>` under `seeds`) and the metrics on
/// `test` are averaged. `sigma = 0` evaluates the unperturbed model once.
pub fn perturb_analysis(
    model: &SharedModel,
    test: &[TrialTable],
    sigmas: &[f64],
    draws: usize,
    seeds: &SeedTree,
) -> Result<PerturbationCurve> {
    if test.is_empty() {
        return Err(Error::InsufficientData("no test data".into()));
    }
    if draws == 0 {
        return Err(Error::InvalidArgument("need at least one noise draw".into()));
    }
    for w in sigmas.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::InvalidArgument("noise levels must be increasing".into()));
        }
    }
    if sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(Error::InvalidArgument("noise levels must be >= 0".into()));
    }
    let mut points = Vec::with_capacity(sigmas.len());
    for (i, &sigma) in sigmas.iter().enumerate() {
        if sigma == 0.0 {
            let (r, c) = score(model, test)?;
            points.push(PerturbPoint {
                sigma,
                rmse: r,
                cc: c,
                draws: 1,
            });
            continue;
        }
        let mut rmses = Vec::with_capacity(draws);
        let mut ccs = Vec::with_capacity(draws);
        for k in 0..draws {
            let mut rng = seeds.child(format!("sigma-{i}")).child(format!("draw-{k}")).rng();
            let noisy = perturb_parameters(model, sigma, &mut rng);
            let (r, c) = score(&noisy, test)?;
            rmses.push(r);
            ccs.extend(c);
        }
        points.push(PerturbPoint {
            sigma,
            rmse: mean(rmses.into_iter()).expect("draws >= 1"),
            cc: mean(ccs.into_iter()),
            draws,
        });
    }
    Ok(PerturbationCurve { points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossRow {
    pub subject: String,
    /// Mean over foreign regressors.
    pub rmse: f64,
    pub cc: Option<f64>,
    pub pairs: usize,
}

/// Applies every foreign regressor to each subject's transformed features:
/// for subject `s`, the metrics of `psi_j(theta(x_hat_s))` averaged over
/// `j != s`. `regressors[j]` belongs to `data[j]`.
pub fn cross_apply(shared: &SharedModel, regressors: &[Network], data: &[TrialTable]) -> Result<Vec<CrossRow>> {
    if data.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "cross-subject application needs at least 2 subjects, got {}",
            data.len()
        )));
    }
    if regressors.len() != data.len() {
        return Err(Error::Shape(format!(
            "{} regressors for {} subjects",
            regressors.len(),
            data.len()
        )));
    }
    for r in regressors {
        if r.input_dim() != shared.theta.output_dim() || r.output_dim() != 1 {
            return Err(Error::Shape("regressor does not fit the feature transform".into()));
        }
    }
    data.iter()
        .enumerate()
        .map(|(s, table)| {
            let hidden: Vec<Vec<f64>> = table
                .features
                .iter()
                .map(|x| shared.transform(x))
                .collect::<Result<_>>()?;
            let mut rmses = Vec::new();
            let mut ccs = Vec::new();
            for (j, psi) in regressors.iter().enumerate() {
                if j == s {
                    continue;
                }
                let pred: Vec<f64> = hidden.iter().map(|h| psi.predict_unchecked(h)[0]).collect();
                rmses.push(rmse(&pred, &table.labels)?);
                ccs.extend(pearson_cc(&pred, &table.labels).ok());
            }
            Ok(CrossRow {
                subject: table.subject_id.clone(),
                pairs: rmses.len(),
                rmse: mean(rmses.into_iter()).expect("at least one foreign subject"),
                cc: mean(ccs.into_iter()),
            })
        })
        .collect()
}

/// Fits one regressor per subject on top of the frozen feature transform
/// (and feature weights) of `shared`, using plain mini-batch SGD for
/// `epochs` passes over that subject's data.
pub fn train_domain_regressors(
    shared: &SharedModel,
    data: &[TrialTable],
    cfg: &TrainConfig,
    epochs: usize,
    seeds: &SeedTree,
) -> Result<Vec<Network>> {
    cfg.validate()?;
    data.iter()
        .enumerate()
        .map(|(s, table)| {
            let hidden: Vec<Vec<f64>> = table
                .features
                .iter()
                .map(|x| shared.transform(x))
                .collect::<Result<_>>()?;
            let seeds = seeds.child(format!("regressor-{s}"));
            let mut psi = cfg.arch.psi();
            psi.init_uniform(&mut seeds.child("init").rng());
            let mut opt = cfg.optimizer()?;
            let mut rng = seeds.child("batches").rng();
            for _ in 0..epochs {
                for idx in epoch_batches(hidden.len(), cfg.batch_size, &mut rng) {
                    let scale = 1.0 / idx.len() as f64;
                    let mut grads = psi.zeros_like();
                    for &i in &idx {
                        let cache = psi.forward(&hidden[i])?;
                        let d = [2.0 * (cache.output()[0] - table.labels[i]) * scale];
                        psi.backward(&cache, &d, Some(&mut grads), false)?;
                    }
                    sgd_step(&mut psi, &grads, &mut opt)?;
                }
            }
            Ok(psi)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub algorithm: String,
    pub target: String,
    pub repeat: usize,
    pub val_rmse: f64,
    pub test_rmse: f64,
    pub gap: f64,
}

/// `test_rmse - best_val_rmse`.
pub fn val_test_gap(best_val_rmse: f64, test_rmse: f64) -> f64 {
    test_rmse - best_val_rmse
}

/// Lowest validation RMSE recorded in a training trace.
pub fn best_val_from_trace(trace: &[EpochRecord]) -> Option<f64> {
    trace.iter().map(|r| r.val_rmse).min_by(f64::total_cmp)
}

/// One row per successful neural cell of a report.
pub fn val_test_gaps(report: &LosoReport) -> Vec<GapRow> {
    report
        .cells
        .iter()
        .filter_map(|c| {
            let val = best_val_from_trace(&c.trace)?;
            let test = c.rmse?;
            Some(GapRow {
                algorithm: c.algorithm.name().to_string(),
                target: c.target.clone(),
                repeat: c.repeat,
                val_rmse: val,
                test_rmse: test,
                gap: val_test_gap(val, test),
            })
        })
        .collect()
}
