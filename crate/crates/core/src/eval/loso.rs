use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{pearson_cc, rmse};
use crate::baselines::{knn_predict, ridge_fit_with, ridge_predict, BaselineConfig, KnnModel, RidgeModel};
use crate::dg::{fit, EpochRecord, FitOutcome, TrainConfig, Variant};
use crate::error::{Error, Result};
use crate::seed::SeedTree;
use crate::sigproc::TrialTable;

/// Every regressor the evaluation harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Algorithm {
    Knn,
    Rr,
    Neural(Variant),
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Knn,
        Algorithm::Rr,
        Algorithm::Neural(Variant::Agg),
        Algorithm::Neural(Variant::FwAgg),
        Algorithm::Neural(Variant::Et),
        Algorithm::Neural(Variant::Fwet),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Knn => "knn",
            Algorithm::Rr => "rr",
            Algorithm::Neural(v) => v.name(),
        }
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            Algorithm::Neural(v) => Some(v),
            _ => None,
        }
    }

    /// Whether repeats can differ at all.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Algorithm::Neural(_))
    }

    pub fn parse_list(list: &str) -> Result<Vec<Algorithm>> {
        let algs: Vec<Algorithm> = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?;
        if algs.is_empty() {
            return Err(Error::Usage("no algorithms given".into()));
        }
        let mut seen = BTreeSet::new();
        for a in &algs {
            if !seen.insert(*a) {
                return Err(Error::Usage(format!("algorithm {a} listed twice")));
            }
        }
        Ok(algs)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Algorithm::ALL.into_iter().find(|a| a.name() == key).ok_or_else(|| {
            let names: Vec<&str> = Algorithm::ALL.iter().map(|a| a.name()).collect();
            Error::Usage(format!(
                "unknown algorithm {s:?}; expected one of {{{}}}",
                names.join(", ")
            ))
        })
    }
}

impl From<Algorithm> for String {
    fn from(a: Algorithm) -> String {
        a.name().to_string()
    }
}

impl TryFrom<String> for Algorithm {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// A fitted model of any kind.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Knn(KnnModel),
    Ridge(RidgeModel),
    Neural(Box<FitOutcome>),
}

impl TrainedModel {
    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        match self {
            TrainedModel::Knn(m) => rows.iter().map(|r| knn_predict(m, r)).collect(),
            TrainedModel::Ridge(m) => rows.iter().map(|r| ridge_predict(m, r)).collect(),
            TrainedModel::Neural(f) => f.predict_rows(rows),
        }
    }

    pub fn fit_outcome(&self) -> Option<&FitOutcome> {
        match self {
            TrainedModel::Neural(f) => Some(f),
            _ => None,
        }
    }
}

/// Trains `alg` on `train` with the given per-cell seed.
pub fn train_algorithm(
    alg: Algorithm,
    train: &[TrialTable],
    cfg: &TrainConfig,
    baselines: &BaselineConfig,
) -> Result<TrainedModel> {
    let pooled_x = || {
        train
            .iter()
            .flat_map(|t| t.features.iter().cloned())
            .collect::<Vec<_>>()
    };
    let pooled_y = || train.iter().flat_map(|t| t.labels.iter().copied()).collect::<Vec<_>>();
    match alg {
        Algorithm::Knn => Ok(TrainedModel::Knn(KnnModel::fit(
            &pooled_x(),
            &pooled_y(),
            baselines.knn_k,
            baselines.standardize,
        )?)),
        Algorithm::Rr => Ok(TrainedModel::Ridge(ridge_fit_with(
            &pooled_x(),
            &pooled_y(),
            baselines.ridge_alpha,
            baselines.standardize,
        )?)),
        Algorithm::Neural(v) => Ok(TrainedModel::Neural(Box::new(fit(v, train, cfg)?))),
    }
}

#[derive(Debug, Clone)]
pub struct LosoConfig {
    pub train: TrainConfig,
    pub baselines: BaselineConfig,
    pub repeats: usize,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    /// Root seed. Each cell trains with the seed of
    /// `loso/<target>/r<repeat>/<algorithm>` under this root.
    pub seed: u64,
    /// Keep fitted models in the report (needed for checkpoints).
    pub keep_models: bool,
}

impl Default for LosoConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            baselines: BaselineConfig::default(),
            repeats: 5,
            workers: 0,
            seed: 0,
            keep_models: false,
        }
    }
}

impl LosoConfig {
    pub fn cell_seed(&self, target: &str, repeat: usize, alg: Algorithm) -> SeedTree {
        SeedTree::new(self.seed)
            .child("loso")
            .child(target)
            .child(format!("r{repeat}"))
            .child(alg.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "message", rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct LosoCell {
    pub algorithm: Algorithm,
    pub target: String,
    pub repeat: usize,
    pub status: CellStatus,
    pub rmse: Option<f64>,
    /// `None` when the correlation is undefined (constant predictions).
    pub cc: Option<f64>,
    pub best_val_rmse: Option<f64>,
    pub trace: Vec<EpochRecord>,
    pub seed_lineage: Vec<String>,
    pub train_subjects: Vec<String>,
    pub model: Option<TrainedModel>,
    /// Set when training failed because the model diverged.
    pub diverged: bool,
}

impl LosoCell {
    pub fn is_ok(&self) -> bool {
        self.status == CellStatus::Ok
    }
}

#[derive(Debug, Clone)]
pub struct LosoReport {
    pub algorithms: Vec<Algorithm>,
    pub subjects: Vec<String>,
    pub repeats: usize,
    /// Ordered by algorithm (as given), target (as given), repeat.
    pub cells: Vec<LosoCell>,
}

impl LosoReport {
    pub fn cells_for(&self, alg: Algorithm) -> impl Iterator<Item = &LosoCell> {
        self.cells.iter().filter(move |c| c.algorithm == alg)
    }

    pub fn failed(&self) -> impl Iterator<Item = &LosoCell> {
        self.cells.iter().filter(|c| !c.is_ok())
    }

    /// Mean RMSE over successful cells.
    pub fn mean_rmse(&self, alg: Algorithm) -> Option<f64> {
        mean(self.cells_for(alg).filter_map(|c| c.rmse))
    }

    pub fn mean_cc(&self, alg: Algorithm) -> Option<f64> {
        mean(self.cells_for(alg).filter_map(|c| c.cc))
    }

    /// Mean over repeats of the RMSE for one target subject.
    pub fn target_mean_rmse(&self, alg: Algorithm, target: &str) -> Option<f64> {
        mean(
            self.cells_for(alg)
                .filter(|c| c.target == target)
                .filter_map(|c| c.rmse),
        )
    }

    pub fn target_mean_cc(&self, alg: Algorithm, target: &str) -> Option<f64> {
        mean(self.cells_for(alg).filter(|c| c.target == target).filter_map(|c| c.cc))
    }

    /// RMSE of each repeat averaged over targets, i.e. one value per run of
    /// the whole protocol.
    pub fn repeat_mean_rmse(&self, alg: Algorithm) -> Vec<Option<f64>> {
        (0..self.repeats)
            .map(|r| mean(self.cells_for(alg).filter(|c| c.repeat == r).filter_map(|c| c.rmse)))
            .collect()
    }
}

pub(crate) fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Leave-one-subject-out evaluation.
///
/// For each target subject every algorithm is trained on the remaining
/// subjects and scored on the target's full session; this is repeated
/// `cfg.repeats` times with distinct per-cell seeds. Cells run in parallel
/// but the report order and contents do not depend on the worker count.
/// Training failures are recorded in the failing cell and do not abort the
/// run.
pub fn loso(algorithms: &[Algorithm], data: &[TrialTable], cfg: &LosoConfig) -> Result<LosoReport> {
    if data.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "leave-one-subject-out needs at least 3 subjects, got {}",
            data.len()
        )));
    }
    if algorithms.is_empty() {
        return Err(Error::Usage("no algorithms given".into()));
    }
    if cfg.repeats == 0 {
        return Err(Error::Configuration("repeats must be >= 1".into()));
    }
    let mut ids = BTreeSet::new();
    for t in data {
        t.validate()?;
        if !ids.insert(t.subject_id.as_str()) {
            return Err(Error::InvalidArgument(format!(
                "subject id {} appears twice",
                t.subject_id
            )));
        }
    }
    cfg.train.validate()?;

    let jobs: Vec<(Algorithm, usize, usize)> = algorithms
        .iter()
        .flat_map(|&a| (0..data.len()).flat_map(move |t| (0..cfg.repeats).map(move |r| (a, t, r))))
        .collect();
    let run = || -> Vec<LosoCell> { jobs.par_iter().map(|&(a, t, r)| run_cell(a, t, r, data, cfg)).collect() };
    let cells = if cfg.workers == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Configuration(format!("thread pool: {e}")))?
            .install(run)
    };
    Ok(LosoReport {
        algorithms: algorithms.to_vec(),
        subjects: data.iter().map(|t| t.subject_id.clone()).collect(),
        repeats: cfg.repeats,
        cells,
    })
}

fn run_cell(alg: Algorithm, target: usize, repeat: usize, data: &[TrialTable], cfg: &LosoConfig) -> LosoCell {
    let test = &data[target];
    let train: Vec<TrialTable> = data
        .iter()
        .enumerate()
        .filter(|&(s, _)| s != target)
        .map(|(_, t)| t.clone())
        .collect();
    let seeds = cfg.cell_seed(&test.subject_id, repeat, alg);
    let mut cell = LosoCell {
        algorithm: alg,
        target: test.subject_id.clone(),
        repeat,
        status: CellStatus::Ok,
        rmse: None,
        cc: None,
        best_val_rmse: None,
        trace: Vec::new(),
        seed_lineage: seeds.lineage(),
        train_subjects: train.iter().map(|t| t.subject_id.clone()).collect(),
        model: None,
        diverged: false,
    };
    if train.iter().any(|t| t.subject_id == test.subject_id) {
        cell.status = CellStatus::Failed("target subject present in training data".into());
        return cell;
    }
    let train_cfg = TrainConfig {
        seed: seeds.seed(),
        ..cfg.train.clone()
    };
    let outcome = train_algorithm(alg, &train, &train_cfg, &cfg.baselines).and_then(|model| {
        let pred = model.predict_rows(&test.features)?;
        Ok((model, pred))
    });
    match outcome {
        Ok((model, pred)) => {
            match rmse(&pred, &test.labels) {
                Ok(r) if r.is_finite() => cell.rmse = Some(r),
                Ok(r) => {
                    cell.status = CellStatus::Failed(format!("test RMSE is {r}"));
                    cell.diverged = true;
                }
                Err(e) => cell.status = CellStatus::Failed(e.to_string()),
            }
            cell.cc = pearson_cc(&pred, &test.labels).ok();
            if let Some(f) = model.fit_outcome() {
                cell.best_val_rmse = f.best_val_rmse;
                cell.trace = f.trace.clone();
            }
            if cfg.keep_models {
                cell.model = Some(model);
            }
        }
        Err(e) => {
            cell.diverged = matches!(e, Error::Divergence(_));
            cell.status = CellStatus::Failed(e.to_string());
        }
    }
    cell
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dg::Architecture;
    use crate::synth::{gen_feature_benchmark, SynthSpec};

    fn data() -> Vec<TrialTable> {
        gen_feature_benchmark(&SynthSpec {
            subjects: 3,
            trials: 40,
            dim: 6,
            informative: vec![0, 3],
            ..SynthSpec::default()
        })
        .unwrap()
        .tables
    }

    fn quick() -> LosoConfig {
        LosoConfig {
            train: TrainConfig {
                max_epochs: 3,
                arch: Architecture {
                    theta_hidden: vec![4],
                    psi_hidden: vec![4],
                },
                ..TrainConfig::default()
            },
            repeats: 2,
            workers: 1,
            ..LosoConfig::default()
        }
    }

    #[test]
    fn names_round_trip_and_unknown_lists_choices() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        let err = "svm".parse::<Algorithm>().unwrap_err().to_string();
        assert!(err.contains("knn, rr, agg, fw-agg, et, fwet"), "{err}");
        assert!(Algorithm::parse_list("knn,knn").is_err());
    }

    #[test]
    fn cell_count_and_baseline_repeats() {
        let d = data();
        let rep = loso(
            &[Algorithm::Knn, Algorithm::Rr, Algorithm::Neural(Variant::Agg)],
            &d,
            &quick(),
        )
        .unwrap();
        assert_eq!(rep.cells.len(), 3 * 3 * 2);
        for alg in [Algorithm::Knn, Algorithm::Rr] {
            for t in &rep.subjects {
                let v: Vec<f64> = rep
                    .cells_for(alg)
                    .filter(|c| &c.target == t)
                    .map(|c| c.rmse.unwrap())
                    .collect();
                assert_eq!(v[0].to_bits(), v[1].to_bits());
            }
        }
        assert!(rep.cells.iter().all(|c| !c.train_subjects.contains(&c.target)));
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let d = data();
        let algs = [Algorithm::Neural(Variant::Fwet)];
        let a = loso(&algs, &d, &quick()).unwrap();
        let b = loso(&algs, &d, &LosoConfig { workers: 3, ..quick() }).unwrap();
        let key = |r: &LosoReport| -> Vec<(String, usize, u64)> {
            r.cells
                .iter()
                .map(|c| (c.target.clone(), c.repeat, c.rmse.unwrap().to_bits()))
                .collect()
        };
        assert_eq!(key(&a), key(&b));
    }

    #[test]
    fn too_few_subjects() {
        let d = data();
        assert!(matches!(
            loso(&[Algorithm::Knn], &d[..2], &quick()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn failures_are_recorded_per_cell() {
        let mut d = data();
        for t in &mut d {
            t.features.truncate(3);
            t.labels.truncate(3);
            t.trial_times.truncate(3);
        }
        let cfg = LosoConfig {
            baselines: BaselineConfig {
                knn_k: 10,
                ..BaselineConfig::default()
            },
            ..quick()
        };
        let rep = loso(&[Algorithm::Knn, Algorithm::Rr], &d, &cfg).unwrap();
        assert!(rep.cells_for(Algorithm::Knn).all(|c| !c.is_ok()));
        assert!(rep.cells_for(Algorithm::Rr).all(LosoCell::is_ok));
        assert_eq!(rep.mean_rmse(Algorithm::Knn), None);
    }
}
