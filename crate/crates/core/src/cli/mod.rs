//! The subcommands behind the `fwet` binary.
//!
//! Each command takes a [`RunConfig`] plus paths, writes its outputs and
//! the effective configuration into an output location, and returns a
//! library error on failure. [`exit_code`] maps errors to process exit
//! codes.

mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub use config::{CheckpointPolicy, RunConfig, Tau0Mode};

use crate::checkpoint::{load_checkpoint_dir, save_checkpoint, Checkpoint, CheckpointModel};
use crate::dg::{export_channel_weights, Variant};
use crate::error::{Error, Result};
use crate::eval::report::{
    write_cross_csv, write_gap_csv, write_perturbation_csv, write_report_csv, write_summary_json, write_table_csv,
    write_trace_jsonl, write_weights_csv,
};
use crate::eval::{
    cross_apply, loso, perturb_analysis, rmse, train_domain_regressors, val_test_gap, Algorithm, CrossRow, GapRow,
    LosoReport, PerturbPoint, PerturbationCurve,
};
use crate::seed::SeedTree;
use crate::sigproc::io::{read_event_log, read_recording, read_trial_tables, write_trial_table};
use crate::sigproc::{
    bandpass, decimate, di, extract_features, individualized_tau0, reaction_times, rereference, smooth_di, EpochConfig,
    TrialTable,
};
use crate::synth::gen_feature_benchmark;

pub const RUN_CONFIG_FILE: &str = "run_config.toml";

/// 0 ok, 1 usage or configuration, 2 data, 3 training divergence.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Usage(_) | Error::Configuration(_) => 1,
        Error::Divergence(_) => 3,
        _ => 2,
    }
}

/// Raw recording and event log to a trial table.
///
/// The recording is band-passed, decimated, re-referenced to the earlobes
/// and reduced to band-power rows. Each event's drowsiness index is held
/// from its deviation onset until the next event, sampled at every row time
/// and smoothed with a trailing moving average.
pub fn cmd_extract(
    raw_path: &Path,
    events_path: &Path,
    subject_id: &str,
    cfg: &RunConfig,
    out_path: &Path,
) -> Result<TrialTable> {
    let tau0_mode = cfg.tau0_mode()?;
    let recording = read_recording(raw_path)?;
    let log = read_event_log(events_path)?;
    if log.is_empty() {
        return Err(Error::MalformedLog(format!(
            "{} holds no events",
            events_path.display()
        )));
    }
    let filtered = bandpass(&recording, cfg.band_low_hz, cfg.band_high_hz)?;
    let reduced = rereference(&decimate(&filtered, cfg.decimate)?)?;
    let epoch = EpochConfig {
        epoch_s: cfg.epoch_s,
        stride_s: cfg.stride_s,
        ..EpochConfig::default()
    };
    let features = extract_features(&reduced, &epoch)?;

    let taus = reaction_times(&log)?;
    let tau0 = match tau0_mode {
        Tau0Mode::Fixed(v) => v,
        Tau0Mode::Percentile5 => individualized_tau0(&taus)?,
    };
    let event_di: Vec<f64> = taus.iter().map(|&t| di(t, tau0)).collect();
    let held: Vec<f64> = features
        .times_s
        .iter()
        .map(|&t| {
            let k = log.deviation_onsets.partition_point(|&d| d <= t);
            event_di[k.saturating_sub(1)]
        })
        .collect();
    let labels = smooth_di(&held, cfg.smooth_window_s, cfg.stride_s);
    let table = TrialTable::new(subject_id, features.rows, labels, features.times_s)?;
    create_parent(out_path)?;
    write_trial_table(out_path, &table)?;
    cfg.save(&out_path.with_extension("run_config.toml"))?;
    Ok(table)
}

/// Writes one trial table per synthetic subject (`s01.csv`, ...), the
/// ground-truth descriptor and the run configuration.
pub fn cmd_synth(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let spec = cfg.synth_spec();
    let bench = gen_feature_benchmark(&spec)?;
    std::fs::create_dir_all(out_dir)?;
    let mut paths = Vec::with_capacity(bench.tables.len());
    for table in &bench.tables {
        let p = out_dir.join(format!("{}.csv", table.subject_id));
        write_trial_table(&p, table)?;
        paths.push(p);
    }
    std::fs::write(
        out_dir.join("descriptor.json"),
        serde_json::to_string_pretty(&bench.descriptor)? + "\n",
    )?;
    cfg.save(&out_dir.join(RUN_CONFIG_FILE))?;
    Ok(paths)
}

/// Reads every `*.csv` trial table in `dir`, in file-name order.
pub fn load_data_dir(dir: &Path) -> Result<Vec<TrialTable>> {
    let entries = std::fs::read_dir(dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(dir.to_path_buf()),
        _ => e.into(),
    })?;
    let mut paths = Vec::new();
    for e in entries {
        let p = e?.path();
        if p.extension().is_some_and(|x| x == "csv") {
            paths.push(p);
        }
    }
    paths.sort();
    let mut tables = Vec::new();
    for p in &paths {
        tables.extend(read_trial_tables(p)?);
    }
    if tables.is_empty() {
        return Err(Error::InsufficientData(format!("no trial tables in {}", dir.display())));
    }
    Ok(tables)
}

/// Leave-one-subject-out evaluation of the configured algorithms.
///
/// Writes `report.csv` (long format), `table.csv` (targets by
/// algorithms), `summary.json`, `run_config.toml`, one trace per neural
/// cell under `traces/` and checkpoints under `checkpoints/`. Output is
/// written even when cells fail; the failure is then returned as an error.
pub fn cmd_loso(data_dir: &Path, cfg: &RunConfig, out_dir: &Path) -> Result<LosoReport> {
    let algorithms = cfg.algorithm_list()?;
    let loso_cfg = cfg.loso_config()?;
    let data = load_data_dir(data_dir)?;
    let report = loso(&algorithms, &data, &loso_cfg)?;

    std::fs::create_dir_all(out_dir)?;
    write_report_csv(&out_dir.join("report.csv"), &report)?;
    write_table_csv(&out_dir.join("table.csv"), &report)?;
    write_summary_json(&out_dir.join("summary.json"), &report)?;
    cfg.save(&out_dir.join(RUN_CONFIG_FILE))?;
    for cell in &report.cells {
        let stem = format!("{}_t{}_r{}", cell.algorithm.name(), cell.target, cell.repeat);
        if cell.algorithm.variant().is_some() && !cell.trace.is_empty() {
            write_trace_jsonl(&out_dir.join("traces").join(format!("{stem}.jsonl")), &cell.trace)?;
        }
        let wanted = match cfg.checkpoints {
            CheckpointPolicy::All => true,
            CheckpointPolicy::Neural => cell.algorithm.variant().is_some(),
            CheckpointPolicy::None => false,
        };
        if wanted && cell.model.is_some() {
            let path =
                out_dir
                    .join("checkpoints")
                    .join(Checkpoint::file_name(cell.algorithm, &cell.target, cell.repeat));
            save_checkpoint(&path, &Checkpoint::from_cell(cell)?)?;
        }
    }

    let failed: Vec<_> = report.failed().collect();
    if failed.is_empty() {
        return Ok(report);
    }
    let lines: Vec<String> = failed
        .iter()
        .map(|c| {
            let msg = match &c.status {
                crate::eval::CellStatus::Failed(m) => m.as_str(),
                crate::eval::CellStatus::Ok => "",
            };
            format!("  {} target {} repeat {}: {msg}", c.algorithm, c.target, c.repeat)
        })
        .collect();
    let summary = format!(
        "{} of {} cells failed:\n{}",
        failed.len(),
        report.cells.len(),
        lines.join("\n")
    );
    if failed.iter().any(|c| c.diverged) {
        Err(Error::Divergence(summary))
    } else {
        Err(Error::FailedCells(summary))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Analysis {
    Perturb,
    CrossApply,
    Weights,
    ValGap,
}

impl std::str::FromStr for Analysis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "perturb" => Ok(Analysis::Perturb),
            "crossapply" => Ok(Analysis::CrossApply),
            "weights" => Ok(Analysis::Weights),
            "valgap" => Ok(Analysis::ValGap),
            other => Err(Error::Usage(format!(
                "unknown analysis {other:?}; expected one of {{perturb, crossapply, weights, valgap}}"
            ))),
        }
    }
}

impl Analysis {
    pub fn file_name(self) -> &'static str {
        match self {
            Analysis::Perturb => "perturbation.csv",
            Analysis::CrossApply => "crossapply.csv",
            Analysis::Weights => "weights.csv",
            Analysis::ValGap => "valgap.csv",
        }
    }
}

struct Loaded {
    name: String,
    ckpt: Checkpoint,
}

fn subject<'a>(data: &'a [TrialTable], id: &str) -> Result<&'a TrialTable> {
    data.iter()
        .find(|t| t.subject_id == id)
        .ok_or_else(|| Error::InsufficientData(format!("subject {id} is missing from the data directory")))
}

fn target_of(l: &Loaded) -> Result<&str> {
    l.ckpt
        .target_subject
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument(format!("checkpoint {} names no target subject", l.name)))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Runs one analysis over every checkpoint in `checkpoint_dir` (optionally
/// only those of `only`) against the trial tables in `data_dir`, and writes
/// a plot-ready CSV into `out_dir`. Results of checkpoints sharing an
/// algorithm are averaged.
pub fn cmd_analyze(
    checkpoint_dir: &Path,
    data_dir: &Path,
    which: Analysis,
    only: Option<Algorithm>,
    cfg: &RunConfig,
    out_dir: &Path,
) -> Result<PathBuf> {
    let loaded: Vec<Loaded> = load_checkpoint_dir(checkpoint_dir)?
        .into_iter()
        .map(|(name, ckpt)| Loaded { name, ckpt })
        .filter(|l| only.is_none_or(|a| l.ckpt.algorithm == a))
        .collect();
    if loaded.is_empty() {
        return Err(Error::NotFound(
            checkpoint_dir.join(format!("{}_*.json", only.map_or("*", |a| a.name()))),
        ));
    }
    let data = load_data_dir(data_dir)?;
    let seeds = SeedTree::new(cfg.seed).child("analyze");
    let mut algorithms: Vec<Algorithm> = Vec::new();
    for l in &loaded {
        if !algorithms.contains(&l.ckpt.algorithm) {
            algorithms.push(l.ckpt.algorithm);
        }
    }
    let neural: Vec<&Loaded> = loaded.iter().filter(|l| l.ckpt.shared_model().is_some()).collect();
    let out = out_dir.join(which.file_name());

    match which {
        Analysis::Perturb => {
            if neural.is_empty() {
                return Err(Error::NotApplicable(
                    "parameter perturbation needs neural checkpoints".into(),
                ));
            }
            let mut per_alg: BTreeMap<usize, Vec<PerturbationCurve>> = BTreeMap::new();
            for l in &neural {
                let test = subject(&data, target_of(l)?)?;
                let model = l.ckpt.shared_model().expect("filtered");
                let curve = perturb_analysis(
                    model,
                    std::slice::from_ref(test),
                    &cfg.sigmas,
                    cfg.draws,
                    &seeds.child("perturb").child(&l.name),
                )?;
                let pos = algorithms.iter().position(|&a| a == l.ckpt.algorithm).expect("listed");
                per_alg.entry(pos).or_default().push(curve);
            }
            let curves: Vec<(String, PerturbationCurve)> = per_alg
                .into_iter()
                .map(|(pos, curves)| {
                    let points = (0..cfg.sigmas.len())
                        .map(|i| PerturbPoint {
                            sigma: cfg.sigmas[i],
                            rmse: mean(curves.iter().map(|c| c.points[i].rmse)).expect("non-empty"),
                            cc: mean(curves.iter().filter_map(|c| c.points[i].cc)),
                            draws: curves.iter().map(|c| c.points[i].draws).sum(),
                        })
                        .collect();
                    (algorithms[pos].name().to_string(), PerturbationCurve { points })
                })
                .collect();
            write_perturbation_csv(&out, &curves)?;
        }
        Analysis::CrossApply => {
            if neural.is_empty() {
                return Err(Error::NotApplicable(
                    "cross-subject application needs neural checkpoints".into(),
                ));
            }
            let train_cfg = cfg.train_config()?;
            let mut per_alg: BTreeMap<usize, Vec<CrossRow>> = BTreeMap::new();
            for l in &neural {
                let CheckpointModel::Neural { shared, domains, .. } = &l.ckpt.model else {
                    unreachable!("filtered to neural checkpoints")
                };
                let tables: Vec<TrialTable> = l
                    .ckpt
                    .train_subjects
                    .iter()
                    .map(|id| subject(&data, id).cloned())
                    .collect::<Result<_>>()?;
                let regressors = if domains.len() == tables.len() && !domains.is_empty() {
                    domains.iter().map(|d| d.model.psi.clone()).collect()
                } else {
                    train_domain_regressors(
                        shared,
                        &tables,
                        &train_cfg,
                        cfg.regressor_epochs,
                        &seeds.child("crossapply").child(&l.name),
                    )?
                };
                let pos = algorithms.iter().position(|&a| a == l.ckpt.algorithm).expect("listed");
                per_alg
                    .entry(pos)
                    .or_default()
                    .extend(cross_apply(shared, &regressors, &tables)?);
            }
            let rows: Vec<(String, Vec<CrossRow>)> = per_alg
                .into_iter()
                .map(|(pos, rows)| {
                    let order: Vec<&String> = data
                        .iter()
                        .map(|t| &t.subject_id)
                        .filter(|id| rows.iter().any(|r| &r.subject == *id))
                        .collect();
                    let merged = order
                        .into_iter()
                        .map(|id| {
                            let mine: Vec<&CrossRow> = rows.iter().filter(|r| &r.subject == id).collect();
                            CrossRow {
                                subject: id.clone(),
                                rmse: mean(mine.iter().map(|r| r.rmse)).expect("non-empty"),
                                cc: mean(mine.iter().filter_map(|r| r.cc)),
                                pairs: mine.iter().map(|r| r.pairs).sum(),
                            }
                        })
                        .collect();
                    (algorithms[pos].name().to_string(), merged)
                })
                .collect();
            write_cross_csv(&out, &rows)?;
        }
        Analysis::Weights => {
            let fw: Vec<&&Loaded> = neural
                .iter()
                .filter(|l| l.ckpt.algorithm.variant().is_some_and(Variant::uses_fw))
                .collect();
            if fw.is_empty() {
                let names: Vec<&str> = algorithms.iter().map(|a| a.name()).collect();
                return Err(Error::NotApplicable(format!(
                    "channel weights need feature-weighted checkpoints, found {}",
                    names.join(", ")
                )));
            }
            let mut per_alg: BTreeMap<usize, Vec<Vec<[f64; 2]>>> = BTreeMap::new();
            for l in &fw {
                let map = export_channel_weights(l.ckpt.shared_model().expect("filtered"))?;
                let pos = algorithms.iter().position(|&a| a == l.ckpt.algorithm).expect("listed");
                per_alg.entry(pos).or_default().push(map);
            }
            let channels = per_alg.values().next().map_or(0, |m| m[0].len());
            let names: Vec<String> = (1..=channels).map(|c| format!("ch{c:02}")).collect();
            let maps: Vec<(String, Vec<[f64; 2]>)> = per_alg
                .into_iter()
                .map(|(pos, maps)| {
                    let n = maps.len() as f64;
                    let avg = (0..channels)
                        .map(|c| {
                            [
                                maps.iter().map(|m| m[c][0]).sum::<f64>() / n,
                                maps.iter().map(|m| m[c][1]).sum::<f64>() / n,
                            ]
                        })
                        .collect();
                    (algorithms[pos].name().to_string(), avg)
                })
                .collect();
            write_weights_csv(&out, &names, &maps)?;
        }
        Analysis::ValGap => {
            let mut rows: Vec<GapRow> = Vec::new();
            for l in &neural {
                let CheckpointModel::Neural {
                    shared, best_val_rmse, ..
                } = &l.ckpt.model
                else {
                    unreachable!("filtered to neural checkpoints")
                };
                let Some(val) = *best_val_rmse else { continue };
                let target = target_of(l)?;
                let test = subject(&data, target)?;
                let test_rmse = rmse(&shared.predict_rows(&test.features)?, &test.labels)?;
                rows.push(GapRow {
                    algorithm: l.ckpt.algorithm.name().to_string(),
                    target: target.to_string(),
                    repeat: l.ckpt.repeat.unwrap_or(0),
                    val_rmse: val,
                    test_rmse,
                    gap: val_test_gap(val, test_rmse),
                });
            }
            if rows.is_empty() {
                return Err(Error::NotApplicable(
                    "validation gaps need neural checkpoints with a recorded validation score".into(),
                ));
            }
            write_gap_csv(&out, &rows)?;
        }
    }
    cfg.save(&out_dir.join(RUN_CONFIG_FILE))?;
    Ok(out)
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}
