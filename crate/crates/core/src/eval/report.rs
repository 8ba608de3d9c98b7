//! File emission for evaluation results.
//!
//! Every writer produces deterministic bytes for deterministic inputs:
//! rows follow report order and floats use the shortest round-trip form.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::analysis::{CrossRow, GapRow, PerturbationCurve};
use super::loso::{Algorithm, CellStatus, LosoReport};
use super::stats::{dunn_fdr, DunnPair};
use crate::dg::EpochRecord;
use crate::error::{Error, Result};

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Long format: one row per (algorithm, target, repeat).
pub fn write_report_csv(path: &Path, report: &LosoReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["algorithm", "target", "repeat", "rmse", "cc", "status"])?;
    for c in &report.cells {
        let status = match &c.status {
            CellStatus::Ok => "ok",
            CellStatus::Failed(_) => "failed",
        };
        w.write_record([
            c.algorithm.name().to_string(),
            c.target.clone(),
            c.repeat.to_string(),
            opt(c.rmse),
            opt(c.cc),
            status.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Targets as rows, per-algorithm mean RMSE and CC over repeats as columns,
/// with a final `mean` row.
pub fn write_table_csv(path: &Path, report: &LosoReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["target".to_string()];
    for a in &report.algorithms {
        header.push(format!("{a}_rmse"));
    }
    for a in &report.algorithms {
        header.push(format!("{a}_cc"));
    }
    w.write_record(&header)?;
    for t in &report.subjects {
        let mut row = vec![t.clone()];
        row.extend(report.algorithms.iter().map(|&a| opt(report.target_mean_rmse(a, t))));
        row.extend(report.algorithms.iter().map(|&a| opt(report.target_mean_cc(a, t))));
        w.write_record(&row)?;
    }
    let mut row = vec!["mean".to_string()];
    row.extend(report.algorithms.iter().map(|&a| opt(report.mean_rmse(a))));
    row.extend(report.algorithms.iter().map(|&a| opt(report.mean_cc(a))));
    w.write_record(&row)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct AlgorithmSummary {
    name: String,
    mean_rmse: Option<f64>,
    mean_cc: Option<f64>,
    cells_ok: usize,
    cells_failed: usize,
}

#[derive(Debug, Serialize)]
struct PairSummary {
    a: String,
    b: String,
    z: f64,
    p_raw: f64,
    p_adj: f64,
}

#[derive(Debug, Serialize)]
struct FailedCell {
    algorithm: String,
    target: String,
    repeat: usize,
    message: String,
}

#[derive(Debug, Serialize)]
struct Summary {
    subjects: Vec<String>,
    repeats: usize,
    algorithms: Vec<AlgorithmSummary>,
    significance_rmse: Option<Vec<PairSummary>>,
    significance_cc: Option<Vec<PairSummary>>,
    failed_cells: Vec<FailedCell>,
}

fn significance(
    report: &LosoReport,
    metric: impl Fn(&super::loso::LosoCell) -> Option<f64>,
) -> Option<Vec<PairSummary>> {
    let groups: Vec<Vec<f64>> = report
        .algorithms
        .iter()
        .map(|&a| report.cells_for(a).filter_map(&metric).collect())
        .collect();
    let result = dunn_fdr(&groups).ok()?;
    let name = |k: usize| report.algorithms[k].name().to_string();
    Some(
        result
            .pairs
            .into_iter()
            .map(|DunnPair { a, b, z, p_raw, p_adj }| PairSummary {
                a: name(a),
                b: name(b),
                z,
                p_raw,
                p_adj,
            })
            .collect(),
    )
}

/// Per-algorithm means, Dunn/BH adjusted p-values over all successful cells,
/// and the list of failed cells.
pub fn write_summary_json(path: &Path, report: &LosoReport) -> Result<()> {
    let summary = Summary {
        subjects: report.subjects.clone(),
        repeats: report.repeats,
        algorithms: report
            .algorithms
            .iter()
            .map(|&a| AlgorithmSummary {
                name: a.name().to_string(),
                mean_rmse: report.mean_rmse(a),
                mean_cc: report.mean_cc(a),
                cells_ok: report.cells_for(a).filter(|c| c.is_ok()).count(),
                cells_failed: report.cells_for(a).filter(|c| !c.is_ok()).count(),
            })
            .collect(),
        significance_rmse: significance(report, |c| c.rmse),
        significance_cc: significance(report, |c| c.cc),
        failed_cells: report
            .failed()
            .map(|c| FailedCell {
                algorithm: c.algorithm.name().to_string(),
                target: c.target.clone(),
                repeat: c.repeat,
                message: match &c.status {
                    CellStatus::Failed(m) => m.clone(),
                    CellStatus::Ok => String::new(),
                },
            })
            .collect(),
    };
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &summary)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Line-delimited JSON, one [`EpochRecord`] per line.
pub fn write_trace_jsonl(path: &Path, trace: &[EpochRecord]) -> Result<()> {
    let mut w = create(path)?;
    for r in trace {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_jsonl(path: &Path) -> Result<Vec<EpochRecord>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => e.into(),
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(path, i as u64 + 1, e.to_string()))?);
    }
    Ok(out)
}

/// Plot-ready perturbation curves: one row per (algorithm, sigma).
pub fn write_perturbation_csv(path: &Path, curves: &[(String, PerturbationCurve)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["algorithm", "sigma", "rmse", "cc", "draws"])?;
    for (name, curve) in curves {
        for p in &curve.points {
            w.write_record([
                name.clone(),
                p.sigma.to_string(),
                p.rmse.to_string(),
                opt(p.cc),
                p.draws.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Plot-ready cross-subject bars: one row per (algorithm, subject).
pub fn write_cross_csv(path: &Path, rows: &[(String, Vec<CrossRow>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["algorithm", "subject", "rmse", "cc", "pairs"])?;
    for (name, list) in rows {
        for r in list {
            w.write_record([
                name.clone(),
                r.subject.clone(),
                r.rmse.to_string(),
                opt(r.cc),
                r.pairs.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_gap_csv(path: &Path, rows: &[GapRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["algorithm", "target", "repeat", "val_rmse", "test_rmse", "gap"])?;
    for r in rows {
        w.write_record([
            r.algorithm.clone(),
            r.target.clone(),
            r.repeat.to_string(),
            r.val_rmse.to_string(),
            r.test_rmse.to_string(),
            r.gap.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Channel importance maps: one row per (algorithm, channel) with the theta
/// and alpha weight of that channel.
pub fn write_weights_csv(path: &Path, channel_names: &[String], maps: &[(String, Vec<[f64; 2]>)]) -> Result<()> {
    if let Some((name, m)) = maps.iter().find(|(_, m)| m.len() != channel_names.len()) {
        return Err(Error::Shape(format!(
            "{name}: {} weight pairs for {} channels",
            m.len(),
            channel_names.len()
        )));
    }
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["algorithm", "channel", "theta", "alpha"])?;
    for (alg, map) in maps {
        for (name, [t, a]) in channel_names.iter().zip(map) {
            w.write_record([alg.clone(), name.clone(), t.to_string(), a.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parses the first column of a long-format report back into algorithm
/// names, in order of first appearance.
pub fn report_algorithms(path: &Path) -> Result<Vec<Algorithm>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out: Vec<Algorithm> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let name = rec
            .get(0)
            .ok_or_else(|| Error::parse(path, i as u64 + 2, "empty row"))?;
        let alg: Algorithm = name
            .parse()
            .map_err(|e: Error| Error::parse(path, i as u64 + 2, e.to_string()))?;
        if !out.contains(&alg) {
            out.push(alg);
        }
    }
    Ok(out)
}
