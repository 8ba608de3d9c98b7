//! Leave-one-subject-out comparison of all six algorithms with report
//! files written to a temporary directory.
//!
//! Pass a number to change the epoch cap (default 60) for a quicker or
//! fuller run.

use fwet::eval::report::{write_report_csv, write_summary_json, write_table_csv};
use fwet::eval::{loso, Algorithm, LosoConfig};
use fwet::synth::{gen_feature_benchmark, SynthSpec};

fn main() -> fwet::Result<()> {
    let max_epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(60);
    let bench = gen_feature_benchmark(&SynthSpec::default())?;
    let mut cfg = LosoConfig {
        repeats: 1,
        ..LosoConfig::default()
    };
    cfg.train.max_epochs = max_epochs;
    let report = loso(&Algorithm::ALL, &bench.tables, &cfg)?;
    for &a in &report.algorithms {
        println!(
            "{:>7}: rmse {:.4}  cc {:.4}",
            a.name(),
            report.mean_rmse(a).unwrap_or(f64::NAN),
            report.mean_cc(a).unwrap_or(f64::NAN)
        );
    }
    let dir = std::env::temp_dir().join("fwet-loso-example");
    write_report_csv(&dir.join("report.csv"), &report)?;
    write_table_csv(&dir.join("table.csv"), &report)?;
    write_summary_json(&dir.join("summary.json"), &report)?;
    println!("reports in {}", dir.display());
    Ok(())
}
