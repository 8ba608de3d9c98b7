use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use fwet::cli::{cmd_analyze, cmd_extract, cmd_loso, cmd_synth, exit_code, Analysis, RunConfig};
use fwet::eval::Algorithm;

#[derive(Parser)]
#[command(name = "fwet", version, about = "Cross-subject EEG drowsiness regression")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for LOSO cells (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Flat TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (extract) or directory (other commands).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Config override as key=value; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Raw recording + event log -> trial table.
    Extract {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        events: PathBuf,
        /// Subject id; defaults to the recording's file stem.
        #[arg(long)]
        subject: Option<String>,
        /// `fixed:<value>` or `percentile5`.
        #[arg(long)]
        tau0: Option<String>,
    },
    /// Generate a synthetic multi-subject benchmark.
    Synth,
    /// Leave-one-subject-out evaluation.
    Loso {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated subset of knn, rr, agg, fw-agg, et, fwet.
        #[arg(long)]
        algorithms: Option<String>,
    },
    /// Post-hoc analyses on saved checkpoints.
    Analyze {
        #[arg(long)]
        checkpoints: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// perturb, crossapply, weights or valgap.
        #[arg(long)]
        which: String,
        /// Restrict to one algorithm's checkpoints.
        #[arg(long)]
        algorithm: Option<String>,
    },
}

fn config(g: &Global, extra: Vec<String>) -> fwet::Result<RunConfig> {
    let mut overrides = g.set.clone();
    overrides.extend(extra);
    if let Some(s) = g.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(w) = g.workers {
        overrides.push(format!("workers={w}"));
    }
    RunConfig::load(g.config.as_deref(), &overrides)
}

fn quoted(key: &str, value: &str) -> String {
    format!("{key}={}", toml::Value::String(value.to_string()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Extract {
            raw,
            events,
            subject,
            tau0,
        } => {
            let cfg = config(g, tau0.iter().map(|t| quoted("tau0", t)).collect())?;
            let out = g.out.clone().context("extract needs --out <file>").map_err(usage)?;
            let id = subject.unwrap_or_else(|| raw.file_stem().unwrap_or_default().to_string_lossy().into_owned());
            let table = cmd_extract(&raw, &events, &id, &cfg, &out)?;
            println!(
                "{}: {} trials x {} features -> {}",
                id,
                table.len(),
                table.dim(),
                out.display()
            );
        }
        Command::Synth => {
            let cfg = config(g, Vec::new())?;
            let out = g.out.clone().unwrap_or_else(|| PathBuf::from("synth"));
            let files = cmd_synth(&cfg, &out)?;
            println!("wrote {} subject files to {}", files.len(), out.display());
        }
        Command::Loso { data, algorithms } => {
            let extra = algorithms
                .map(|a| {
                    let list: Vec<String> = a.split(',').map(|s| s.trim().to_string()).collect();
                    format!("algorithms={}", toml::Value::from(list))
                })
                .into_iter()
                .collect();
            let cfg = config(g, extra)?;
            let out = g.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let report = cmd_loso(&data, &cfg, &out)?;
            for &a in &report.algorithms {
                let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
                println!(
                    "{a:>7}  rmse {}  cc {}",
                    fmt(report.mean_rmse(a)),
                    fmt(report.mean_cc(a))
                );
            }
            println!("report written to {}", out.display());
        }
        Command::Analyze {
            checkpoints,
            data,
            which,
            algorithm,
        } => {
            let cfg = config(g, Vec::new())?;
            let which: Analysis = which.parse()?;
            let only = algorithm.map(|a| a.parse::<Algorithm>()).transpose()?;
            let out = g.out.clone().unwrap_or_else(|| PathBuf::from("analysis"));
            let path = cmd_analyze(&checkpoints, &data, which, only, &cfg, &out)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn usage(e: anyhow::Error) -> anyhow::Error {
    fwet::Error::Usage(e.to_string()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<fwet::Error>().map_or(2, exit_code);
            ExitCode::from(code as u8)
        }
    }
}
