//! `ngc`: simulate, estimate, tune, benchmark, diagnose and export.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use ngc_core::diagnostics::{run_diagnostics, DiagnoseConfig};
use ngc_core::experiment::{config_panel, fit_at, run_experiment, tune_and_refit, ExperimentConfig, Failure};
use ngc_core::ngc::{export_network, NetworkFormat, NgcEstimate};
use ngc_core::panel::write_panel_csv;
use ngc_core::selection::write_trace_csv;

#[derive(Parser)]
#[command(name = "ngc", version, about = "Grouped network Granger causality")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the base seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (default: the config's, else `out/<name>`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a model and a panel from the config's design.
    Simulate(Common),
    /// Fit every configured method at a fixed penalty level.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda: f64,
    },
    /// Tune every configured method on a replicate split and refit.
    Tune(Common),
    /// Run all replications and write metric tables.
    Bench(Common),
    /// Condition diagnostics for a model or design.
    Diagnose(Common),
    /// Convert an estimate JSON to a network file.
    Export {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long, default_value = "dot")]
        format: String,
        /// Per-lag multigraph instead of the aggregated network.
        #[arg(long)]
        per_lag: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

/// Configuration problems exit with 1, partial failures with 2.
enum Outcome {
    Done,
    Partial(Vec<Failure>),
}

fn set_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring threads")?;
    }
    Ok(())
}

fn load_experiment(common: &Common) -> anyhow::Result<(ExperimentConfig, PathBuf)> {
    let mut config = ExperimentConfig::load(&common.config)
        .with_context(|| format!("reading {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let out = common
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| Path::new("out").join(&config.name));
    Ok((config, out))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_failures(out: &Path, failures: &[Failure]) -> anyhow::Result<()> {
    write(&out.join("failures.json"), &serde_json::to_string_pretty(failures)?)
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Simulate(common) => {
            set_threads(common.threads)?;
            let (config, out) = load_experiment(&common)?;
            if config.design.is_none() {
                bail!("simulate needs a design");
            }
            let (panel, _, model) = config_panel(&config)?;
            std::fs::create_dir_all(&out)?;
            model.expect("simulated").save(out.join("model.json"))?;
            write_panel_csv(&panel, out.join("panel.csv"))?;
            println!("wrote {}", out.display());
            Ok(Outcome::Done)
        }
        Command::Estimate { common, lambda } => {
            set_threads(common.threads)?;
            let (config, out) = load_experiment(&common)?;
            let (panel, groups, _) = config_panel(&config)?;
            std::fs::create_dir_all(&out)?;
            let mut failures = Vec::new();
            for &method in &config.methods {
                match fit_at(method, &panel, &groups, lambda, &config) {
                    Ok(est) => est.save(out.join(format!("estimate_{}.json", method.name())))?,
                    Err(e) => failures.push(Failure {
                        replication: None,
                        method: Some(method),
                        stage: "fit".into(),
                        message: e.to_string(),
                    }),
                }
            }
            finish(&out, failures)
        }
        Command::Tune(common) => {
            set_threads(common.threads)?;
            let (config, out) = load_experiment(&common)?;
            let (panel, groups, _) = config_panel(&config)?;
            std::fs::create_dir_all(&out)?;
            let split_seed = ngc_core::experiment::replication_seeds(config.seed, 0)[2];
            let mut failures = Vec::new();
            for &method in &config.methods {
                match tune_and_refit(method, &panel, &groups, &config, split_seed, &config.effective_thresholds()) {
                    Ok((lambda, est, trace)) => {
                        est.save(out.join(format!("estimate_{}.json", method.name())))?;
                        write_trace_csv(&trace, out.join(format!("trace_{}.csv", method.name())))?;
                        println!("{}: lambda={lambda:.6} edges={}", method.name(), est.num_nonzero());
                    }
                    Err(e) => failures.push(Failure {
                        replication: None,
                        method: Some(method),
                        stage: "tune".into(),
                        message: e.to_string(),
                    }),
                }
            }
            finish(&out, failures)
        }
        Command::Bench(common) => {
            set_threads(common.threads)?;
            let (config, out) = load_experiment(&common)?;
            let summary = run_experiment(&config, &out)?;
            if let Ok(text) = std::fs::read_to_string(out.join("summary.txt")) {
                print!("{text}");
            }
            if summary.failures.is_empty() {
                Ok(Outcome::Done)
            } else {
                Ok(Outcome::Partial(summary.failures))
            }
        }
        Command::Diagnose(common) => {
            set_threads(common.threads)?;
            let mut config = DiagnoseConfig::load(&common.config)
                .with_context(|| format!("reading {}", common.config.display()))?;
            if let Some(seed) = common.seed {
                config.diagnostics.seed = seed;
            }
            let (model, t_len) = config.resolve()?;
            let out = common.out.unwrap_or_else(|| PathBuf::from("out/diagnostics"));
            std::fs::create_dir_all(&out)?;
            let bundle = run_diagnostics(&model, t_len, &config.diagnostics)?;
            write(&out.join("diagnostics.json"), &bundle.to_json()?)?;
            println!("{}", serde_json::to_string_pretty(&bundle.flags)?);
            Ok(Outcome::Done)
        }
        Command::Export { estimate, format, per_lag, out, threads } => {
            set_threads(threads)?;
            let format: NetworkFormat = format.parse()?;
            let est = NgcEstimate::load(&estimate)?;
            let text = export_network(&est, format, !per_lag);
            match out {
                Some(path) => write(&path, &text)?,
                None => print!("{text}"),
            }
            Ok(Outcome::Done)
        }
    }
}

fn finish(out: &Path, failures: Vec<Failure>) -> anyhow::Result<Outcome> {
    if failures.is_empty() {
        Ok(Outcome::Done)
    } else {
        write_failures(out, &failures)?;
        Ok(Outcome::Partial(failures))
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial(failures)) => {
            for f in &failures {
                eprintln!("failed: {} {:?} {}: {}", f.stage, f.method, f.replication.map_or(String::new(), |r| r.to_string()), f.message);
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
