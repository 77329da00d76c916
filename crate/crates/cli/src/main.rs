//! `gdlab`: run trajectories, convergence-time sweeps and the lemma suite.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gdlab_core::config::{figure1_config, figure2_config, load_config, ExperimentConfig, Parallelism};
use gdlab_core::experiments::{run_experiment, run_trial, summarize};
use gdlab_core::io::{prepare_output_dir, save_records, write_json, write_manifest, Manifest};
use gdlab_core::plot::{export_figure1, export_figure2};
use gdlab_core::theory::run_suite;
use gdlab_core::trajectory::TrajectoryRecorder;

#[derive(Parser, Debug)]
#[command(name = "gdlab", version, about = "Gradient descent on deep linear networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Record one trajectory and write its CSV and SVG.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Grid cell to simulate (0-based).
        #[arg(long, default_value_t = 0)]
        cell: usize,
        /// Trial index whose random stream seeds the start point.
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Run every (scheme, k, d, trial) cell and write trial, summary and chart files.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
    /// Run the lemma suite and print its JSON report.
    Verify {
        /// Master seed.
        #[arg(long, env = "GDLAB_SEED", default_value_t = 42)]
        seed: u64,
        /// Also write `verify.json` into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Depth-7 scalar trajectory from a near-one start with target −1.
    PaperFig1 {
        #[command(flatten)]
        common: Common,
    },
    /// Matrix convergence-time sweep, d = 25, target −I.
    PaperFig2 {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, env = "GDLAB_SEED")]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads, or "auto".
    #[arg(long)]
    parallelism: Option<String>,
    /// Iteration cap, e.g. 1e7.
    #[arg(long)]
    cap: Option<f64>,
    /// Trials per cell.
    #[arg(long)]
    trials: Option<u64>,
    /// Drop grid cells deeper than this.
    #[arg(long)]
    k_max: Option<usize>,
}

/// Exit codes: 0 success, 1 configuration or runtime error, 2 failed lemma check.
enum Failure {
    Error(anyhow::Error),
    LemmaFailed,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Error(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("{first} (see `gdlab --help`)");
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::LemmaFailed) => ExitCode::from(2),
        Err(Failure::Error(e)) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("error: {}", chain.join(": "));
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::Simulate { common, cell, trial } => {
            let config = resolve(&common, None)?;
            simulate(&config, cell, trial, "simulate")?;
        }
        Command::Experiment { common } => {
            let config = resolve(&common, None)?;
            experiment(&config, "experiment")?;
        }
        Command::PaperFig1 { common } => {
            let config = resolve(&common, Some(figure1_config()))?;
            simulate(&config, 0, 0, "paper-fig1")?;
        }
        Command::PaperFig2 { common } => {
            let base = figure2_config(common.k_max.unwrap_or(5), 10_000_000, 10);
            let config = resolve(&common, Some(base))?;
            experiment(&config, "paper-fig2")?;
        }
        Command::Verify { seed, out } => {
            let report = run_suite(seed).context("lemma suite")?;
            let text = serde_json::to_string_pretty(&report).context("serializing report")?;
            println!("{text}");
            if let Some(dir) = out {
                prepare_output_dir(&dir).with_context(|| format!("output directory {} is not writable", dir.display()))?;
                write_json(&report, &dir.join("verify.json")).context("writing verify.json")?;
            }
            if !report.pass {
                let failed: Vec<&str> =
                    report.reports.values().filter(|r| !r.pass).map(|r| r.lemma_id.as_str()).collect();
                eprintln!("failed checks: {}", failed.join(", "));
                return Err(Failure::LemmaFailed);
            }
        }
    }
    Ok(())
}

/// Loads the config (or takes the preset), applies flag overrides and validates.
fn resolve(common: &Common, preset: Option<ExperimentConfig>) -> Result<ExperimentConfig> {
    let mut config = match (&common.config, preset) {
        (Some(path), _) => load_config(path).with_context(|| format!("config {}", path.display()))?,
        (None, Some(preset)) => preset,
        (None, None) => bail!("--config PATH is required for this command"),
    };
    if let Some(seed) = common.seed {
        config.master_seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    if let Some(p) = &common.parallelism {
        config.parallelism = parse_parallelism(p)?;
    }
    if let Some(cap) = common.cap {
        if !(cap >= 1.0 && cap.fract() == 0.0 && cap <= u64::MAX as f64) {
            bail!("--cap must be a whole number >= 1, got {cap}");
        }
        config.plan.max_iters = cap as u64;
    }
    if let Some(trials) = common.trials {
        config.trials = trials;
    }
    if let Some(k_max) = common.k_max {
        config.grid.retain(|c| c.k <= k_max);
    }
    config.validate()?;
    Ok(config)
}

fn parse_parallelism(s: &str) -> Result<Parallelism> {
    if s == "auto" {
        return Ok(Parallelism::Auto);
    }
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(Parallelism::Threads(n)),
        _ => Err(anyhow!("--parallelism expects \"auto\" or a thread count >= 1, got {s:?}")),
    }
}

fn output_dir(config: &ExperimentConfig) -> Result<&Path> {
    let dir = config.output_dir.as_path();
    prepare_output_dir(dir).with_context(|| format!("output directory {} is not writable", dir.display()))?;
    Ok(dir)
}

fn simulate(config: &ExperimentConfig, cell_index: usize, trial: u64, command: &str) -> Result<()> {
    let cell = config
        .grid
        .get(cell_index)
        .ok_or_else(|| anyhow!("--cell {cell_index} is out of range; the grid has {} cells", config.grid.len()))?;
    let dir = output_dir(config)?;
    let mut recorder = TrajectoryRecorder::new(config.thinning);
    let record = run_trial(config, cell, trial, &mut recorder);
    write_manifest(&Manifest::new(command, config)?, dir)?;
    let files = export_figure1(recorder.snapshots(), cell.k, dir)?;
    println!(
        "{} k={} d={}: {} after {} iterations, objective {}",
        record.scheme_id, record.k, record.d, record.status, record.iterations, record.final_objective
    );
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn experiment(config: &ExperimentConfig, command: &str) -> Result<()> {
    let dir = output_dir(config)?;
    let records = run_experiment(config)?;
    let summary = summarize(&records);
    let mut files = vec![save_records(&records, dir)?];
    files.extend(export_figure2(&summary, dir)?);
    files.push(write_manifest(&Manifest::new(command, config)?, dir)?);
    for row in &summary.rows {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
        println!(
            "{:<18} k={:<2} d={:<3} converged {}/{}  mean ln(iters) {}  std {}",
            row.scheme,
            row.k,
            row.d,
            row.n_converged,
            row.n_trials,
            fmt(row.mean_log_iters),
            fmt(row.std_log_iters)
        );
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
