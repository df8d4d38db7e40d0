use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::RunConfig;

/// Spatiotemporal ride-demand forecasting.
#[derive(Debug, Parser)]
#[command(name = "demandnet", version)]
struct Cli {
    /// `key = value` run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set seed=3`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CubeArg {
    /// Demand cube file.
    #[arg(long)]
    cube: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bin trip records into a demand cube.
    Ingest {
        #[arg(long)]
        trips: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select the period L and write its decomposition of city-wide demand.
    Decompose {
        #[command(flatten)]
        cube: CubeArg,
        /// Decomposition table (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for plot CSVs.
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// Train a grid network and save a checkpoint.
    Train {
        #[command(flatten)]
        cube: CubeArg,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Per-epoch loss report (default: stdout).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Predict the test range from a checkpoint or a per-region baseline.
    Predict {
        #[command(flatten)]
        cube: CubeArg,
        #[arg(long, conflicts_with = "baseline")]
        checkpoint: Option<PathBuf>,
        /// `ann` or `additive`, fitted on the training range.
        #[arg(long)]
        baseline: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a prediction cube against the truth cube.
    Evaluate {
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// Split regions into non-random (G1) and random (G2) demand.
    Classify {
        #[command(flatten)]
        cube: CubeArg,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// Generate a seeded synthetic demand cube.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Per-region generator parameters as CSV.
        #[arg(long)]
        profiles: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, commands::CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = commands::read_text(path)?;
        cfg.apply_text(&text, &path.display().to_string())?;
    }
    for kv in &cli.overrides {
        cfg.apply_override(kv)?;
    }
    Ok(cfg.resolved()?)
}

fn run(cli: Cli) -> Result<(), commands::CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| commands::CliError::new("config", format!("threads: {e}")))?;
    }
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Ingest { trips, out } => {
            cfg.trips = trips.or(cfg.trips);
            commands::ingest(&cfg, &out)
        }
        Command::Decompose { cube, out, plots } => {
            cfg.cube = cube.cube.or(cfg.cube);
            commands::decompose(&cfg, out.as_deref(), plots.as_deref())
        }
        Command::Train { cube, checkpoint, report } => {
            cfg.cube = cube.cube.or(cfg.cube);
            cfg.checkpoint = checkpoint.or(cfg.checkpoint);
            cfg.report = report.or(cfg.report);
            commands::train(&cfg)
        }
        Command::Predict {
            cube,
            checkpoint,
            baseline,
            out,
        } => {
            cfg.cube = cube.cube.or(cfg.cube);
            cfg.prediction = out.or(cfg.prediction);
            if baseline.is_none() {
                cfg.checkpoint = checkpoint.or(cfg.checkpoint);
            }
            commands::predict(&cfg, baseline.as_deref())
        }
        Command::Evaluate { truth, pred, out, plots } => {
            cfg.cube = truth.or(cfg.cube);
            cfg.prediction = pred.or(cfg.prediction);
            cfg.report = out.or(cfg.report);
            commands::evaluate(&cfg, plots.as_deref())
        }
        Command::Classify { cube, out, plots } => {
            cfg.cube = cube.cube.or(cfg.cube);
            commands::classify(&cfg, out.as_deref(), plots.as_deref())
        }
        Command::Synth { out, profiles } => commands::synth(&cfg, &out, profiles.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category, e.message.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
