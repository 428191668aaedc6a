//! `shiftnorm`: train, adapt and evaluate batch-norm networks under
//! synthetic covariate shift, and verify the Wasserstein bounds.

mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shiftnorm::bench::BatchSize;
use shiftnorm::corrupt::CorruptionFamily;
use shiftnorm::ShiftMetric;

use crate::exit::{usage, CliResult, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(
    name = "shiftnorm",
    version,
    about = "Batch-norm adaptation under covariate shift"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand that writes files.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, short, default_value = "out")]
    pub out: PathBuf,
}

/// Where the network and clean data come from.
#[derive(Debug, Clone, Args)]
pub struct Source {
    /// Checkpoint to use; trained from the configuration when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Clean data CSV; generated from the configuration when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the default network and write the checkpoint, log and data.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Replace a checkpoint's batch-norm statistics with target statistics.
    Adapt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Unlabelled target data CSV.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        pseudo_count: Option<f64>,
        /// Re-estimate one batch-norm layer at a time.
        #[arg(long)]
        layerwise: bool,
    },
    /// Top-1 error with and without adaptation on one dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: Source,
        /// Corruption applied to the data first, e.g. `shift:4`.
        #[arg(long)]
        corruption: Option<String>,
        #[arg(long, default_value = "full")]
        batch_size: BatchSize,
        #[arg(long)]
        pseudo_count: Option<f64>,
    },
    /// Batch size x pseudo sample size grid over corruptions, plus the
    /// shift-error scan.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        metric: Option<ShiftMetric>,
    },
    /// Layer-averaged shift against non-adapted error for every corruption.
    Scan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        metric: Option<ShiftMetric>,
    },
    /// Predict errors of test families from a holdout family's shift-error
    /// line.
    Predict {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        holdout: Option<CorruptionFamily>,
        /// Test family; repeat for several.
        #[arg(long = "test")]
        test: Vec<CorruptionFamily>,
        #[arg(long)]
        metric: Option<ShiftMetric>,
    },
    /// Check the expected-distance bounds against Monte Carlo on a grid.
    Bounds {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Mean corruption error of a model table against a baseline table.
    Mce {
        model: PathBuf,
        baseline: PathBuf,
        /// Also write the value and a config snapshot here.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Per-layer shift metrics between a checkpoint's statistics and data.
    Metrics {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// One metric; all four when absent.
        #[arg(long)]
        metric: Option<ShiftMetric>,
    },
}

fn parse_corruption(text: &str) -> CliResult<(CorruptionFamily, u8)> {
    let (family, severity) = text.split_once(':').ok_or_else(|| {
        usage(format!(
            "corruption must look like `family:severity`, got `{text}`"
        ))
    })?;
    let family = family.parse::<CorruptionFamily>().map_err(usage)?;
    let severity = severity
        .parse::<u8>()
        .map_err(|_| usage(format!("bad severity `{severity}`")))?;
    Ok((family, severity))
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("SHIFTNORM_THREADS") else {
        return Ok(());
    };
    let threads = value
        .parse::<usize>()
        .ok()
        .filter(|&t| t >= 1)
        .ok_or_else(|| {
            usage(format!(
                "SHIFTNORM_THREADS must be a positive integer, got `{value}`"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(exit::runtime)
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Train {
            common,
            epochs,
            learning_rate,
        } => commands::train(&common, epochs, learning_rate),
        Command::Adapt {
            common,
            model,
            data,
            pseudo_count,
            layerwise,
        } => commands::adapt(&common, &model, &data, pseudo_count, layerwise),
        Command::Eval {
            common,
            source,
            corruption,
            batch_size,
            pseudo_count,
        } => {
            let corruption = corruption.as_deref().map(parse_corruption).transpose()?;
            commands::eval(&common, &source, corruption, batch_size, pseudo_count)
        }
        Command::Sweep {
            common,
            source,
            metric,
        } => commands::sweep(&common, &source, metric),
        Command::Scan {
            common,
            source,
            metric,
        } => commands::scan(&common, &source, metric),
        Command::Predict {
            common,
            source,
            holdout,
            test,
            metric,
        } => commands::predict(&common, &source, holdout, test, metric),
        Command::Bounds {
            common,
            alpha,
            trials,
        } => commands::bounds(&common, alpha, trials),
        Command::Mce {
            model,
            baseline,
            out,
        } => commands::mce(&model, &baseline, out.as_deref()),
        Command::Metrics {
            common,
            model,
            data,
            metric,
        } => commands::metrics(&common, &model, &data, metric),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
