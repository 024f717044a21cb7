//! Command-line front end for the forecasting library.
//!
//! Exit codes follow the usual convention: 0 on success, 2 for usage and
//! configuration problems (bad flags, invalid config files, missing input
//! files, shape conflicts between a checkpoint and the requested task), and
//! 1 for runtime failures (unreadable data, corrupt checkpoints, divergence).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use aefin::data::GapPolicy;
use aefin::error::Error;

use commands::{DecomposeArgs, TrainOverrides};

#[derive(Parser)]
#[command(
    name = "aefin",
    version,
    about = "Frequency-decomposed forecasting for non-stationary series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a window of a CSV series into stable and non-stable parts.
    Decompose {
        /// Input CSV: header row naming channels, one row per time step.
        #[arg(long)]
        input: PathBuf,
        /// Window length in rows.
        #[arg(long, default_value_t = 96)]
        window: usize,
        /// First row of the window.
        #[arg(long, default_value_t = 0)]
        start: usize,
        /// Number of dominant frequency bins.
        #[arg(long)]
        k: Option<usize>,
        /// Well-known dataset name supplying a default for --k.
        #[arg(long)]
        dataset_name: Option<String>,
        /// Directory for stable.csv, non_stable.csv and bins.txt.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Check that the two parts sum back to the input within 1e-9.
        #[arg(long)]
        verify: bool,
        /// How to treat empty cells: `reject` or `forward-fill`.
        #[arg(long, default_value = "reject")]
        gap_policy: String,
    },
    /// Train across seeds per a TOML config; writes checkpoints, logs and
    /// metrics.json into the output directory.
    Train {
        /// TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's seed list (comma separated).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Override the config's epoch cap.
        #[arg(long)]
        max_epochs: Option<usize>,
        /// Override the config's batch size.
        #[arg(long)]
        batch_size: Option<usize>,
        /// Override the config's dominant-bin count.
        #[arg(long)]
        k: Option<usize>,
        /// Also train the no-attention, no-fan and plain-loss variants.
        #[arg(long)]
        ablation: bool,
    },
    /// Evaluate a checkpoint on the test split of a config's data.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// TOML run configuration naming the data.
        #[arg(long)]
        config: PathBuf,
        /// Directory for eval_metrics.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Forecast one horizon past the end of a CSV series.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input CSV with at least the model's lookback rows.
        #[arg(long)]
        input: PathBuf,
        /// Output CSV path for the forecast.
        #[arg(long)]
        out: PathBuf,
        /// How to treat empty cells: `reject` or `forward-fill`.
        #[arg(long, default_value = "reject")]
        gap_policy: String,
    },
    /// Compare analytic gradients with finite differences, one line per
    /// operation; fails above 1e-4 relative error.
    Gradcheck {
        /// Problem size: `tiny` or `small`.
        #[arg(long, default_value = "tiny")]
        size: String,
    },
    /// Print the parameter count: the total first, then each component.
    Params {
        /// Optional TOML run configuration; defaults describe the standard
        /// 96-step model.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a synthetic series CSV from a TOML spec.
    Synth {
        /// TOML generator spec (n, channels, trend_slope, seasonal, ...).
        #[arg(long)]
        spec: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_gap(s: &str) -> Result<GapPolicy, Error> {
    config::parse_gap_policy(s).ok_or_else(|| {
        Error::config(format!(
            "--gap-policy must be `reject` or `forward-fill`, got {s:?}"
        ))
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Decompose {
            input,
            window,
            start,
            k,
            dataset_name,
            out,
            verify,
            gap_policy,
        } => commands::cmd_decompose(&DecomposeArgs {
            input,
            window,
            start,
            k,
            dataset_name,
            out,
            verify,
            gap_policy: parse_gap(&gap_policy)?,
        }),
        Command::Train {
            config,
            out,
            seeds,
            max_epochs,
            batch_size,
            k,
            ablation,
        } => commands::cmd_train(
            &config,
            &TrainOverrides {
                out,
                seeds,
                max_epochs,
                batch_size,
                k,
                ablation,
            },
        ),
        Command::Evaluate {
            checkpoint,
            config,
            out,
        } => commands::cmd_evaluate(&checkpoint, &config, out.as_deref()),
        Command::Predict {
            checkpoint,
            input,
            out,
            gap_policy,
        } => commands::cmd_predict(&checkpoint, &input, &out, parse_gap(&gap_policy)?),
        Command::Gradcheck { size } => commands::cmd_gradcheck(&size),
        Command::Params { config } => commands::cmd_params(config.as_deref()),
        Command::Synth { spec, out } => commands::cmd_synth(&spec, &out),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::ShapeMismatch(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
