//! Command-line runs: synthesize data, grid readings, train, forecast,
//! evaluate and sweep encoder lengths.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use distnet::eval::DEFAULT_EPSILON;
use distnet::{Error, Result};

use commands::Split;
use config::RunConfig;

/// Default output root when `--out` is not given.
pub const OUT_ENV: &str = "DISTNET_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "distnet",
    version,
    about = "Station-level air pollution forecasting"
)]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with its manifest.
    Synth {
        #[arg(long, default_value = "tiny")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Shorten or extend the series.
        #[arg(long)]
        hours: Option<usize>,
        #[arg(long)]
        stations: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid the readings of one pollutant over a range of hours.
    Interpolate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "pm25")]
        pollutant: String,
        /// First hour, as an index or timestamp.
        #[arg(long)]
        hour: String,
        #[arg(long, default_value_t = 1)]
        hours: usize,
        /// Output CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model and save its best checkpoint.
    Train(RunArgs),
    /// Forecast every station from one origin hour.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// First forecast hour, as an index or timestamp.
        #[arg(long)]
        at: Option<String>,
        /// Output CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a checkpoint on sliding windows and write the report files.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.1)]
        validation_fraction: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and test one model per encoder length.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "24,48,72,96")]
        lengths: Vec<usize>,
    },
}

/// A config file plus the flags that override it.
#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub pollutant: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub encoder_len: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub train_stride: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    /// Flags over file over defaults.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.manifest {
            c.manifest = Some(v.clone());
        }
        if let Some(v) = &self.model {
            c.kind = v.parse()?;
        }
        if let Some(v) = &self.pollutant {
            c.pollutant = v.parse()?;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.epochs {
            c.train.max_epochs = v;
        }
        if let Some(v) = self.max_steps {
            c.train.max_steps = Some(v);
        }
        if let Some(v) = self.batch_size {
            c.train.batch_size = v;
        }
        if let Some(v) = self.lr {
            c.train.adam.lr = v;
        }
        if let Some(v) = self.encoder_len {
            c.model.encoder_len = v;
        }
        if let Some(v) = self.horizon {
            c.model.horizon = v;
        }
        if let Some(v) = self.train_stride {
            c.train_stride = v;
        }
        if let Some(v) = &self.out {
            c.out = Some(v.clone());
        }
        c.resolve()
    }
}

/// `--out` when given, else `$DISTNET_OUT/<name>`, else `runs/<name>`.
pub fn out_path(given: Option<&Path>, name: &str) -> PathBuf {
    match given {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"))
            .join(name),
    }
}

/// 2 for configuration problems, 3 for data problems, 4 for numeric failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Lookup { .. } | Error::Version(_) | Error::Json(_) => 2,
        Error::Training(_) | Error::NonFinite { .. } => 4,
        _ => 3,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            preset,
            seed,
            hours,
            stations,
            out,
        } => {
            let out = out_path(out.as_deref(), &format!("synth-{preset}-{seed}"));
            commands::synth(&commands::SynthArgs {
                preset,
                seed,
                hours,
                stations,
                out,
            })?;
        }
        Command::Interpolate {
            manifest,
            pollutant,
            hour,
            hours,
            out,
        } => {
            commands::interpolate(&commands::InterpolateArgs {
                manifest,
                pollutant: pollutant.parse()?,
                hour,
                hours,
                out: out_path(out.as_deref(), "interpolated.csv"),
            })?;
        }
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let out = out_path(cfg.out.as_deref(), &format!("train-{}", cfg.kind));
            commands::train_cmd(&cfg, &out)?;
        }
        Command::Predict {
            checkpoint,
            manifest,
            at,
            out,
        } => {
            commands::predict(&commands::PredictArgs {
                checkpoint,
                manifest,
                at,
                out: out_path(out.as_deref(), "predictions.csv"),
            })?;
        }
        Command::Evaluate {
            checkpoint,
            manifest,
            split,
            epsilon,
            validation_fraction,
            out,
        } => {
            commands::evaluate(&commands::EvaluateArgs {
                checkpoint,
                manifest,
                out: out_path(out.as_deref(), "evaluate"),
                split,
                epsilon,
                validation_fraction,
            })?;
        }
        Command::Sweep { run, lengths } => {
            let cfg = run.resolve()?;
            let out = out_path(cfg.out.as_deref(), "sweep");
            commands::sweep(&cfg, &lengths, &out)?;
        }
    }
    Ok(())
}
