//! `rest-kit` command-line harness.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use rest_kit::config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// A loaded `--config` file, kept for the manifest.
pub type ConfigFile = Option<(PathBuf, Vec<u8>)>;

#[derive(Debug, Parser)]
#[command(
    name = "rest-kit",
    version,
    about = "Tool-call rewards, region tagging and reweighted policy-gradient experiments"
)]
struct Cli {
    /// Print every configuration key with its default value and exit.
    #[arg(long, global = true)]
    dump_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when omitted. A `.manifest` is written
    /// beside file outputs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score predicted responses against gold tool calls.
    Score {
        /// JSON lines of `{"id", "response"}`.
        #[arg(long)]
        pred: PathBuf,
        /// Dataset file (samples or dialogues).
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        beta_acc: Option<f64>,
        #[arg(long)]
        beta_fmt: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Tag each byte token of raw responses (one per line) with its region.
    Tag {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Flatten dialogues into single-step samples.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Curriculum weight report over a progress grid.
    Weights {
        /// CSV with header `region,entropy` and optional `beta` column.
        #[arg(long)]
        entropy: PathBuf,
        /// Comma-separated progress values in [0, 1].
        #[arg(long, default_value = "0,0.25,0.5,0.75,1")]
        nu_grid: String,
        #[command(flatten)]
        common: Common,
    },
    /// Monte-Carlo variance of uniform, surrogate and optimal weighting.
    Simulate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Train a softmax policy on a synthetic tool-call environment.
    Train {
        #[arg(long, value_parser = ["rest", "grpo"])]
        algo: String,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Environment spec (JSON); the built-in two-context environment when
        /// omitted.
        #[arg(long)]
        env: Option<PathBuf>,
        /// Where to write final parameters.
        #[arg(long)]
        params: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

/// `REST_KIT_SEED` takes precedence over `--seed`.
fn effective_seed(flag: u64) -> CliResult<u64> {
    match std::env::var("REST_KIT_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("REST_KIT_SEED is not an unsigned integer: {s}"))),
        Err(_) => Ok(flag),
    }
}

fn load_config(path: Option<&PathBuf>) -> CliResult<(RunConfig, ConfigFile)> {
    let Some(path) = path else {
        return Ok((RunConfig::default(), None));
    };
    let bytes = commands::read_input(path)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Data(format!("{}: not UTF-8", path.display())))?;
    let cfg =
        RunConfig::parse(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok((cfg, Some((path.clone(), bytes))))
}

fn run(cli: Cli, argv: Vec<String>) -> CliResult<()> {
    if cli.dump_config {
        print!("{}", RunConfig::default().dump());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(CliError::Usage(
            "a subcommand is required (score, tag, decompose, weights, simulate, train); see --help".into(),
        ));
    };
    match command {
        Command::Score {
            pred,
            gold,
            nu,
            beta_acc,
            beta_fmt,
            common,
        } => {
            let (mut cfg, cfg_file) = load_config(common.config.as_ref())?;
            if let Some(b) = beta_acc {
                cfg.reward.beta_acc = b;
            }
            if let Some(b) = beta_fmt {
                cfg.reward.beta_fmt = b;
            }
            cfg.reward.validate().map_err(CliError::Usage)?;
            let nu = nu.unwrap_or(0.0);
            if !(0.0..=1.0).contains(&nu) {
                return Err(CliError::Usage("--nu must lie in [0, 1]".into()));
            }
            commands::score(&pred, &gold, nu, &cfg, cfg_file, &common, argv)
        }
        Command::Tag { input, common } => commands::tag(&input, &common, argv),
        Command::Decompose { input, common } => commands::decompose(&input, &common, argv),
        Command::Weights {
            entropy,
            nu_grid,
            common,
        } => {
            let grid = nu_grid
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|v| (0.0..=1.0).contains(v))
                })
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| CliError::Usage(format!("invalid --nu-grid `{nu_grid}`")))?;
            let (cfg, cfg_file) = load_config(common.config.as_ref())?;
            commands::weights(&entropy, &grid, &cfg, cfg_file, &common, argv)
        }
        Command::Simulate { seed, common } => {
            let seed = effective_seed(seed)?;
            let (cfg, cfg_file) = load_config(common.config.as_ref())?;
            commands::simulate(seed, &cfg, cfg_file, &common, argv)
        }
        Command::Train {
            algo,
            steps,
            seed,
            env,
            params,
            common,
        } => {
            let seed = effective_seed(seed)?;
            if steps == 0 {
                return Err(CliError::Usage("--steps must be at least 1".into()));
            }
            let (cfg, cfg_file) = load_config(common.config.as_ref())?;
            let algo = rest_kit::objective::Algorithm::parse(&algo).expect("validated by clap");
            commands::train(
                algo,
                steps,
                seed,
                env.as_deref(),
                params.as_deref(),
                &cfg,
                cfg_file,
                &common,
                argv,
            )
        }
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli, argv.into_iter().skip(1).collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
