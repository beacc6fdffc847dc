//! The `lopd` command line: `verify`, `pipeline`, `ablate`, `dynamics`.
//!
//! Exit codes: 0 when every check passes, 1 when a check or property fails,
//! 2 on configuration or feasibility errors.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

pub use commands::{cmd_ablate, cmd_dynamics, cmd_pipeline, cmd_verify, write_atomic, Outcome};
pub use config::{
    AblateSection, DataSection, ExperimentConfig, InstanceSection, Overrides, SftMode, SftSection, TrainSection,
    VerifySection,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "lopd",
    version,
    about = "Offline and online on-policy distillation over tabular policies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact identity and bound checks on seeded random instances.
    Verify(CommonArgs),
    /// SFT, dataset precomputation and offline training end to end.
    Pipeline {
        #[command(flatten)]
        common: CommonArgs,
        /// Also train an online student from the same reference.
        #[arg(long)]
        compare_online: bool,
    },
    /// Teacher-consistency grid for both trainers.
    Ablate(CommonArgs),
    /// Per-step importance-weight and KL traces.
    Dynamics(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML experiment file; omitted keys use built-in defaults.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed [default: 0].
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "lopd-out")]
    pub out: PathBuf,
    /// Print the JSON result instead of the text summary.
    #[arg(long)]
    pub json: bool,
    /// Enumeration cap on V^T [default: 10000000].
    #[arg(long, value_name = "N")]
    pub cap: Option<u64>,
    /// Advantage clip threshold; `inf` disables clipping [default: 10].
    #[arg(long, value_name = "F")]
    pub tau: Option<f64>,
    /// Learning rate [default: 0.5].
    #[arg(long, value_name = "F")]
    pub lr: Option<f64>,
    /// Training steps [default: 500; ablate: 10].
    #[arg(long, value_name = "N")]
    pub steps: Option<usize>,
}

impl CommonArgs {
    fn load(&self) -> crate::Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        config.apply(&Overrides {
            seed: self.seed,
            cap: self.cap,
            tau: self.tau,
            lr: self.lr,
            steps: self.steps,
        });
        Ok(config)
    }
}

/// Parses `args`, runs the command, prints its output and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let defaults = format!(
        "Config file keys and their defaults:\n\n{}",
        ExperimentConfig::default_toml()
    );
    let command = Cli::command().mut_subcommands(|sub| sub.after_long_help(defaults.clone()));
    let parsed = command
        .try_get_matches_from(args)
        .and_then(|m| Cli::from_arg_matches(&m));
    let cli = match parsed {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
        }
    };
    let (common, result) = match &cli.command {
        Command::Verify(c) => (c, c.load().and_then(|cfg| cmd_verify(&cfg, &c.out))),
        Command::Pipeline { common, compare_online } => (
            common,
            common
                .load()
                .and_then(|cfg| cmd_pipeline(&cfg, &common.out, *compare_online)),
        ),
        Command::Ablate(c) => (c, c.load().and_then(|cfg| cmd_ablate(&cfg, &c.out))),
        Command::Dynamics(c) => (c, c.load().and_then(|cfg| cmd_dynamics(&cfg, &c.out))),
    };
    match result {
        Ok(outcome) => {
            if common.json {
                println!("{}", serde_json::to_string_pretty(&outcome.json).unwrap_or_default());
            } else {
                print!("{}", outcome.summary);
            }
            if outcome.passed {
                EXIT_PASS
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}
