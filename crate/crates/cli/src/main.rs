use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dymon_cli::commands;
use dymon_cli::config::Config;
use dymon_cli::error::CliResult;

#[derive(Parser)]
#[command(name = "dymon", version, about = "Learn and sample stochastic dynamics from transition data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (`key = value` lines).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override or add a config entry, e.g. `--set seed=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum JacobianMethod {
    Exact,
    Fd,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a ground-truth system to a trajectory CSV.
    Simulate(Common),
    /// Turn a trajectory (or labelled point cloud) into transition groups.
    BuildTransitions(Common),
    /// Train a model on a transitions file and write a checkpoint.
    Train(Common),
    /// Sample chains from a checkpoint.
    Generate(Common),
    /// Compare samples against a reference, or report latent cycle structure.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Exit with status 5 unless the primary metric is below this value.
        #[arg(long)]
        assert_below: Option<f64>,
    },
    /// Jacobians of the learned transition vector at query histories.
    Jacobian {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "exact")]
        method: JacobianMethod,
    },
    /// Train the model and the HMM / Kalman baselines on mixture MCMC data.
    CompareGmm {
        #[command(flatten)]
        common: Common,
        /// Baselines to leave out (`hmm`, `kf`).
        #[arg(long, value_delimiter = ',')]
        skip: Vec<String>,
    },
}

fn load(common: &Common) -> CliResult<Config> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for o in &common.overrides {
        cfg.set(o)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Simulate(c) => commands::cmd_simulate(&load(&c)?),
        Command::BuildTransitions(c) => commands::cmd_build_transitions(&load(&c)?),
        Command::Train(c) => commands::cmd_train(&load(&c)?),
        Command::Generate(c) => commands::cmd_generate(&load(&c)?),
        Command::Eval { common, assert_below } => commands::cmd_eval(&load(&common)?, assert_below),
        Command::Jacobian { common, method } => {
            commands::cmd_jacobian(&load(&common)?, matches!(method, JacobianMethod::Fd))
        }
        Command::CompareGmm { common, skip } => commands::cmd_compare_gmm(&load(&common)?, &skip),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
