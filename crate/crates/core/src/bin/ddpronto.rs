use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddpronto::cli::{cmd_compare, cmd_solve, cmd_sweep, CommandOptions};

#[derive(Parser)]
#[command(version, about = "Model-based and data-driven trajectory optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write each iteration's identification data to <out>/batches/
    #[arg(long)]
    dump_batches: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve in the configured mode
    Solve(Common),
    /// Run model-based and data-driven from the same start
    Compare(Common),
    /// Data-driven runs over halved dither bounds
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        halvings: usize,
    },
}

impl From<Common> for CommandOptions {
    fn from(c: Common) -> Self {
        Self {
            config: c.config,
            out: c.out,
            seed: c.seed,
            dump_batches: c.dump_batches,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let result = match Cli::parse().command {
        Command::Solve(c) => cmd_solve(&c.into()).map(drop),
        Command::Compare(c) => cmd_compare(&c.into()).map(drop),
        Command::Sweep { common, halvings } => cmd_sweep(&common.into(), halvings).map(drop),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
