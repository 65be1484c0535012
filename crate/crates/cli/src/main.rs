use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use sdvar_cli::Command;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Simulate,
    Estimate,
    Filter,
    Irf,
    McStudy,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Simulate => Command::Simulate,
            Cmd::Estimate => Command::Estimate,
            Cmd::Filter => Command::Filter,
            Cmd::Irf => Command::Irf,
            Cmd::McStudy => Command::McStudy,
        }
    }
}

/// Score-driven structural VAR workflows.
#[derive(Debug, Parser)]
#[command(name = "sdvar", version)]
struct Args {
    command: Cmd,
    /// JSON configuration (versioned schema).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(w) = args.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global() {
            eprintln!("sdvar: cannot size the worker pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match sdvar_cli::run(args.command.into(), &args.config, args.seed, &args.out) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sdvar: {e}");
            ExitCode::from(2)
        }
    }
}
