mod args;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use thiserror::Error;

use crate::args::{Cli, Command};
use crate::config::Config;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {}: {source}", path.display())]
    Input { path: PathBuf, source: defocus::Error },
    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: defocus::Error },
    #[error(transparent)]
    Core(#[from] defocus::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads {n}: {e}")))?;
    }
    match &cli.command {
        Command::Deblur(a) => run::deblur(cfg, a),
        Command::BlurMap(a) => run::blur_map_cmd(cfg, a),
        Command::EstimateKernels(a) => run::estimate_kernels(cfg, a),
        Command::BuildLut(a) => run::build_lut(cfg, a),
        Command::FuseStack(a) => run::fuse(cfg, a),
        Command::Synth(a) => run::synth(cfg, a),
        Command::Metrics(a) => {
            print!("{}", run::metrics(a)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
