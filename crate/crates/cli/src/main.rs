mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use sba_core::{Result, SbaError};

use args::{Cli, Command};

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.command.shared().resolve()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| SbaError::Param(format!("cannot start {} workers: {e}", cfg.workers)))?;
    pool.install(|| match &cli.command {
        Command::Select(a) => commands::select(a, &cfg),
        Command::Aggregate(a) => commands::aggregate(a, &cfg),
        Command::FitPca(a) => commands::fit_pca(a, &cfg),
        Command::ApplyPca(a) => commands::apply_pca(a, &cfg),
        Command::Retrieve(a) => commands::retrieve(a, &cfg),
        Command::EvalMap(a) => commands::eval_map(a),
        Command::EvalRecall(a) => commands::eval_recall(a),
        Command::Classify(a) => commands::classify(a, &cfg),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.class());
            ExitCode::FAILURE
        }
    }
}
