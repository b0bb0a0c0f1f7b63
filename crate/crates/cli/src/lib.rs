//! Command-line front end for the teleqa pipeline: prepare, features,
//! split, train, predict, evaluate, analyze and serve.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod provenance;

use cli::{Cli, Command};
use commands::Context;
use config::PipelineConfig;
use error::{CliError, Result};

pub fn run(cli: Cli) -> Result<()> {
    let config = match &cli.global.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let ctx = Context {
        seed: cli.global.seed.or(config.split.seed).unwrap_or(0),
        config,
        run_manifest: cli.global.run_manifest.clone(),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Prepare(a) => commands::prepare(&ctx, a),
        Command::Features(a) => commands::features(&ctx, a),
        Command::Metrics(a) => commands::metrics(&ctx, a),
        Command::Split(a) => commands::split(&ctx, a),
        Command::Train(a) => commands::train_cmd(&ctx, a),
        Command::Predict(a) => commands::predict(&ctx, a),
        Command::Evaluate(a) => commands::evaluate_cmd(&ctx, a),
        Command::Analyze(a) => commands::analyze(&ctx, a),
        Command::Serve(a) => commands::serve(&ctx, a),
    })
}
