//! Implementation of the `pulsestream` command.
//!
//! Exit codes are a stable contract: 0 success, 2 configuration or
//! environment error (missing files, bad config, missing API key, locked
//! store), 3 data error (malformed dataset, untrainable data, corrupt store).

pub mod commands;
pub mod config;
pub mod dataset;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl From<pulsestream_pipeline::StoreError> for CliError {
    fn from(e: pulsestream_pipeline::StoreError) -> Self {
        use pulsestream_pipeline::StoreError as E;
        match e {
            E::Scan { .. } | E::Manifest(_) | E::NotFound(_) | E::Conflict(_) | E::InvalidArgument(_) => {
                CliError::Data(e.to_string())
            }
            E::Io { .. } | E::Locked(_) | E::ReadOnly => CliError::Config(e.to_string()),
        }
    }
}

impl From<pulsestream_core::Error> for CliError {
    fn from(e: pulsestream_core::Error) -> Self {
        match e {
            pulsestream_core::Error::Io(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pulsestream", version, about = "Political sentiment pipeline over video search results")]
pub struct Cli {
    /// Log verbosity (error, warn, info, debug, trace); RUST_LOG also works.
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Crawl search results for every configured keyword into the store.
    ///
    /// Live crawling reads the API key from PULSESTREAM_YOUTUBE_API_KEY.
    /// Prints per-keyword crawl statistics as JSON.
    Crawl(CrawlArgs),
    /// Write a synthetic labeled corpus as CSV (`text,label`).
    Simulate(SimulateArgs),
    /// Train the sentiment model on a `text,label` CSV.
    ///
    /// Prints the training history and the validation-split report as JSON.
    Train(TrainArgs),
    /// Evaluate a trained model on a `text,label` CSV.
    ///
    /// Prints the report as JSON: per-class precision/recall/f1 under
    /// "negative" and "positive", macro averages and accuracy under
    /// "overall", raw counts under "confusion" and zero-denominator metrics
    /// listed in "undefined".
    Evaluate(EvaluateArgs),
    /// Score every unscored record in the store once.
    Score(ScoreArgs),
    /// Serve the HTTP API and dashboard with a periodic scoring worker.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct CrawlArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Serve search pages from this directory instead of the live API.
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    /// Run a single tick and exit.
    #[arg(long)]
    pub once: bool,
    /// Override the config's store_root.
    #[arg(long)]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    /// Fraction of labels flipped.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Write the planted (noise-free) labels instead of the noisy ones.
    #[arg(long)]
    pub planted: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Supplies hyperparameters and the default output paths.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_params: Option<PathBuf>,
    #[arg(long)]
    pub out_vocab: Option<PathBuf>,
    /// Overrides the initialization and shuffle seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Also re-score records scored by another model version.
    #[arg(long)]
    pub rescore: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Listen address, overriding the config.
    #[arg(long)]
    pub addr: Option<std::net::SocketAddr>,
    /// Also run the crawl scheduler inside the server.
    #[arg(long)]
    pub with_crawler: bool,
    /// Crawl from a fixture directory (with --with-crawler).
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    /// Directory of dashboard files served at "/", overriding the config.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Crawl(a) => commands::crawl(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Score(a) => commands::score(a),
        Command::Serve(a) => commands::serve(a),
    }
}
