//! revrank: expertise ranking pipeline for matching manuscripts to
//! candidate reviewers.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/contract error, 3 external
//! service failure.

mod artifacts;
mod commands;
mod config;
mod scorers;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::FileConfig;
use revrank_core::error::ErrorClass;

#[derive(Parser)]
#[command(
    name = "revrank",
    version,
    about = "Reviewer expertise ranking: ingest, profile, index, generate training triplets, train a scoring adapter, rank and evaluate"
)]
struct Cli {
    /// JSON config file; command-line flags override its keys
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest raw paper metadata (JSONL) into normalized papers + mentions
    Ingest(commands::IngestArgs),
    /// Resolve author mentions into author identities
    Disambiguate(commands::DisambiguateArgs),
    /// Build keyword profiles for every author with recent publications
    Profile(commands::ProfileArgs),
    /// Build BM25 indexes and the embedding store
    Index(commands::IndexArgs),
    /// Dense threshold recall of candidate reviewers for one query paper
    Recall(commands::RecallArgs),
    /// Generate preference triplets from BM25 rankings
    Prefgen(commands::PrefgenArgs),
    /// Train the low-rank scoring adapter on generated triplets
    Train(commands::TrainArgs),
    /// Rank COI-filtered reviewers for a query paper
    Rank(commands::RankArgs),
    /// Evaluate a scorer against a rated benchmark
    Eval(commands::EvalArgs),
    /// Benchmark distribution statistics
    Stats(commands::StatsArgs),
    /// Finite-difference verification of the training gradients
    Gradcheck(commands::GradcheckArgs),
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Disambiguate(_) => "disambiguate",
            Command::Profile(_) => "profile",
            Command::Index(_) => "index",
            Command::Recall(_) => "recall",
            Command::Prefgen(_) => "prefgen",
            Command::Train(_) => "train",
            Command::Rank(_) => "rank",
            Command::Eval(_) => "eval",
            Command::Stats(_) => "stats",
            Command::Gradcheck(_) => "gradcheck",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let stage = cli.command.stage();
    let file = match FileConfig::load(cli.config.as_ref()) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error[{stage}]: {e}");
            return ExitCode::from(1);
        }
    };

    let result = match cli.command {
        Command::Ingest(args) => commands::ingest(args, &file),
        Command::Disambiguate(args) => commands::disambiguate(args, &file),
        Command::Profile(args) => commands::profile(args, &file),
        Command::Index(args) => commands::index(args, &file),
        Command::Recall(args) => commands::recall(args, &file),
        Command::Prefgen(args) => commands::prefgen(args, &file),
        Command::Train(args) => commands::train(args, &file),
        Command::Rank(args) => commands::rank(args, &file),
        Command::Eval(args) => commands::eval(args, &file),
        Command::Stats(args) => commands::stats(args, &file),
        Command::Gradcheck(args) => commands::gradcheck(args, &file),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{stage}]: {e}");
            match e.class() {
                ErrorClass::Usage => ExitCode::from(1),
                ErrorClass::External => ExitCode::from(3),
                ErrorClass::Data => ExitCode::from(2),
            }
        }
    }
}
