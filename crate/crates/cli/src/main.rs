//! `gsc`: rerank sampled generations, evaluate rankers, and run the agreement simulations.

mod eval;
mod output;
mod rank;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use gsc_core::{Method, SimConfig, SimKind, Tokenizer};

#[derive(Parser, Debug)]
#[command(name = "gsc", version, about = "Generalized self-consistency reranking toolkit")]
struct Cli {
    /// Worker threads for prompts and trials (0 = one per core). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rank every prompt's generations and write one JSON line per prompt and method.
    Rank(rank::RankArgs),
    /// Bootstrap-evaluate ranking methods on a labeled corpus.
    Eval(eval::EvalArgs),
    /// Run the agreement-model simulations and selection-criterion checks.
    Simulate(simulate::SimulateArgs),
}

/// Similarity selection shared by `rank` and `eval`.
#[derive(Args, Debug, Clone)]
pub struct SimArgs {
    /// exact | ucs | ngram:K | wucs | consensus-wucs | cosine
    #[arg(long, default_value = "ucs", value_parser = parse_kind)]
    sim: SimKind,

    /// Where tokens come from: the record's `tokens` or a whitespace/punctuation split of `text`.
    #[arg(long, default_value = "pretokenized", value_parser = parse_tokenizer)]
    tokenizer: Tokenizer,

    /// Ranking method; repeat for several (gsc, random, mean-logp, centroid, longest, most-diverse).
    #[arg(long = "method", default_value = "gsc", value_parser = parse_method)]
    methods: Vec<Method>,
}

impl SimArgs {
    pub fn config(&self) -> anyhow::Result<SimConfig> {
        Ok(SimConfig::new(self.sim, self.tokenizer)?)
    }
}

fn parse_kind(s: &str) -> Result<SimKind, String> {
    s.parse().map_err(|e: gsc_core::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: gsc_core::Error| e.to_string())
}

fn parse_tokenizer(s: &str) -> Result<Tokenizer, String> {
    match s {
        "whitespace" => Ok(Tokenizer::Whitespace),
        "pretokenized" => Ok(Tokenizer::Pretokenized),
        other => Err(format!("unknown tokenizer {other:?} (whitespace | pretokenized)")),
    }
}

pub fn read_corpus(path: &PathBuf) -> anyhow::Result<Vec<gsc_core::PromptRecord>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    gsc_core::parse_corpus(std::io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

/// What a command reports back to `main`.
pub enum Outcome {
    /// Finished and every check passed.
    Ok,
    /// Finished, but at least one check failed.
    ChecksFailed,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = pool.install(|| match &cli.command {
        Command::Rank(args) => rank::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Simulate(args) => simulate::run(args),
    });
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::ChecksFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
