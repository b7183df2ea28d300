use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use gsc_core::rank::Ranker;
use gsc_core::sim::grid_seed;
use gsc_core::Method;
use rayon::prelude::*;
use serde_json::json;

use crate::{output, Outcome, SimArgs};

#[derive(Args, Debug)]
pub struct RankArgs {
    #[arg(long)]
    input: PathBuf,
    /// Defaults to standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    sim: SimArgs,
    /// Required by the random method.
    #[arg(long)]
    seed: Option<u64>,
}

pub fn run(args: &RankArgs) -> anyhow::Result<Outcome> {
    let config = args.sim.config()?;
    let seed = match (args.seed, args.sim.methods.contains(&Method::Random)) {
        (Some(s), _) => s,
        (None, false) => 0,
        (None, true) => bail!("--seed is required with --method random"),
    };
    let records = crate::read_corpus(&args.input)?;
    let rankers: Vec<Ranker> = args.sim.methods.iter().map(|&m| Ranker::new(m, config)).collect();

    let per_prompt: Vec<anyhow::Result<Vec<String>>> = records
        .par_iter()
        .enumerate()
        .map(|(p, record)| {
            rankers
                .iter()
                .map(|ranker| {
                    let result = ranker
                        .rank(record, grid_seed(seed, &[p]))
                        .with_context(|| format!("prompt {}", record.prompt_id))?;
                    let ids: Vec<&str> = result
                        .order
                        .iter()
                        .map(|&i| record.generations[i].id.as_str())
                        .collect();
                    let scores: Vec<f64> = result.order.iter().map(|&i| result.scores[i]).collect();
                    Ok(json!({
                        "prompt_id": record.prompt_id,
                        "method": result.method,
                        "order": ids,
                        "scores": scores,
                        "tie_policy": result.tie_policy,
                    })
                    .to_string())
                })
                .collect()
        })
        .collect();

    let mut out = output::open(args.output.as_ref())?;
    for lines in per_prompt {
        for line in lines? {
            writeln!(out, "{line}")?;
        }
    }
    out.flush()?;
    eprintln!("ranked {} prompts with {} method(s)", records.len(), rankers.len());
    Ok(Outcome::Ok)
}
