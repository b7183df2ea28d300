use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use gsc_core::eval::report_table;
use gsc_core::rank::Ranker;
use gsc_core::{bootstrap_eval, BootstrapConfig, Metric};

use crate::{output, Outcome, SimArgs};

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    input: PathBuf,
    /// JSON report lines; defaults to standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write a metric-by-method CSV table here.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    sim: SimArgs,
    /// accuracy | pass@K | mrr | rouge2 | rougeL | bleu; repeat for several.
    #[arg(long = "metric", default_value = "accuracy", value_parser = parse_metric)]
    metrics: Vec<Metric>,
    /// Use greedy hard-negative selection for pass@k with the gsc method.
    #[arg(long)]
    ranked_negatives: bool,
    #[arg(long, default_value_t = 50)]
    bootstrap: usize,
    #[arg(long, default_value_t = 25)]
    sample_size: usize,
    #[arg(long)]
    seed: u64,
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse().map_err(|e: gsc_core::Error| e.to_string())
}

pub fn run(args: &EvalArgs) -> anyhow::Result<Outcome> {
    let config = args.sim.config()?;
    let records = crate::read_corpus(&args.input)?;
    let cfg = BootstrapConfig {
        n_bootstrap: args.bootstrap,
        sample_size: args.sample_size,
        seed: args.seed,
        ranked_negatives: args.ranked_negatives,
    };
    let mut reports = Vec::new();
    for &method in &args.sim.methods {
        let ranker = Ranker::new(method, config);
        for &metric in &args.metrics {
            let report = bootstrap_eval(&records, &ranker, metric, &cfg)?;
            eprintln!(
                "{:<20} {:<10} {:.4} ± {:.4}",
                report.method, report.metric, report.mean, report.stderr
            );
            reports.push(report);
        }
    }
    let mut out = output::open(args.output.as_ref())?;
    for r in &reports {
        writeln!(out, "{}", serde_json::to_string(r)?)?;
    }
    out.flush()?;
    if let Some(path) = &args.csv {
        output::write_csv(output::open(Some(path))?, report_table(&reports))?;
    }
    Ok(Outcome::Ok)
}
