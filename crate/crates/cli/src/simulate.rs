use std::path::PathBuf;

use clap::{Args, ValueEnum};
use gsc_core::sim::{
    check_planted_target, counterexample, grid_seed, simulate_bernoulli_bound, simulate_recovery_with,
    CounterexampleMarginals, TargetModel,
};
use rayon::prelude::*;

use crate::{output, Outcome};

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    /// Recovery-rate grid over (d, l, n).
    Recovery,
    /// Two-predicate counterexample to exact recovery.
    #[value(alias = "thm21")]
    Counterexample,
    /// Planted exact copy of the target is always selected.
    #[value(alias = "thm22")]
    Planted,
    /// Expectation bound for Bernoulli predicates; --grid-d gives k, --grid-n gives n.
    #[value(alias = "thm23")]
    Bound,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum Target {
    Modal,
    Sampled,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    check: Check,
    /// CSV output; defaults to standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Required by every check except counterexample, which is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, value_delimiter = ',', default_value = "2,10,50")]
    grid_d: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    grid_l: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "25,250")]
    grid_n: Vec<usize>,
    /// Target model for the recovery grid.
    #[arg(long, value_enum, default_value = "modal")]
    target: Target,
    /// Bernoulli probability shared by every predicate (bound).
    #[arg(long, default_value_t = 0.5)]
    p: f64,
}

fn grid(args: &SimulateArgs) -> Vec<(usize, usize, usize)> {
    let mut points = Vec::new();
    for &d in &args.grid_d {
        for &l in &args.grid_l {
            for &n in &args.grid_n {
                points.push((d, l, n));
            }
        }
    }
    points
}

fn fmt(x: f64) -> String {
    format!("{x:.6}")
}

pub fn run(args: &SimulateArgs) -> anyhow::Result<Outcome> {
    let seed = || {
        args.seed.ok_or_else(|| {
            anyhow::anyhow!(
                "--seed is required for --check {}",
                args.check
                    .to_possible_value()
                    .map(|v| v.get_name().to_owned())
                    .unwrap_or_default()
            )
        })
    };
    let (rows, passed) = match args.check {
        Check::Recovery => recovery(args, seed()?)?,
        Check::Counterexample => counterexample_table()?,
        Check::Planted => planted(args, seed()?)?,
        Check::Bound => bound(args, seed()?)?,
    };
    output::write_csv(output::open(args.output.as_ref())?, rows)?;
    Ok(if passed { Outcome::Ok } else { Outcome::ChecksFailed })
}

type Table = (Vec<Vec<String>>, bool);

fn recovery(args: &SimulateArgs, seed: u64) -> anyhow::Result<Table> {
    let model = match args.target {
        Target::Modal => TargetModel::Modal,
        Target::Sampled => TargetModel::Sampled,
    };
    let points = grid(args);
    let stats = points
        .par_iter()
        .map(|&(d, l, n)| simulate_recovery_with(d, l, n, args.trials, grid_seed(seed, &[d, l, n]), model))
        .collect::<Vec<_>>();
    let mut rows = vec![[
        "d",
        "l",
        "n",
        "trials",
        "top1_rate",
        "agreement_with_best",
        "random_top1_rate",
        "random_agreement",
    ]
    .map(String::from)
    .to_vec()];
    let mut beaten = 0;
    for (&(d, l, n), s) in points.iter().zip(stats) {
        let s = s?;
        if s.top1_rate >= s.random_top1_rate {
            beaten += 1;
        }
        rows.push(vec![
            d.to_string(),
            l.to_string(),
            n.to_string(),
            s.trials.to_string(),
            fmt(s.top1_rate),
            fmt(s.mean_agreement_with_best),
            fmt(s.random_top1_rate),
            fmt(s.random_agreement),
        ]);
    }
    eprintln!(
        "recovery: selection beats the random pick on {beaten}/{} grid points",
        points.len()
    );
    Ok((rows, beaten == points.len()))
}

fn counterexample_table() -> anyhow::Result<Table> {
    let c = counterexample(CounterexampleMarginals::default())?;
    let mut rows = vec![[
        "candidate",
        "index",
        "estimate",
        "score",
        "score_exact",
        "target_agreement",
        "selected",
    ]
    .map(String::from)
    .to_vec()];
    for (name, idx, score, agreement) in [
        ("better", c.better, c.better_score, c.better_target_agreement),
        ("worse", c.worse, c.worse_score, c.worse_target_agreement),
    ] {
        rows.push(vec![
            name.into(),
            idx.to_string(),
            format!("{:?}", c.population[idx]),
            score.to_f64().to_string(),
            format!("{}/{}", score.num, score.den),
            agreement.to_string(),
            (c.selected == idx).to_string(),
        ]);
    }
    eprintln!(
        "counterexample: better estimate scores {} vs worse {}; criterion selects the {} one",
        c.better_score.to_f64(),
        c.worse_score.to_f64(),
        if c.picks_worse() { "worse" } else { "better" }
    );
    Ok((rows, c.picks_worse()))
}

fn planted(args: &SimulateArgs, seed: u64) -> anyhow::Result<Table> {
    let points = grid(args);
    let results = points
        .par_iter()
        .map(|&(d, l, n)| check_planted_target(args.trials, grid_seed(seed, &[d, l, n]), d, l, n))
        .collect::<Vec<_>>();
    let mut rows = vec![["d", "l", "n", "trials", "violations", "resamples"]
        .map(String::from)
        .to_vec()];
    let mut total = 0;
    for (&(d, l, n), r) in points.iter().zip(results) {
        let r = r?;
        total += r.violations;
        rows.push(vec![
            d.to_string(),
            l.to_string(),
            n.to_string(),
            r.trials.to_string(),
            r.violations.to_string(),
            r.resamples.to_string(),
        ]);
    }
    eprintln!("planted: {total} violations over {} grid points", points.len());
    Ok((rows, total == 0))
}

fn bound(args: &SimulateArgs, seed: u64) -> anyhow::Result<Table> {
    let mut points = Vec::new();
    for &k in &args.grid_d {
        for &n in &args.grid_n {
            points.push((k, n));
        }
    }
    let results = points
        .par_iter()
        .map(|&(k, n)| simulate_bernoulli_bound(k, n, &vec![args.p; k], args.trials, grid_seed(seed, &[k, n])))
        .collect::<Vec<_>>();
    let mut rows = vec![[
        "k", "n", "trials", "mean", "stderr", "sum_p", "radius", "lower", "upper", "within",
    ]
    .map(String::from)
    .to_vec()];
    let mut inside = 0;
    for r in results {
        let r = r?;
        if r.within {
            inside += 1;
        } else {
            eprintln!(
                "bound: k={} n={}: mean {:.4} (se {:.4}) outside [{:.4}, {:.4}]",
                r.k, r.n, r.mean, r.stderr, r.lower, r.upper
            );
        }
        rows.push(vec![
            r.k.to_string(),
            r.n.to_string(),
            r.trials.to_string(),
            fmt(r.mean),
            fmt(r.stderr),
            fmt(r.sum_p),
            fmt(r.radius),
            fmt(r.lower),
            fmt(r.upper),
            r.within.to_string(),
        ]);
    }
    eprintln!("bound: {inside}/{} points within the bound", points.len());
    Ok((rows, inside == points.len()))
}
