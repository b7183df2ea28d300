//! Bootstrap evaluation of ranking methods: ranked accuracy, pass@k, MRR,
//! ROUGE-2, ROUGE-L and BLEU.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{PromptRecord, Tokenizer};
use crate::error::{Error, Result};
use crate::ngram;
use crate::rank::Ranker;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Metric {
    /// Ranked pass@1: the top-ranked generation is labeled correct.
    Accuracy,
    PassAtK(usize),
    Mrr,
    Rouge2,
    RougeL,
    Bleu,
}

impl Metric {
    fn needs_labels(self) -> bool {
        matches!(self, Metric::Accuracy | Metric::PassAtK(_) | Metric::Mrr)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Accuracy => f.write_str("accuracy"),
            Metric::PassAtK(k) => write!(f, "pass@{k}"),
            Metric::Mrr => f.write_str("mrr"),
            Metric::Rouge2 => f.write_str("rouge2"),
            Metric::RougeL => f.write_str("rougeL"),
            Metric::Bleu => f.write_str("bleu"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "accuracy" => Metric::Accuracy,
            "mrr" => Metric::Mrr,
            "rouge2" => Metric::Rouge2,
            "rougeL" => Metric::RougeL,
            "bleu" => Metric::Bleu,
            other => match other.strip_prefix("pass@").map(str::parse::<usize>) {
                Some(Ok(k)) if k >= 1 => Metric::PassAtK(k),
                _ => return Err(Error::InvalidArgument(format!("unknown metric {other:?}"))),
            },
        })
    }
}

impl From<Metric> for String {
    fn from(m: Metric) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for Metric {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Bootstrap protocol parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapConfig {
    pub n_bootstrap: usize,
    pub sample_size: usize,
    pub seed: u64,
    /// Use greedy hard-negative selection for pass@k with GSC rankers.
    pub ranked_negatives: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            n_bootstrap: 50,
            sample_size: 25,
            seed: 0,
            ranked_negatives: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub metric: Metric,
    pub mean: f64,
    pub stderr: f64,
    pub n_bootstrap: usize,
    pub sample_size: usize,
    pub seed: u64,
}

/// 1 if any selected index is labeled correct.
pub fn pass_at_k(selected: &[usize], correctness: &[bool]) -> f64 {
    if selected.iter().any(|&i| correctness[i]) {
        1.0
    } else {
        0.0
    }
}

/// `1 / (1 + position)` of the first correct generation in `order`; 0 if none.
pub fn mrr(order: &[usize], correctness: &[bool]) -> f64 {
    order
        .iter()
        .position(|&i| correctness[i])
        .map_or(0.0, |pos| 1.0 / (pos + 1) as f64)
}

/// Lowercased whitespace tokens used by the text-overlap metrics.
pub fn metric_tokens(text: &str) -> Vec<String> {
    ngram::tokenize(text, Tokenizer::Whitespace, None)
        .expect("whitespace tokenization is infallible")
        .into_iter()
        .map(|t| t.to_lowercase())
        .collect()
}

fn counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut map = HashMap::new();
    if n <= tokens.len() {
        for w in tokens.windows(n) {
            *map.entry(w).or_insert(0) += 1;
        }
    }
    map
}

fn clipped_overlap(cand: &HashMap<&[String], usize>, reference: &HashMap<&[String], usize>) -> usize {
    cand.iter()
        .map(|(g, &c)| c.min(reference.get(g).copied().unwrap_or(0)))
        .sum()
}

fn f1(overlap: usize, cand_total: usize, ref_total: usize) -> f64 {
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / cand_total as f64;
    let r = overlap as f64 / ref_total as f64;
    2.0 * p * r / (p + r)
}

fn nonempty_candidate(candidate: &str, metric: &str) -> Option<Vec<String>> {
    let toks = metric_tokens(candidate);
    if toks.is_empty() {
        log::warn!("{metric}: empty candidate scores 0");
        None
    } else {
        Some(toks)
    }
}

fn rouge2_single(cand: &[String], reference: &[String]) -> f64 {
    let c = counts(cand, 2);
    let r = counts(reference, 2);
    let (ct, rt) = (cand.len().saturating_sub(1), reference.len().saturating_sub(1));
    if ct == 0 && rt == 0 {
        // Both single-token: no bigrams to compare.
        return if cand == reference { 1.0 } else { 0.0 };
    }
    if ct == 0 || rt == 0 {
        return 0.0;
    }
    f1(clipped_overlap(&c, &r), ct, rt)
}

/// Bigram-overlap F1, maximized over references.
pub fn rouge2(candidate: &str, references: &[String]) -> f64 {
    let Some(cand) = nonempty_candidate(candidate, "rouge2") else {
        return 0.0;
    };
    references
        .iter()
        .map(|r| rouge2_single(&cand, &metric_tokens(r)))
        .fold(0.0, f64::max)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Longest-common-subsequence F1, maximized over references.
pub fn rouge_l(candidate: &str, references: &[String]) -> f64 {
    let Some(cand) = nonempty_candidate(candidate, "rougeL") else {
        return 0.0;
    };
    references
        .iter()
        .map(|r| {
            let rt = metric_tokens(r);
            if rt.is_empty() {
                return 0.0;
            }
            f1(lcs_len(&cand, &rt), cand.len(), rt.len())
        })
        .fold(0.0, f64::max)
}

/// Sentence BLEU: clipped 1..4-gram precisions with uniform weights, brevity penalty
/// against the closest reference length, and add-one smoothing for higher orders
/// with no matches.
pub fn bleu(candidate: &str, references: &[String]) -> f64 {
    const MAX_N: usize = 4;
    let Some(cand) = nonempty_candidate(candidate, "bleu") else {
        return 0.0;
    };
    let refs: Vec<Vec<String>> = references.iter().map(|r| metric_tokens(r)).collect();
    if refs.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=MAX_N {
        let c = counts(&cand, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in &refs {
            for (g, cnt) in counts(r, n) {
                let slot = max_ref.entry(g).or_insert(0);
                *slot = (*slot).max(cnt);
            }
        }
        let matches = clipped_overlap(&c, &max_ref);
        let total = cand.len().saturating_sub(n - 1);
        let p = if matches > 0 {
            matches as f64 / total as f64
        } else if n == 1 {
            return 0.0;
        } else {
            1.0 / (total as f64 + 1.0)
        };
        log_sum += p.ln() / MAX_N as f64;
    }
    let c = cand.len();
    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .expect("non-empty references");
    let bp = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    (bp * log_sum.exp()).clamp(0.0, 1.0)
}

fn labels(record: &PromptRecord) -> Result<Vec<bool>> {
    record
        .generations
        .iter()
        .map(|g| {
            g.correct.ok_or_else(|| Error::Generation {
                id: g.id.clone(),
                message: format!("prompt {}: missing correctness label", record.prompt_id),
            })
        })
        .collect()
}

fn references(record: &PromptRecord) -> Result<&[String]> {
    match record.references.as_deref() {
        Some(r) if !r.is_empty() => Ok(r),
        _ => Err(Error::Prompt {
            prompt_id: record.prompt_id.clone(),
            message: "metric needs at least one reference text".into(),
        }),
    }
}

/// Scores one prompt (already subsampled) under `metric`.
pub fn score_prompt(
    record: &PromptRecord,
    ranker: &Ranker,
    metric: Metric,
    ranked_negatives: bool,
    seed: u64,
) -> Result<f64> {
    match metric {
        Metric::PassAtK(k) => {
            let picks = ranker.select_top_k(record, k, ranked_negatives, seed)?;
            Ok(pass_at_k(&picks, &labels(record)?))
        }
        Metric::Accuracy => {
            let top = ranker.rank(record, seed)?.top();
            Ok(pass_at_k(&[top], &labels(record)?))
        }
        Metric::Mrr => {
            let order = ranker.rank(record, seed)?.order;
            Ok(mrr(&order, &labels(record)?))
        }
        Metric::Rouge2 | Metric::RougeL | Metric::Bleu => {
            let refs = references(record)?;
            let text = &record.generations[ranker.rank(record, seed)?.top()].text;
            Ok(match metric {
                Metric::Rouge2 => rouge2(text, refs),
                Metric::RougeL => rouge_l(text, refs),
                _ => bleu(text, refs),
            })
        }
    }
}

fn validate(records: &[PromptRecord], metric: Metric, cfg: &BootstrapConfig) -> Result<()> {
    if cfg.n_bootstrap == 0 || cfg.sample_size == 0 {
        return Err(Error::InvalidArgument(
            "bootstrap count and sample size must be positive".into(),
        ));
    }
    if records.is_empty() {
        return Err(Error::InvalidArgument("corpus has no prompts".into()));
    }
    if let Metric::PassAtK(k) = metric {
        if k > cfg.sample_size {
            return Err(Error::InvalidArgument(format!(
                "pass@{k} needs k <= sample size {}",
                cfg.sample_size
            )));
        }
    }
    for r in records {
        if r.len() < cfg.sample_size {
            return Err(Error::Prompt {
                prompt_id: r.prompt_id.clone(),
                message: format!(
                    "has {} generations, fewer than the sample size {}",
                    r.len(),
                    cfg.sample_size
                ),
            });
        }
        if metric.needs_labels() {
            labels(r)?;
        } else {
            references(r)?;
        }
    }
    Ok(())
}

/// One bootstrap trial: subsample every prompt, rank, score, average over prompts.
fn run_trial(
    records: &[PromptRecord],
    ranker: &Ranker,
    metric: Metric,
    cfg: &BootstrapConfig,
    trial: usize,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(trial as u64);
    let mut total = 0.0;
    for record in records {
        let mut idx = rand::seq::index::sample(&mut rng, record.len(), cfg.sample_size).into_vec();
        idx.sort_unstable();
        let sub = record.subset(&idx);
        let rank_seed = rng.next_u64();
        total += score_prompt(&sub, ranker, metric, cfg.ranked_negatives, rank_seed)?;
    }
    Ok(total / records.len() as f64)
}

/// Mean and standard error of `metric` over `n_bootstrap` trials.
///
/// Each trial draws `sample_size` generations per prompt without replacement from
/// its own ChaCha8 stream (`seed`, stream = trial index), so the result does not
/// depend on how trials are scheduled across threads.
pub fn bootstrap_eval(
    records: &[PromptRecord],
    ranker: &Ranker,
    metric: Metric,
    cfg: &BootstrapConfig,
) -> Result<EvalReport> {
    validate(records, metric, cfg)?;
    let trial_means = (0..cfg.n_bootstrap)
        .into_par_iter()
        .map(|t| run_trial(records, ranker, metric, cfg, t))
        .collect::<Result<Vec<f64>>>()?;
    let (mean, stderr) = mean_stderr(&trial_means);
    Ok(EvalReport {
        method: ranker.name(),
        metric,
        mean,
        stderr,
        n_bootstrap: cfg.n_bootstrap,
        sample_size: cfg.sample_size,
        seed: cfg.seed,
    })
}

/// Sample mean and `sd / sqrt(n)` with the n-1 sample standard deviation.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Rows of a metric-by-method table: header row then one row per metric, cells `mean±stderr`.
pub fn report_table(reports: &[EvalReport]) -> Vec<Vec<String>> {
    let mut methods: Vec<&str> = Vec::new();
    let mut metrics: Vec<Metric> = Vec::new();
    for r in reports {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
        if !metrics.contains(&r.metric) {
            metrics.push(r.metric);
        }
    }
    let mut rows = Vec::with_capacity(metrics.len() + 1);
    let mut header = vec!["metric".to_owned()];
    header.extend(methods.iter().map(|m| m.to_string()));
    rows.push(header);
    for metric in metrics {
        let mut row = vec![metric.to_string()];
        for method in &methods {
            let cell = reports
                .iter()
                .find(|r| r.metric == metric && r.method == *method)
                .map(|r| format!("{:.4}±{:.4}", r.mean, r.stderr))
                .unwrap_or_default();
            row.push(cell);
        }
        rows.push(row);
    }
    rows
}
