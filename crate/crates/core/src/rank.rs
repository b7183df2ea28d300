//! Rankings from similarity matrices: GSC scores, consensus weighting, greedy
//! hard-negative selection for pass@k, and the reference baselines.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Generation, PromptRecord, SimConfig, SimKind, Tokenizer};
use crate::error::{Error, Result};
use crate::ngram;
use crate::similarity::{self, SimilarityMatrix};

pub const TIE_POLICY: &str = "lowest-index";

/// Candidates ordered best first, with the per-generation scores that produced the order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankResult {
    pub method: String,
    pub order: Vec<usize>,
    /// Indexed by generation, not by rank.
    pub scores: Vec<f64>,
    pub tie_policy: String,
}

impl RankResult {
    /// Sorts by score descending; equal scores keep input order.
    pub fn from_scores(method: impl Into<String>, scores: Vec<f64>) -> Self {
        let order = order_by_scores(&scores);
        RankResult {
            method: method.into(),
            order,
            scores,
            tie_policy: TIE_POLICY.into(),
        }
    }

    pub fn top(&self) -> usize {
        self.order[0]
    }
}

pub fn order_by_scores(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    order
}

/// Index of the maximum; the lowest index wins ties.
fn argmax(scores: impl IntoIterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores {
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

/// `GSC(i) = 1/(M-1) Σ_{j≠i} Sim(i, j)`; a single generation scores 0.
pub fn gsc_scores(matrix: &SimilarityMatrix) -> Vec<f64> {
    let m = matrix.size();
    if m <= 1 {
        return vec![0.0; m];
    }
    (0..m)
        .map(|i| {
            let row = matrix.raw_row(i);
            let terms = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &s)| s);
            ngram::exact_sum(terms) / matrix.denom() / (m - 1) as f64
        })
        .collect()
}

/// Geometric mean of the generation's token probabilities, `exp(mean log p)`.
pub fn consensus_weight(g: &Generation) -> Result<f64> {
    let lps = g
        .token_logprobs
        .as_deref()
        .ok_or_else(|| Error::MissingLogprobs { id: g.id.clone() })?;
    if lps.is_empty() {
        return Err(Error::Generation {
            id: g.id.clone(),
            message: "consensus weight needs at least one token".into(),
        });
    }
    Ok((lps.iter().sum::<f64>() / lps.len() as f64).exp())
}

fn gsc_method_name(kind: SimKind) -> String {
    format!("gsc:{}", kind.name())
}

/// Ranks by GSC under `config`. Consensus-WUCS multiplies each generation's
/// aggregated WUCS score by its [`consensus_weight`].
pub fn rank(record: &PromptRecord, config: &SimConfig) -> Result<RankResult> {
    let matrix = similarity::similarity_matrix(record, config)?;
    rank_matrix(record, &matrix)
}

pub(crate) fn rank_matrix(record: &PromptRecord, matrix: &SimilarityMatrix) -> Result<RankResult> {
    let mut scores = gsc_scores(matrix);
    if matrix.config.kind == SimKind::ConsensusWucs {
        for (s, g) in scores.iter_mut().zip(&record.generations) {
            *s *= consensus_weight(g)?;
        }
    }
    Ok(RankResult::from_scores(gsc_method_name(matrix.config.kind), scores))
}

/// Greedy top-k selection treating already-chosen generations as hard negatives.
///
/// The first pick maximizes GSC. Each later pick maximizes
/// `1/(M-1) (Σ_{j∉S, j≠i} Sim(i, j) - Σ_{j∈S} Sim(i, j))` over unselected `i`,
/// where `S` is the set picked so far.
pub fn ranked_pass_k_select(matrix: &SimilarityMatrix, k: usize) -> Result<Vec<usize>> {
    ranked_select_weighted(matrix, k, None)
}

/// [`ranked_pass_k_select`] with each candidate's score multiplied by a positive
/// per-generation weight (the consensus weight for Consensus-WUCS).
pub fn ranked_select_weighted(matrix: &SimilarityMatrix, k: usize, weights: Option<&[f64]>) -> Result<Vec<usize>> {
    let m = matrix.size();
    if k == 0 || k > m {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must lie in 1..={m} (number of generations)"
        )));
    }
    if let Some(w) = weights {
        if w.len() != m {
            return Err(Error::InvalidArgument("one weight per generation required".into()));
        }
    }
    let denom = if m > 1 { (m - 1) as f64 } else { 1.0 };
    let mut selected = vec![false; m];
    let mut picks = Vec::with_capacity(k);
    for _ in 0..k {
        let candidates = (0..m).filter(|&i| !selected[i]).map(|i| {
            let row = matrix.raw_row(i);
            let terms = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, &sim)| if selected[j] { -sim } else { sim });
            let s = ngram::exact_sum(terms);
            let score = if m > 1 { s / matrix.denom() / denom } else { 0.0 };
            (i, weights.map_or(score, |w| score * w[i]))
        });
        let pick = argmax(candidates).expect("k <= M leaves a candidate");
        selected[pick] = true;
        picks.push(pick);
    }
    Ok(picks)
}

/// Uniformly random permutation from a seeded ChaCha8 stream.
pub fn baseline_random(record: &PromptRecord, seed: u64) -> RankResult {
    let m = record.len();
    let mut perm: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    let mut scores = vec![0.0; m];
    for (pos, &i) in perm.iter().enumerate() {
        scores[i] = (m - pos) as f64;
    }
    RankResult {
        method: "random".into(),
        order: perm,
        scores,
        tie_policy: TIE_POLICY.into(),
    }
}

/// Mean token log-probability, highest first.
pub fn baseline_mean_logp(record: &PromptRecord) -> Result<RankResult> {
    let scores = record
        .generations
        .iter()
        .map(|g| {
            let lps = g
                .token_logprobs
                .as_deref()
                .ok_or_else(|| Error::MissingLogprobs { id: g.id.clone() })?;
            Ok(if lps.is_empty() {
                f64::NEG_INFINITY
            } else {
                lps.iter().sum::<f64>() / lps.len() as f64
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RankResult::from_scores("mean-logp", scores))
}

/// Lowest mean Euclidean distance to the other generations in
/// probability-weighted unigram space. Score is the negated mean distance.
pub fn baseline_centroid(record: &PromptRecord) -> Result<RankResult> {
    for g in &record.generations {
        if g.token_logprobs.is_none() {
            return Err(Error::MissingLogprobs { id: g.id.clone() });
        }
    }
    let enc = similarity::encode_with(record, Tokenizer::Pretokenized, 1, true)?;
    let m = record.len();
    let scores = (0..m)
        .map(|i| {
            if m == 1 {
                return 0.0;
            }
            let total: f64 = (0..m)
                .filter(|&j| j != i)
                .map(|j| enc.vectors[i].distance(&enc.vectors[j]))
                .sum();
            -(total / (m - 1) as f64)
        })
        .collect();
    Ok(RankResult::from_scores("centroid", scores))
}

/// Longest token sequence first.
pub fn baseline_longest(record: &PromptRecord, tokenizer: Tokenizer) -> Result<RankResult> {
    let scores = record
        .generations
        .iter()
        .map(|g| ngram::generation_tokens(g, tokenizer).map(|t| t.len() as f64))
        .collect::<Result<Vec<_>>>()?;
    Ok(RankResult::from_scores("longest", scores))
}

/// Mean of each generation's vector entries over the whole vocabulary
/// (absent n-grams count as 0), highest first.
pub fn baseline_most_diverse(record: &PromptRecord, config: &SimConfig) -> Result<RankResult> {
    let (tokenizer, k, weighted) = match config.kind {
        SimKind::ExactMatch => (config.tokenizer, 1, false),
        kind => (config.tokenizer, kind.max_ngram(), kind.is_weighted()),
    };
    if weighted {
        for g in &record.generations {
            if g.token_logprobs.is_none() {
                return Err(Error::MissingLogprobs { id: g.id.clone() });
            }
        }
    }
    let enc = similarity::encode_with(record, tokenizer, k, weighted)?;
    let vsize = enc.vocab.len();
    let scores = enc
        .vectors
        .iter()
        .map(|v| {
            if vsize == 0 {
                0.0
            } else {
                v.entries.values().sum::<f64>() / vsize as f64
            }
        })
        .collect();
    Ok(RankResult::from_scores("most-diverse", scores))
}

/// Ranking method selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Gsc,
    Random,
    MeanLogp,
    Centroid,
    Longest,
    MostDiverse,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Gsc,
        Method::Random,
        Method::MeanLogp,
        Method::Centroid,
        Method::Longest,
        Method::MostDiverse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Gsc => "gsc",
            Method::Random => "random",
            Method::MeanLogp => "mean-logp",
            Method::Centroid => "centroid",
            Method::Longest => "longest",
            Method::MostDiverse => "most-diverse",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// A ranking method bound to its similarity configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ranker {
    pub method: Method,
    pub config: SimConfig,
}

impl Ranker {
    pub fn new(method: Method, config: SimConfig) -> Self {
        Ranker { method, config }
    }

    /// Display name, e.g. `gsc:wucs` or `centroid`.
    pub fn name(&self) -> String {
        match self.method {
            Method::Gsc => gsc_method_name(self.config.kind),
            m => m.as_str().to_owned(),
        }
    }

    /// `seed` is only read by the random baseline.
    pub fn rank(&self, record: &PromptRecord, seed: u64) -> Result<RankResult> {
        match self.method {
            Method::Gsc => rank(record, &self.config),
            Method::Random => Ok(baseline_random(record, seed)),
            Method::MeanLogp => baseline_mean_logp(record),
            Method::Centroid => baseline_centroid(record),
            Method::Longest => baseline_longest(record, self.config.tokenizer),
            Method::MostDiverse => baseline_most_diverse(record, &self.config),
        }
    }

    /// Top-k indices. With `ranked_negatives` and the GSC method, uses the greedy
    /// hard-negative selection; otherwise the first k of the ranking.
    pub fn select_top_k(
        &self,
        record: &PromptRecord,
        k: usize,
        ranked_negatives: bool,
        seed: u64,
    ) -> Result<Vec<usize>> {
        if k == 0 || k > record.len() {
            return Err(Error::Prompt {
                prompt_id: record.prompt_id.clone(),
                message: format!("k = {k} exceeds the {} available generations", record.len()),
            });
        }
        if ranked_negatives && self.method == Method::Gsc {
            let matrix = similarity::similarity_matrix(record, &self.config)?;
            let weights = if self.config.kind == SimKind::ConsensusWucs {
                Some(
                    record
                        .generations
                        .iter()
                        .map(consensus_weight)
                        .collect::<Result<Vec<_>>>()?,
                )
            } else {
                None
            };
            return ranked_select_weighted(&matrix, k, weights.as_deref());
        }
        let ranking = self.rank(record, seed)?;
        Ok(ranking.order[..k].to_vec())
    }
}
