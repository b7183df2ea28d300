//! Candidate-generation corpus: record types, validation and line-delimited JSON I/O.
//!
//! Each input line holds one [`PromptRecord`]:
//!
//! ```text
//! {"prompt_id":"p0","references":["..."],"generations":[
//!   {"id":"g0","text":"a b","tokens":["a","b"],"token_logprobs":[-0.1,-0.2],"answer":"a","correct":true}
//! ]}
//! ```

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sampled candidate output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generation {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    /// Natural-log token probabilities, aligned with `tokens`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
}

impl Generation {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Generation {
            id: id.into(),
            text: text.into(),
            tokens: None,
            token_logprobs: None,
            answer: None,
            correct: None,
        }
    }

    pub fn with_tokens<S: Into<String>>(mut self, tokens: impl IntoIterator<Item = S>) -> Self {
        self.tokens = Some(tokens.into_iter().map(Into::into).collect());
        self
    }

    pub fn with_logprobs(mut self, logprobs: impl Into<Vec<f64>>) -> Self {
        self.token_logprobs = Some(logprobs.into());
        self
    }

    pub fn with_answer(mut self, answer: impl Into<String>) -> Self {
        self.answer = Some(answer.into());
        self
    }

    pub fn with_correct(mut self, correct: bool) -> Self {
        self.correct = Some(correct);
        self
    }

    /// Checks the per-generation invariants.
    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Error::Generation {
            id: self.id.clone(),
            message,
        };
        if self.text.is_empty() {
            return Err(fail("text is empty".into()));
        }
        if let Some(lps) = &self.token_logprobs {
            let Some(tokens) = &self.tokens else {
                return Err(fail("token_logprobs given without tokens".into()));
            };
            if tokens.len() != lps.len() {
                return Err(fail(format!(
                    "{} tokens but {} token_logprobs",
                    tokens.len(),
                    lps.len()
                )));
            }
            if let Some((pos, lp)) = lps.iter().enumerate().find(|(_, lp)| lp.is_nan() || **lp > 0.0) {
                return Err(fail(format!(
                    "token_logprobs[{pos}] = {lp} is not a log-probability (must be <= 0)"
                )));
            }
        }
        Ok(())
    }
}

/// A prompt together with its sampled candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptRecord {
    pub prompt_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub references: Option<Vec<String>>,
    pub generations: Vec<Generation>,
}

impl PromptRecord {
    pub fn new(prompt_id: impl Into<String>, generations: Vec<Generation>) -> Self {
        PromptRecord {
            prompt_id: prompt_id.into(),
            references: None,
            generations,
        }
    }

    pub fn with_references<S: Into<String>>(mut self, refs: impl IntoIterator<Item = S>) -> Self {
        self.references = Some(refs.into_iter().map(Into::into).collect());
        self
    }

    /// Number of candidates (M).
    pub fn len(&self) -> usize {
        self.generations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generations.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.generations.is_empty() {
            return Err(Error::Prompt {
                prompt_id: self.prompt_id.clone(),
                message: "record has no generations".into(),
            });
        }
        let mut seen = HashSet::with_capacity(self.generations.len());
        for g in &self.generations {
            g.validate()?;
            if !seen.insert(g.id.as_str()) {
                return Err(Error::Prompt {
                    prompt_id: self.prompt_id.clone(),
                    message: format!("duplicate generation id {}", g.id),
                });
            }
        }
        Ok(())
    }

    /// Restriction of this record to the given generation indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> PromptRecord {
        PromptRecord {
            prompt_id: self.prompt_id.clone(),
            references: self.references.clone(),
            generations: indices.iter().map(|&i| self.generations[i].clone()).collect(),
        }
    }
}

/// Reads line-delimited records. Blank lines are skipped; line numbers in errors are 1-based.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<PromptRecord>> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_record(&line, line_no)?);
    }
    Ok(records)
}

/// Parses a single record line.
pub fn parse_record(line: &str, line_no: usize) -> Result<PromptRecord> {
    let record: PromptRecord = serde_json::from_str(line).map_err(|e| Error::Malformed {
        line: line_no,
        message: e.to_string(),
    })?;
    record.validate().map_err(|e| Error::Validation {
        line: line_no,
        message: e.to_string(),
    })?;
    Ok(record)
}

pub fn parse_corpus_str(input: &str) -> Result<Vec<PromptRecord>> {
    parse_corpus(input.as_bytes())
}

/// Writes one JSON object per line.
pub fn write_corpus<W: Write>(mut out: W, records: &[PromptRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// How generation text is split into tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Tokenizer {
    /// Unicode whitespace, with every punctuation character split off as its own token.
    Whitespace,
    /// Use the generation's `tokens` as given.
    #[default]
    Pretokenized,
}

/// Pairwise similarity function used to build a similarity matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimKind {
    /// Indicator of equal extracted answers (majority vote).
    ExactMatch,
    /// Unnormalized inner product of binary unigram vectors, scaled by 1/|V|.
    Ucs,
    /// As `Ucs`, over all n-grams with n in 1..=k.
    Ncs(usize),
    /// Inner product of probability-weighted unigram vectors, scaled by 1/|V|.
    Wucs,
    /// `Wucs` scores multiplied by each generation's geometric-mean token probability.
    ConsensusWucs,
    /// Cosine similarity of probability-weighted unigram vectors.
    NormalizedWucs,
}

impl SimKind {
    /// Largest n-gram length used by this kind.
    pub fn max_ngram(self) -> usize {
        match self {
            SimKind::Ncs(k) => k,
            _ => 1,
        }
    }

    /// Whether the kind builds probability-weighted vectors.
    pub fn is_weighted(self) -> bool {
        matches!(self, SimKind::Wucs | SimKind::ConsensusWucs | SimKind::NormalizedWucs)
    }

    pub fn name(self) -> String {
        match self {
            SimKind::ExactMatch => "exact".into(),
            SimKind::Ucs => "ucs".into(),
            SimKind::Ncs(k) => format!("ngram:{k}"),
            SimKind::Wucs => "wucs".into(),
            SimKind::ConsensusWucs => "consensus-wucs".into(),
            SimKind::NormalizedWucs => "cosine".into(),
        }
    }
}

impl std::str::FromStr for SimKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "exact" => SimKind::ExactMatch,
            "ucs" => SimKind::Ucs,
            "wucs" => SimKind::Wucs,
            "consensus-wucs" => SimKind::ConsensusWucs,
            "cosine" => SimKind::NormalizedWucs,
            other => {
                let k = other
                    .strip_prefix("ngram:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown similarity {other:?}")))?;
                if k == 0 {
                    return Err(Error::InvalidArgument("ngram order must be >= 1".into()));
                }
                SimKind::Ncs(k)
            }
        })
    }
}

/// Similarity selection: which function, and how text becomes tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SimConfig {
    pub kind: SimKind,
    pub tokenizer: Tokenizer,
}

impl SimConfig {
    pub fn new(kind: SimKind, tokenizer: Tokenizer) -> Result<Self> {
        let config = SimConfig { kind, tokenizer };
        config.check()?;
        Ok(config)
    }

    pub fn ucs() -> Self {
        SimConfig {
            kind: SimKind::Ucs,
            tokenizer: Tokenizer::Pretokenized,
        }
    }

    /// Static checks that do not depend on the data.
    pub fn check(&self) -> Result<()> {
        if let SimKind::Ncs(0) = self.kind {
            return Err(Error::InvalidArgument("ngram order must be >= 1".into()));
        }
        if self.kind.is_weighted() && self.tokenizer != Tokenizer::Pretokenized {
            return Err(Error::InvalidArgument(format!(
                "{} weights tokens by their log-probabilities and needs the pretokenized tokenizer",
                self.kind.name()
            )));
        }
        Ok(())
    }

    /// Checks that `record` carries every field this configuration reads.
    pub fn check_record(&self, record: &PromptRecord) -> Result<()> {
        self.check()?;
        for g in &record.generations {
            if self.kind == SimKind::ExactMatch && g.answer.is_none() {
                return Err(Error::MissingAnswer { id: g.id.clone() });
            }
            if self.kind.is_weighted() && g.token_logprobs.is_none() {
                return Err(Error::MissingLogprobs { id: g.id.clone() });
            }
            if self.kind != SimKind::ExactMatch && self.tokenizer == Tokenizer::Pretokenized && g.tokens.is_none() {
                return Err(Error::MissingTokens { id: g.id.clone() });
            }
        }
        Ok(())
    }
}
