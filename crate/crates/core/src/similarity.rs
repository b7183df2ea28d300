//! Pairwise similarity functions and the per-prompt similarity matrix.

use crate::corpus::{PromptRecord, SimConfig, SimKind, Tokenizer};
use crate::error::{Error, Result};
use crate::ngram::{self, NgramVector, Vocabulary};

/// 1 if the two answers are byte-equal after trimming surrounding whitespace.
pub fn exact_match_sim(a: &str, b: &str) -> f64 {
    if a.trim() == b.trim() {
        1.0
    } else {
        0.0
    }
}

/// `(1/|V|) v_i · v_j`, deliberately not normalized by the vector norms.
pub fn inner_product_sim(vi: &NgramVector, vj: &NgramVector, vocab_size: usize) -> f64 {
    if vocab_size == 0 {
        return 0.0;
    }
    vi.dot(vj) / vocab_size as f64
}

/// Cosine similarity; 0 when either vector is zero.
pub fn normalized_sim(vi: &NgramVector, vj: &NgramVector) -> f64 {
    unit_cosine(&vi.normalized(), &vj.normalized())
}

/// Cosine of two already-normalized vectors. Normalizing first maps parallel
/// vectors to the same unit vector, which then scores exactly 1.
fn unit_cosine(ui: &NgramVector, uj: &NgramVector) -> f64 {
    if ui.is_empty() || uj.is_empty() {
        return 0.0;
    }
    if ui.entries == uj.entries {
        return 1.0;
    }
    ui.dot(uj).clamp(0.0, 1.0)
}

/// Vocabulary and one vector per generation, in record order.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub vocab: Vocabulary,
    pub vectors: Vec<NgramVector>,
    pub tokens: Vec<Vec<String>>,
}

/// Builds the n-gram vectors `config` calls for. Weighted kinds use probability
/// vectors; all other kinds use presence indicators.
pub fn encode(record: &PromptRecord, config: &SimConfig) -> Result<Encoded> {
    encode_with(
        record,
        config.tokenizer,
        config.kind.max_ngram(),
        config.kind.is_weighted(),
    )
}

pub(crate) fn encode_with(record: &PromptRecord, tokenizer: Tokenizer, k: usize, weighted: bool) -> Result<Encoded> {
    let tokens = record
        .generations
        .iter()
        .map(|g| ngram::generation_tokens(g, tokenizer))
        .collect::<Result<Vec<_>>>()?;
    let vocab = ngram::build_vocabulary(tokens.iter().map(Vec::as_slice), k);
    let vectors = record
        .generations
        .iter()
        .zip(&tokens)
        .map(|(g, t)| {
            if weighted {
                ngram::weighted_vector(&g.id, t, g.token_logprobs.as_deref(), &vocab, k)
            } else {
                ngram::binary_vector(&g.id, t, &vocab, k)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Encoded { vocab, vectors, tokens })
}

/// Dense M×M matrix of `Sim(i, j)`.
///
/// Inner-product similarities also keep the unscaled dot products, so that row
/// aggregates are formed before the single division by `|V|`. For presence
/// vectors the dot products are integers, which keeps mathematically tied
/// scores bit-identical and the lowest-index tie rule honest.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    size: usize,
    values: Vec<f64>,
    raw: Vec<f64>,
    denom: f64,
    pub config: SimConfig,
}

impl SimilarityMatrix {
    /// Builds a matrix from row-major values. Panics if `values.len() != size * size`.
    pub fn from_values(size: usize, values: Vec<f64>, config: SimConfig) -> Self {
        assert_eq!(values.len(), size * size, "matrix must be square");
        SimilarityMatrix {
            size,
            raw: values.clone(),
            values,
            denom: 1.0,
            config,
        }
    }

    fn from_raw(size: usize, raw: Vec<f64>, denom: f64, config: SimConfig) -> Self {
        let values = raw.iter().map(|r| r / denom).collect();
        SimilarityMatrix {
            size,
            values,
            raw,
            denom,
            config,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.size..(i + 1) * self.size]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row `i` before division by [`Self::denom`].
    pub fn raw_row(&self, i: usize) -> &[f64] {
        &self.raw[i * self.size..(i + 1) * self.size]
    }

    /// `row(i)[j] == raw_row(i)[j] / denom()`; `|V|` for inner-product kinds, else 1.
    pub fn denom(&self) -> f64 {
        self.denom
    }

    /// Multiplies every entry by `factor`.
    pub fn scaled(&self, factor: f64) -> SimilarityMatrix {
        SimilarityMatrix {
            size: self.size,
            values: self.values.iter().map(|v| v * factor).collect(),
            raw: self.raw.iter().map(|v| v * factor).collect(),
            denom: self.denom,
            config: self.config,
        }
    }
}

/// Computes `Sim(i, j)` for every pair of generations in `record`.
///
/// The upper triangle is computed and mirrored, so the result is exactly symmetric.
/// For `ConsensusWucs` this is the WUCS matrix; the consensus weight is applied at ranking.
pub fn similarity_matrix(record: &PromptRecord, config: &SimConfig) -> Result<SimilarityMatrix> {
    config.check_record(record)?;
    let m = record.len();
    let mut values = vec![0.0; m * m];
    let mut fill = |sim: &dyn Fn(usize, usize) -> f64| {
        for i in 0..m {
            for j in i..m {
                let s = sim(i, j);
                values[i * m + j] = s;
                values[j * m + i] = s;
            }
        }
    };
    match config.kind {
        SimKind::ExactMatch => {
            let answers = record
                .generations
                .iter()
                .map(|g| {
                    g.answer
                        .as_deref()
                        .ok_or_else(|| Error::MissingAnswer { id: g.id.clone() })
                })
                .collect::<Result<Vec<_>>>()?;
            fill(&|i, j| exact_match_sim(answers[i], answers[j]));
        }
        SimKind::NormalizedWucs => {
            let enc = encode(record, config)?;
            let units: Vec<NgramVector> = enc.vectors.iter().map(NgramVector::normalized).collect();
            fill(&|i, j| unit_cosine(&units[i], &units[j]));
        }
        SimKind::Ucs | SimKind::Ncs(_) | SimKind::Wucs | SimKind::ConsensusWucs => {
            let enc = encode(record, config)?;
            fill(&|i, j| enc.vectors[i].dot(&enc.vectors[j]));
            let denom = enc.vocab.len().max(1) as f64;
            return Ok(SimilarityMatrix::from_raw(m, values, denom, *config));
        }
    }
    Ok(SimilarityMatrix::from_values(m, values, *config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Generation;
    use crate::ngram::Ngram;
    use indexmap::IndexMap;
    use proptest::prelude::*;

    fn vec_of(pairs: &[(&str, f64)]) -> NgramVector {
        NgramVector {
            source_id: "v".into(),
            entries: pairs
                .iter()
                .map(|(k, w)| (Ngram(vec![k.to_string()]), *w))
                .collect::<IndexMap<_, _>>(),
        }
    }

    fn text_record(texts: &[&str]) -> PromptRecord {
        PromptRecord::new(
            "p",
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Generation::new(format!("g{i}"), *t).with_tokens(t.split_whitespace()))
                .collect(),
        )
    }

    #[test]
    fn exact_match_cases() {
        assert_eq!(exact_match_sim("42", "42"), 1.0);
        assert_eq!(exact_match_sim("42", "43"), 0.0);
        assert_eq!(exact_match_sim(" 42", "42"), 1.0);
        assert_eq!(exact_match_sim("A", "a"), 0.0);
    }

    #[test]
    fn inner_product_cases() {
        let vi = vec_of(&[("a", 1.0), ("b", 1.0), ("c", 1.0)]);
        let vj = vec_of(&[("a", 1.0), ("b", 1.0), ("d", 1.0)]);
        assert_eq!(inner_product_sim(&vi, &vj, 4), 0.5);
        assert_eq!(
            inner_product_sim(&vec_of(&[("a", 1.0)]), &vec_of(&[("b", 1.0)]), 2),
            0.0
        );
        let full = vec_of(&[("a", 1.0), ("b", 1.0), ("c", 1.0)]);
        assert_eq!(inner_product_sim(&full, &full, 3), 1.0);
    }

    #[test]
    fn cosine_cases() {
        let a = vec_of(&[("a", 1.0)]);
        let ab = vec_of(&[("a", 1.0), ("b", 1.0)]);
        assert!((normalized_sim(&a, &ab) - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((normalized_sim(&ab, &ab) - 1.0).abs() < 1e-12);
        assert_eq!(normalized_sim(&a, &vec_of(&[("b", 1.0)])), 0.0);
        assert_eq!(normalized_sim(&a, &vec_of(&[])), 0.0);
    }

    #[test]
    fn identical_generations() {
        let rec = text_record(&["x y z", "x y z", "x y z"]);
        let m = similarity_matrix(&rec, &SimConfig::ucs()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.get(i, j), 1.0);
            }
        }
    }

    #[test]
    fn exact_match_matrix() {
        let rec = PromptRecord::new(
            "p",
            ["A", "A", "B"]
                .iter()
                .enumerate()
                .map(|(i, a)| Generation::new(format!("g{i}"), "t").with_answer(*a))
                .collect(),
        );
        let cfg = SimConfig::new(SimKind::ExactMatch, Tokenizer::Whitespace).unwrap();
        let m = similarity_matrix(&rec, &cfg).unwrap();
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(0, 2), 0.0);
        assert_eq!(m.get(1, 2), 0.0);
        assert_eq!(m.get(2, 0), 0.0);
    }

    #[test]
    fn missing_logprobs_named() {
        let rec = text_record(&["a", "b"]);
        let cfg = SimConfig::new(SimKind::Wucs, Tokenizer::Pretokenized).unwrap();
        assert_eq!(
            similarity_matrix(&rec, &cfg).unwrap_err(),
            Error::MissingLogprobs { id: "g0".into() }
        );
    }

    #[test]
    fn whitespace_tokenizer_without_tokens() {
        let rec = PromptRecord::new("p", vec![Generation::new("a", "f(x)"), Generation::new("b", "f(y)")]);
        let cfg = SimConfig::new(SimKind::Ucs, Tokenizer::Whitespace).unwrap();
        let m = similarity_matrix(&rec, &cfg).unwrap();
        // V = {f, (, x, ), y}; shared: f ( )
        assert!((m.get(0, 1) - 3.0 / 5.0).abs() < 1e-15);
    }

    fn record_strategy() -> impl Strategy<Value = PromptRecord> {
        let gen = (
            prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 1..6),
            prop::collection::vec(0.05f64..1.0, 6),
        );
        prop::collection::vec(gen, 1..6).prop_map(|gens| {
            PromptRecord::new(
                "p",
                gens.into_iter()
                    .enumerate()
                    .map(|(i, (toks, probs))| {
                        let lps: Vec<f64> = probs[..toks.len()].iter().map(|p| p.ln()).collect();
                        Generation::new(format!("g{i}"), toks.join(" "))
                            .with_tokens(toks)
                            .with_logprobs(lps)
                    })
                    .collect(),
            )
        })
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(rec in record_strategy()) {
            for kind in [SimKind::Ucs, SimKind::Ncs(3), SimKind::Wucs, SimKind::NormalizedWucs] {
                let cfg = SimConfig::new(kind, Tokenizer::Pretokenized).unwrap();
                let m = similarity_matrix(&rec, &cfg).unwrap();
                for i in 0..m.size() {
                    for j in 0..m.size() {
                        prop_assert_eq!(m.get(i, j), m.get(j, i));
                        prop_assert!((0.0..=1.0).contains(&m.get(i, j)));
                    }
                }
            }
        }

        #[test]
        fn ucs_bounded_by_self_similarity(rec in record_strategy()) {
            let m = similarity_matrix(&rec, &SimConfig::ucs()).unwrap();
            for i in 0..m.size() {
                for j in 0..m.size() {
                    prop_assert!(m.get(i, j) <= m.get(i, i).min(m.get(j, j)));
                }
            }
        }

        #[test]
        fn wucs_with_unit_probabilities_is_ucs(rec in record_strategy()) {
            let mut unit = rec.clone();
            for g in &mut unit.generations {
                let n = g.tokens.as_ref().unwrap().len();
                g.token_logprobs = Some(vec![0.0; n]);
            }
            let wucs = SimConfig::new(SimKind::Wucs, Tokenizer::Pretokenized).unwrap();
            let a = similarity_matrix(&unit, &wucs).unwrap();
            let b = similarity_matrix(&unit, &SimConfig::ucs()).unwrap();
            prop_assert_eq!(a.values(), b.values());
        }

        #[test]
        fn shared_token_never_lowers_dot(rec in record_strategy(), i in 0usize..6, j in 0usize..6) {
            let m = rec.len();
            let (i, j) = (i % m, j % m);
            let unnorm = |r: &PromptRecord| {
                let enc = encode(r, &SimConfig::ucs()).unwrap();
                enc.vectors[i].dot(&enc.vectors[j])
            };
            let before = unnorm(&rec);
            let mut grown = rec.clone();
            for idx in [i, j] {
                let g = &mut grown.generations[idx];
                g.tokens.as_mut().unwrap().push("zz".into());
                g.token_logprobs.as_mut().unwrap().push(0.0);
            }
            prop_assert!(unnorm(&grown) >= before);
        }
    }
}
