//! Tokenization and n-gram vectors.
//!
//! A generation is encoded as a sparse vector over the per-prompt n-gram vocabulary:
//! binary presence indicators, or the mean probability of each n-gram's occurrences.

use std::fmt;

use indexmap::{IndexMap, IndexSet};

use crate::corpus::{Generation, Tokenizer};
use crate::error::{Error, Result};

/// A contiguous run of 1..=K tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ngram(pub Vec<String>);

impl Ngram {
    pub fn arity(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for Ngram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.join(" "))
    }
}

impl<S: Into<String>> FromIterator<S> for Ngram {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Ngram(iter.into_iter().map(Into::into).collect())
    }
}

/// Multiset of n-grams in first-occurrence order.
pub type NgramCounts = IndexMap<Ngram, usize>;

/// Per-prompt vocabulary V, in first-occurrence order.
pub type Vocabulary = IndexSet<Ngram>;

fn is_split_punct(c: char) -> bool {
    c.is_ascii_punctuation() && c != '_'
}

/// Splits `text` into tokens.
///
/// `Whitespace` splits on Unicode whitespace and emits every ASCII punctuation
/// character (except `_`, which stays inside identifiers) as a token of its own.
/// `Pretokenized` returns `pretokens` unchanged.
pub fn tokenize(text: &str, mode: Tokenizer, pretokens: Option<&[String]>) -> Result<Vec<String>> {
    match mode {
        Tokenizer::Pretokenized => pretokens
            .map(<[String]>::to_vec)
            .ok_or_else(|| Error::InvalidArgument("pretokenized mode requires a token list".into())),
        Tokenizer::Whitespace => {
            let mut out = Vec::new();
            for word in text.split_whitespace() {
                let mut current = String::new();
                for c in word.chars() {
                    if is_split_punct(c) {
                        if !current.is_empty() {
                            out.push(std::mem::take(&mut current));
                        }
                        out.push(c.to_string());
                    } else {
                        current.push(c);
                    }
                }
                if !current.is_empty() {
                    out.push(current);
                }
            }
            Ok(out)
        }
    }
}

/// Tokens for one generation under `mode`.
pub fn generation_tokens(g: &Generation, mode: Tokenizer) -> Result<Vec<String>> {
    if mode == Tokenizer::Pretokenized && g.tokens.is_none() {
        return Err(Error::MissingTokens { id: g.id.clone() });
    }
    tokenize(&g.text, mode, g.tokens.as_deref())
}

/// All contiguous windows of length 1..=k with their multiplicities.
pub fn extract_ngrams(tokens: &[String], k: usize) -> NgramCounts {
    let mut counts = NgramCounts::new();
    for n in 1..=k.min(tokens.len()) {
        for window in tokens.windows(n) {
            *counts.entry(Ngram(window.to_vec())).or_insert(0) += 1;
        }
    }
    counts
}

/// Union of the n-grams of every token list.
pub fn build_vocabulary<'a, I>(token_lists: I, k: usize) -> Vocabulary
where
    I: IntoIterator<Item = &'a [String]>,
{
    let mut vocab = Vocabulary::new();
    for tokens in token_lists {
        for n in 1..=k.min(tokens.len()) {
            for window in tokens.windows(n) {
                if !vocab.contains(window) {
                    vocab.insert(Ngram(window.to_vec()));
                }
            }
        }
    }
    vocab
}

impl std::borrow::Borrow<[String]> for Ngram {
    fn borrow(&self) -> &[String] {
        &self.0
    }
}

/// Sparse vector over a vocabulary. Absent keys have weight 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramVector {
    pub source_id: String,
    pub entries: IndexMap<Ngram, f64>,
}

impl NgramVector {
    pub fn get(&self, key: &Ngram) -> f64 {
        self.entries.get(key).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dot(&self, other: &NgramVector) -> f64 {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        // Exact summation makes `a.dot(b)` and `b.dot(a)` bit-identical.
        exact_sum(
            small
                .entries
                .iter()
                .filter_map(|(k, w)| large.entries.get(k).map(|v| w * v)),
        )
    }

    pub fn norm(&self) -> f64 {
        self.entries.values().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// This vector scaled to unit length; the zero vector is returned unchanged.
    pub fn normalized(&self) -> NgramVector {
        let norm = self.norm();
        if norm == 0.0 {
            return self.clone();
        }
        NgramVector {
            source_id: self.source_id.clone(),
            entries: self.entries.iter().map(|(k, w)| (k.clone(), w / norm)).collect(),
        }
    }

    /// Euclidean distance over the union of keys.
    pub fn distance(&self, other: &NgramVector) -> f64 {
        let mut sq = 0.0;
        for (k, w) in &self.entries {
            let d = w - other.get(k);
            sq += d * d;
        }
        for (k, w) in &other.entries {
            if !self.entries.contains_key(k) {
                sq += w * w;
            }
        }
        sq.sqrt()
    }
}

/// Correctly rounded sum of `terms` (Shewchuk's exact partials, as in Python's
/// `math.fsum`). The result does not depend on term order, and exactly
/// cancelling terms cancel exactly, so mathematically tied aggregates of the
/// same similarity values stay bit-identical.
pub fn exact_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in terms {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    let Some(mut hi) = partials.pop() else {
        return 0.0;
    };
    let mut lo = 0.0;
    while let Some(y) = partials.pop() {
        let x = hi;
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    // Round half-even across the remaining partials.
    if let Some(&next) = partials.last() {
        if (lo < 0.0 && next < 0.0) || (lo > 0.0 && next > 0.0) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
    }
    hi
}

/// Presence indicators: weight 1 for each n-gram of `tokens` found in `vocab`.
pub fn binary_vector(id: &str, tokens: &[String], vocab: &Vocabulary, k: usize) -> Result<NgramVector> {
    let mut entries = IndexMap::new();
    for n in 1..=k.min(tokens.len()) {
        for window in tokens.windows(n) {
            if let Some(key) = vocab.get(window) {
                entries.entry(key.clone()).or_insert(1.0);
            }
        }
    }
    if entries.is_empty() && !tokens.is_empty() {
        return Err(Error::Internal(format!(
            "generation {id} shares no n-gram with its own vocabulary"
        )));
    }
    Ok(NgramVector {
        source_id: id.to_owned(),
        entries,
    })
}

/// Occurrence-count correction `|g| / (|g| - n - 1)` applied when n-grams longer
/// than one token are in play. A denominator below 1 is replaced by 1.
pub fn length_correction(len: usize, n: usize) -> f64 {
    let denom = len as f64 - n as f64 - 1.0;
    len as f64 / if denom < 1.0 { 1.0 } else { denom }
}

/// Probability-weighted vector: each n-gram's weight is the mean probability of its
/// occurrences, where an occurrence of length n has the geometric mean probability
/// of its tokens (times [`length_correction`] when `k > 1`). Weights are clamped to (0, 1].
pub fn weighted_vector(
    id: &str,
    tokens: &[String],
    logprobs: Option<&[f64]>,
    vocab: &Vocabulary,
    k: usize,
) -> Result<NgramVector> {
    let logprobs = logprobs.ok_or_else(|| Error::MissingLogprobs { id: id.to_owned() })?;
    if logprobs.len() != tokens.len() {
        return Err(Error::Generation {
            id: id.to_owned(),
            message: format!("{} tokens but {} token_logprobs", tokens.len(), logprobs.len()),
        });
    }
    let len = tokens.len();
    let mut acc: IndexMap<Ngram, (f64, usize)> = IndexMap::new();
    for n in 1..=k.min(len) {
        let correction = if k > 1 { length_correction(len, n) } else { 1.0 };
        for (start, window) in tokens.windows(n).enumerate() {
            let Some(key) = vocab.get(window) else {
                continue;
            };
            let mean_lp = logprobs[start..start + n].iter().sum::<f64>() / n as f64;
            let p = mean_lp.exp() * correction;
            let slot = acc.entry(key.clone()).or_insert((0.0, 0));
            slot.0 += p;
            slot.1 += 1;
        }
    }
    if acc.is_empty() && len > 0 {
        return Err(Error::Internal(format!(
            "generation {id} shares no n-gram with its own vocabulary"
        )));
    }
    let entries = acc
        .into_iter()
        .map(|(key, (sum, count))| (key, (sum / count as f64).clamp(f64::MIN_POSITIVE, 1.0)))
        .collect();
    Ok(NgramVector {
        source_id: id.to_owned(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn ng(s: &str) -> Ngram {
        Ngram(toks(s))
    }

    #[test]
    fn whitespace_splits_punctuation() {
        let got = tokenize("def f(x):", Tokenizer::Whitespace, None).unwrap();
        assert_eq!(got, ["def", "f", "(", "x", ")", ":"]);
    }

    #[test]
    fn underscore_stays_in_identifier() {
        let got = tokenize("my_var = 1", Tokenizer::Whitespace, None).unwrap();
        assert_eq!(got, ["my_var", "=", "1"]);
    }

    #[test]
    fn unicode_whitespace() {
        let got = tokenize("a\u{00a0}b\u{2003}c\n", Tokenizer::Whitespace, None).unwrap();
        assert_eq!(got, ["a", "b", "c"]);
    }

    #[test]
    fn empty_text() {
        assert!(tokenize("", Tokenizer::Whitespace, None).unwrap().is_empty());
    }

    #[test]
    fn pretokenized_identity() {
        let pre = toks("foo bar");
        assert_eq!(tokenize("ignored", Tokenizer::Pretokenized, Some(&pre)).unwrap(), pre);
        assert!(tokenize("x", Tokenizer::Pretokenized, None).is_err());
    }

    #[test]
    fn ngram_counts() {
        let t = toks("a b a");
        let c1 = extract_ngrams(&t, 1);
        assert_eq!(c1.len(), 2);
        assert_eq!(c1[&ng("a")], 2);
        assert_eq!(c1[&ng("b")], 1);

        let c2 = extract_ngrams(&t, 2);
        assert_eq!(c2.len(), 4);
        assert_eq!(c2[&ng("a b")], 1);
        assert_eq!(c2[&ng("b a")], 1);
        assert_eq!(c2[&ng("a")], 2);

        assert!(extract_ngrams(&[], 3).is_empty());
    }

    #[test]
    fn vocabulary_union() {
        let a = toks("a b");
        let b = toks("b c");
        let v = build_vocabulary([a.as_slice(), b.as_slice()], 1);
        assert_eq!(v.iter().cloned().collect::<Vec<_>>(), [ng("a"), ng("b"), ng("c")]);

        let aa = toks("a a");
        let v = build_vocabulary([aa.as_slice()], 1);
        assert_eq!(v.len(), 1);

        let v2 = build_vocabulary([a.as_slice(), a.as_slice()], 2);
        let single = build_vocabulary([a.as_slice()], 2);
        assert_eq!(v2, single);
    }

    #[test]
    fn binary_presence() {
        let docs = [toks("a b"), toks("c")];
        let v = build_vocabulary(docs.iter().map(Vec::as_slice), 1);
        let bv = binary_vector("g", &docs[0], &v, 1).unwrap();
        assert_eq!(bv.len(), 2);
        assert_eq!(bv.get(&ng("a")), 1.0);
        assert_eq!(bv.get(&ng("b")), 1.0);
        assert_eq!(bv.get(&ng("c")), 0.0);

        let t = toks("a a b");
        let v = build_vocabulary([t.as_slice()], 1);
        let bv = binary_vector("g", &t, &v, 1).unwrap();
        assert_eq!(bv.entries.values().copied().collect::<Vec<_>>(), [1.0, 1.0]);
    }

    #[test]
    fn binary_outside_vocab_is_internal_error() {
        let v = build_vocabulary([toks("x").as_slice()], 1);
        let err = binary_vector("g", &toks("a"), &v, 1).unwrap_err();
        assert!(matches!(err, Error::Internal(_)));
    }

    #[test]
    fn empty_tokens_give_empty_vector() {
        let v = build_vocabulary([toks("x").as_slice()], 1);
        assert!(binary_vector("g", &[], &v, 1).unwrap().is_empty());
        assert!(weighted_vector("g", &[], Some(&[]), &v, 1).unwrap().is_empty());
    }

    #[test]
    fn weighted_mean_of_occurrences() {
        let t = toks("a a");
        let v = build_vocabulary([t.as_slice()], 1);
        let lps = [0.5f64.ln(), 0.9f64.ln()];
        let wv = weighted_vector("g", &t, Some(&lps), &v, 1).unwrap();
        assert!((wv.get(&ng("a")) - 0.7).abs() < 1e-12);

        let t = toks("z");
        let v = build_vocabulary([t.as_slice()], 1);
        let wv = weighted_vector("g", &t, Some(&[0.3f64.ln()]), &v, 1).unwrap();
        assert!((wv.get(&ng("z")) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn weighted_requires_logprobs() {
        let t = toks("a");
        let v = build_vocabulary([t.as_slice()], 1);
        assert_eq!(
            weighted_vector("g", &t, None, &v, 1).unwrap_err(),
            Error::MissingLogprobs { id: "g".into() }
        );
    }

    #[test]
    fn bigram_uses_geometric_mean_and_correction() {
        // tokens a b c d e, probabilities .8 .5 .9 .9 .9, K = 2.
        let t = toks("a b c d e");
        let probs = [0.8f64, 0.5, 0.9, 0.9, 0.9];
        let lps: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
        let v = build_vocabulary([t.as_slice()], 2);
        let wv = weighted_vector("g", &t, Some(&lps), &v, 2).unwrap();
        // bigram (a b): sqrt(.8*.5) = .632455..., correction 5/(5-2-1) = 2.5 -> clamped to 1.
        assert_eq!(wv.get(&ng("a b")), 1.0);
        // unigram b: .5 * 5/(5-1-1) = .8333...
        assert!((wv.get(&ng("b")) - 0.5 * 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn exact_sum_cases() {
        assert_eq!(exact_sum([]), 0.0);
        assert_eq!(exact_sum([0.1; 10]), 1.0);
        assert_eq!(exact_sum([1e100, 1.0, -1e100, 1e-100]), 1.0);
        let (a, b) = (0.6296548148515494, 0.08110780459815482);
        assert_eq!(exact_sum([-a, b, a]), exact_sum([-b, b, b]));
    }

    #[test]
    fn correction_guard() {
        assert_eq!(length_correction(10, 1), 10.0 / 8.0);
        assert_eq!(length_correction(10, 4), 10.0 / 5.0);
        // denominator 0 or negative is replaced by 1
        assert_eq!(length_correction(2, 1), 2.0);
        assert_eq!(length_correction(3, 3), 3.0);
    }

    #[test]
    fn weights_in_unit_interval() {
        let t = toks("a b a c");
        let lps = [-50.0, -800.0, -0.1, 0.0];
        let v = build_vocabulary([t.as_slice()], 3);
        let wv = weighted_vector("g", &t, Some(&lps), &v, 3).unwrap();
        assert!(wv.entries.values().all(|&w| w > 0.0 && w <= 1.0));
        assert!(wv.entries.keys().all(|k| k.arity() <= 3));
    }

    fn token_list() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 0..=8)
            .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest! {
        #[test]
        fn ngram_multiplicities_sum(t in token_list(), k in 1usize..=4) {
            let total: usize = extract_ngrams(&t, k).values().sum();
            let l = t.len();
            let expected: usize = (1..=k.min(l)).map(|n| l - n + 1).sum();
            prop_assert_eq!(total, expected);
        }

        #[test]
        fn unit_probabilities_degenerate_to_binary(
            docs in prop::collection::vec(token_list(), 1..5),
            k in 1usize..=3,
        ) {
            let vocab = build_vocabulary(docs.iter().map(Vec::as_slice), k);
            for (i, d) in docs.iter().enumerate() {
                let id = format!("g{i}");
                let zeros = vec![0.0; d.len()];
                let w = weighted_vector(&id, d, Some(&zeros), &vocab, k).unwrap();
                let b = binary_vector(&id, d, &vocab, k).unwrap();
                prop_assert_eq!(w, b);
            }
        }

        #[test]
        fn dot_commutes_bitwise(a in token_list(), b in token_list(), pa in 0.01f64..1.0, pb in 0.01f64..1.0) {
            let vocab = build_vocabulary([a.as_slice(), b.as_slice()], 2);
            let lp = |t: &[String], p: f64| (0..t.len()).map(|i| (p * (i + 1) as f64).min(1.0).ln()).collect::<Vec<_>>();
            let va = weighted_vector("a", &a, Some(&lp(&a, pa)), &vocab, 2).unwrap();
            let vb = weighted_vector("b", &b, Some(&lp(&b, pb)), &vocab, 2).unwrap();
            prop_assert_eq!(va.dot(&vb).to_bits(), vb.dot(&va).to_bits());
        }

        #[test]
        fn exact_sum_is_order_free(mut xs in prop::collection::vec(-1e3f64..1e3, 0..12), seed in any::<u64>()) {
            let a = exact_sum(xs.iter().copied());
            let n = xs.len().max(1);
            xs.rotate_left((seed as usize) % n);
            xs.reverse();
            prop_assert_eq!(a.to_bits(), exact_sum(xs.iter().copied()).to_bits());
        }

        #[test]
        fn vocabulary_union_commutes(docs in prop::collection::vec(token_list(), 1..5), k in 1usize..=3) {
            let fwd: std::collections::BTreeSet<_> =
                build_vocabulary(docs.iter().map(Vec::as_slice), k).into_iter().collect();
            let rev: std::collections::BTreeSet<_> =
                build_vocabulary(docs.iter().rev().map(Vec::as_slice), k).into_iter().collect();
            prop_assert_eq!(fwd, rev);
        }
    }
}
