//! Seeded synthetic corpora for tests, benchmarks and demos.
//!
//! Every prompt has a hidden canonical token sequence. Each generation copies it,
//! replacing each token with probability `noise` (drawn per prompt). Replaced tokens
//! get low probabilities, kept tokens high ones. A generation is labeled correct iff
//! it reproduces the canonical sequence exactly; its answer is its last token.

use rand::Rng;

use crate::corpus::{Generation, PromptRecord};
use crate::sim::trial_rng;

const WORDS: &[&str] = &[
    "def", "return", "x", "y", "+", "-", "*", "(", ")", ":", "if", "else", "for", "in", "range", "sum", "len", "i",
    "0", "1", "n", "result", "=", "while", "print",
];

/// `n_prompts` records with `n_generations` candidates each.
pub fn corpus(n_prompts: usize, n_generations: usize, seed: u64) -> Vec<PromptRecord> {
    (0..n_prompts).map(|p| prompt(p, n_generations, seed)).collect()
}

fn pick<R: Rng>(rng: &mut R) -> String {
    WORDS[rng.random_range(0..WORDS.len())].to_owned()
}

fn prompt(p: usize, n_generations: usize, seed: u64) -> PromptRecord {
    let mut rng = trial_rng(seed, p as u64);
    let len = rng.random_range(6..=12);
    let canonical: Vec<String> = (0..len).map(|_| pick(&mut rng)).collect();
    let noise = rng.random_range(0.03..0.25);
    let generations = (0..n_generations)
        .map(|g| {
            let mut tokens = Vec::with_capacity(len);
            let mut logprobs = Vec::with_capacity(len);
            for tok in &canonical {
                if rng.random_bool(noise) {
                    tokens.push(pick(&mut rng));
                    logprobs.push(rng.random_range(0.05f64..0.45).ln());
                } else {
                    tokens.push(tok.clone());
                    logprobs.push(rng.random_range(0.7f64..1.0).ln());
                }
            }
            let correct = tokens == canonical;
            Generation::new(format!("p{p:02}-g{g:03}"), tokens.join(" "))
                .with_answer(tokens.last().cloned().unwrap_or_default())
                .with_correct(correct)
                .with_logprobs(logprobs)
                .with_tokens(tokens)
        })
        .collect();
    PromptRecord::new(format!("p{p:02}"), generations).with_references([canonical.join(" ")])
}
