//! Reranking sampled generations by generalized self-consistency.
//!
//! Each candidate is scored by its mean similarity to the other candidates for the
//! same prompt ([`rank::gsc_scores`]), under exact-match answers, n-gram overlap, or
//! probability-weighted n-gram overlap. The crate also carries the evaluation
//! harness ([`eval`]) and Monte-Carlo checks of the agreement-selection model ([`sim`]).

pub mod corpus;
pub mod error;
pub mod eval;
pub mod ngram;
pub mod rank;
pub mod sim;
pub mod similarity;
pub mod synthetic;

pub use corpus::{parse_corpus, write_corpus, Generation, PromptRecord, SimConfig, SimKind, Tokenizer};
pub use error::{Error, Result};
pub use eval::{bootstrap_eval, BootstrapConfig, EvalReport, Metric};
pub use ngram::{Ngram, NgramVector, Vocabulary};
pub use rank::{rank, ranked_pass_k_select, Method, RankResult, Ranker};
pub use sim::{PlantedCheck, RecoveryStats, TargetModel};
pub use similarity::{similarity_matrix, SimilarityMatrix};
