use thiserror::Error;

/// Errors produced anywhere in the ranking, evaluation and simulation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },

    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },

    #[error("generation {id}: {message}")]
    Generation { id: String, message: String },

    #[error("generation {id} has no token_logprobs; use a binary similarity such as ucs instead")]
    MissingLogprobs { id: String },

    #[error("generation {id} has no extracted answer; exact-match similarity needs one")]
    MissingAnswer { id: String },

    #[error("generation {id} has no tokens; pretokenized mode needs them")]
    MissingTokens { id: String },

    #[error("prompt {prompt_id}: {message}")]
    Prompt { prompt_id: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
