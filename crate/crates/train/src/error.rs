use std::path::PathBuf;

use symseq_core::tokenizer::TokenizeError;
use symseq_nn::NnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("sample {index} cannot be tokenized: {source}")]
    Encode {
        index: usize,
        #[source]
        source: TokenizeError,
    },
    #[error("sample {index} has {len} tokens, more than max_len {max_len}")]
    TooLong { index: usize, len: usize, max_len: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error("checkpoint was trained for {found} steps of a {total}-step run")]
    Resume { found: u64, total: u64 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("loss log line {line}: {msg}")]
    LogFormat { line: usize, msg: String },
    #[error(transparent)]
    Nn(#[from] NnError),
}
