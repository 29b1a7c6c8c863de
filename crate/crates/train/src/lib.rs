//! Training loop, batching and success-rate evaluation for the sequence
//! model in `symseq-nn` on datasets produced by `symseq-core`.

pub mod batch;
pub mod error;
pub mod eval;
pub mod log;
pub mod trainer;

pub use batch::{encode_samples, make_batches, Batch, EncodedPair};
pub use error::TrainError;
pub use eval::{
    classify, evaluate, evaluate_checkpoint, max_out_len, symbolic_match, EvalOptions, EvalReport, SampleRecord,
    Verdict,
};
pub use log::{LossLog, LossRecord};
pub use trainer::{Observer, TrainConfig, Trainer};
