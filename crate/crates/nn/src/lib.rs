//! CPU-only neural sequence model: dense tensors over a GEMM kernel, a
//! reverse-mode tape, an encoder–decoder Transformer, AdamW, greedy decoding
//! and a binary checkpoint format.
//!
//! Models are generic over [`Scalar`]; training runs in `f32`, gradient checks
//! in `f64`.

pub mod checkpoint;
pub mod decode;
pub mod error;
pub mod model;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use decode::{argmax, greedy_decode, Decoded};
pub use error::NnError;
pub use model::{DecodeState, ModelConfig, TokenBatch, Transformer};
pub use optim::{lr_schedule, AdamState, AdamW};
pub use params::{Gradients, ParamId, Parameters};
pub use tape::{AttnMask, Tape, Var};
pub use tensor::{Scalar, Tensor};
