//! Symbolic side of the pipeline: exact integer and sparse polynomial
//! arithmetic, the built-in task generators, the plain-text dataset format
//! and the token vocabulary used to feed expressions to a sequence model.
//!
//! ```text
//! TaskSpec ──build_dataset──▶ DatasetFile ──encode──▶ TokenSequence pairs
//!                               │  ▲
//!                        write  ▼  │ read
//!                         `INPUT # OUTPUT` lines
//! ```

pub mod dataset;
pub mod expr;
pub mod parse;
pub mod poly;
pub mod primes;
pub mod ring;
pub mod rng;
pub mod sample;
pub mod taskgen;
pub mod tokenizer;

pub use dataset::{read_dataset, write_dataset, DatasetFile, DatasetMeta, ReadOutcome, Validation};
pub use expr::Expression;
pub use parse::{parse_poly, poly_to_string, ParseError};
pub use poly::{Monomial, PolyError, Polynomial};
pub use primes::{sample_prime_set, trial_division_factorize};
pub use ring::Ring;
pub use sample::{sample_polynomial, SamplerConfig};
pub use taskgen::{build_dataset, Instance, Task, TaskSpec};
pub use tokenizer::{decode, encode, TokenSequence, TokenizerConfig, Vocabulary};
