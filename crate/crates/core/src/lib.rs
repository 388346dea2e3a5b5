//! Compact word embeddings.
//!
//! This crate compresses a dense `V x d` word-embedding matrix in two ways
//! and evaluates the results:
//!
//! * [`lloyd`] fits a small table of levels to every dimension and stores one
//!   level index per element. Eight levels over 300 dimensions cost 900 bits
//!   per word.
//! * [`wta`] trains an autoencoder whose bottleneck is non-negative and
//!   sparse, with per-dimension winner-take-all selection over each
//!   minibatch. [`codec`] stores the resulting codes within a per-word bit
//!   budget.
//! * [`lsh`] provides the sign-of-random-projection baseline at the same
//!   budget.
//! * [`eval`] scores any of them on word similarity (Spearman ρ) and word
//!   analogy (3CosAdd / 3CosMul).
//!
//! The guide under `book/` walks through each piece; its code samples are
//! compiled and run as doctests of this crate.

pub mod bits;
pub mod codec;
pub mod embed_io;
pub mod error;
pub mod eval;
pub mod lloyd;
pub mod lsh;
pub mod synth;
pub mod wta;

pub use codec::{compute_alpha, decode_word, encode_word, BudgetSpec, SparseFile, SparseRecord};
pub use embed_io::{load_text, save_text, subset, Embedding, Vocabulary};
pub use error::{Error, Result};
pub use lloyd::{dequantize, fit_dimension, quantize, LevelTable, LloydConfig, QuantizedEmbedding};
pub use lsh::{BitSignature, HyperplaneSet, SignatureSet};
pub use wta::{train, SparseEncoding, TrainConfig};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/embeddings.md")]
    pub struct Embeddings;
    #[doc = include_str!("../../../book/src/lloyd.md")]
    pub struct Lloyd;
    #[doc = include_str!("../../../book/src/sparse-coding.md")]
    pub struct SparseCoding;
    #[doc = include_str!("../../../book/src/codec.md")]
    pub struct Codec;
    #[doc = include_str!("../../../book/src/lsh.md")]
    pub struct Lsh;
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub struct Evaluation;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
