//! Hierarchical bidirectional transformer document encoder (sentence-level
//! and document-level transformers), its masked-sentence pre-training
//! objective, and an extractive summarizer built on top of it.
//!
//! Everything runs on the small `f64` autodiff engine in [`tensor`].

pub mod encoder;
pub mod error;
pub mod pretrain;
pub mod rouge;
pub mod summarizer;
pub mod synth;
pub mod tensor;
pub mod text;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{AdamState, AttentionMask, Graph, ParamStore, Schedule, Tensor, Var};
