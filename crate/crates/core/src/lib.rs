//! Multi-granular ngram text encoders.
//!
//! Every ngram of a document (up to a maximum order) becomes an attended
//! unit. Units are arranged into a hierarchical DAG ([`dag`]) so that a
//! longer ngram is composed from shorter ones by a binary tree-LSTM cell
//! ([`encoders`]); attention pooling and a softmax classifier sit on top
//! ([`model`]). Attention weights double as evidence for a prediction
//! ([`explain`]).
//!
//! Gradients come from a small taped reverse-mode engine ([`autodiff`]).
//!
//! The crate is `no_std` and needs only `alloc`. Enable the `std` feature
//! for runtime CPU-feature detection in the matrix kernels.

#![no_std]
#![warn(missing_debug_implementations, rust_2018_idioms)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod autodiff;
pub mod dag;
pub mod encoders;
mod error;
pub mod explain;
pub(crate) mod math;
pub mod model;
pub mod optim;

pub use autodiff::{Gradients, Mode, ParamGrads, ParamId, ParamStore, Tape, Tensor, Var};
pub use dag::{Bracket, NgramDag, NgramNode, NodeId, Span, StructureKind};
pub use error::{Error, Result};
pub use model::{EncoderKind, MemoryCellVariant, Model, ModelConfig, ModelOutput};
