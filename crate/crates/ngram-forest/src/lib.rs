//! Corpus and embedding IO, checkpoints, training, benchmarking and the
//! explanation-fidelity harness for [`ngram_forest_core`] models.

pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod embeddings;
mod error;
pub mod fidelity;
pub mod synth;
pub mod train;
pub mod vocab;

pub use error::{Error, Result};
pub use ngram_forest_core as core;
