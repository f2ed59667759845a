//! Dense 2-D tensors and a tape-based reverse-mode differentiation engine.
//!
//! Vectors are `1 x len` row tensors throughout. A [`Tape`] records every
//! primitive application; [`Tape::backward`] replays the records in reverse
//! and accumulates gradients additively, so a value consumed by several
//! parents (shared DAG children) receives every contribution.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{check_gradients, GradCheckReport, TensorCheck};
pub use params::{ParamGrads, ParamId, ParamStore};
pub use tape::{Gradients, Mode, Tape, Var};
pub use tensor::Tensor;
