//! Unit encoders: the shared-parameter tree-LSTM over an [`NgramDag`],
//! the BiForest concatenation, and the BiLSTM and CNN baselines.
//!
//! Every encoder maps an `n x e` matrix of token embeddings to an
//! [`EncoderOutput`]: one row per attended unit plus the unit spans.
//!
//! [`NgramDag`]: crate::dag::NgramDag

mod bilstm;
mod cnn;
mod tree_lstm;

use alloc::vec::Vec;

use rand::Rng;

pub use bilstm::{bilstm_encode, BiLstmParams, LstmParams};
pub use cnn::{cnn_encode, CnnParams};
pub use tree_lstm::{
    encode_bi_forest, encode_dag, encode_dag_nodewise, encode_dag_with_schedule, tree_lstm_cell, MemoryCellVariant,
    NodeState, TreeLstmParams,
};

use crate::autodiff::{Tape, Tensor, Var};
use crate::dag::Span;

/// Unit representations produced by an encoder.
#[derive(Clone, Debug)]
pub struct EncoderOutput {
    /// `units x width` matrix; row `i` represents `spans[i]`.
    pub hidden: Var,
    pub spans: Vec<Span>,
    pub stats: EncodeStats,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EncodeStats {
    /// Node states computed (tree encoders) or unit rows produced.
    pub cell_invocations: usize,
    /// Multiply-accumulates spent in matrix products.
    pub macs: u64,
}

impl EncodeStats {
    fn merge(self, other: EncodeStats) -> EncodeStats {
        EncodeStats {
            cell_invocations: self.cell_invocations + other.cell_invocations,
            macs: self.macs + other.macs,
        }
    }
}

/// Glorot-uniform matrix, `rows x cols`, with fan-in `cols` and fan-out
/// `fan_out`.
pub(crate) fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = crate::math::sqrt(6.0 / (cols + fan_out) as f64);
    let mut t = Tensor::zeros(rows, cols);
    for v in t.data_mut() {
        *v = rng.gen_range(-limit..limit);
    }
    t
}

pub(crate) fn gate(tape: &mut Tape, pre: Var, index: usize, width: usize) -> crate::Result<Var> {
    tape.slice_cols(pre, index * width, width)
}
