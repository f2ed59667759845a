use alloc::vec::Vec;

use rand::Rng;

use super::{glorot, EncodeStats, EncoderOutput};
use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::dag::Span;
use crate::{Error, Result};

/// One filter bank per ngram order: bank `k` maps the concatenated
/// embeddings of `k` consecutive tokens to `d` features.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CnnParams {
    /// `(filter: d x k·e, bias: 1 x d)` for `k = 1..=K`.
    pub banks: Vec<(ParamId, ParamId)>,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
}

impl CnnParams {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        embedding_dim: usize,
        hidden_dim: usize,
        max_order: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if max_order == 0 {
            return Err(Error::ZeroOrder);
        }
        let (e, d) = (embedding_dim, hidden_dim);
        let banks = (1..=max_order)
            .map(|k| {
                let f = store.add(&alloc::format!("{prefix}.filter{k}"), glorot(d, k * e, d, rng))?;
                let b = store.add(&alloc::format!("{prefix}.bias{k}"), Tensor::zeros(1, d))?;
                Ok((f, b))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            banks,
            embedding_dim: e,
            hidden_dim: d,
        })
    }

    /// `Σₖ (k·e·d + d)`.
    pub const fn count(embedding_dim: usize, hidden_dim: usize, max_order: usize) -> usize {
        let mut total = 0;
        let mut k = 1;
        while k <= max_order {
            total += k * embedding_dim * hidden_dim + hidden_dim;
            k += 1;
        }
        total
    }
}

/// Every ngram up to order `max_order` (clamped to the text length and the
/// number of filter banks) as `tanh(F_k·[x_i ∥ … ∥ x_{i+k-1}] + b_k)`.
///
/// Rows are ordered by order, then start, matching the node ids of the
/// ngram DAGs. The window product is evaluated as `Σⱼ x_{i+j}·F_k[:, j]ᵀ`
/// over the `e`-wide column blocks of the filter.
pub fn cnn_encode(
    tape: &mut Tape,
    store: &ParamStore,
    params: &CnnParams,
    x: Var,
    max_order: usize,
) -> Result<EncoderOutput> {
    let t = tape.try_value(x)?;
    let n = t.rows();
    if n == 0 {
        return Err(Error::Empty("text"));
    }
    if max_order == 0 {
        return Err(Error::ZeroOrder);
    }
    let e = params.embedding_dim;
    if t.cols() != e {
        return Err(Error::ShapeMismatch {
            op: "cnn_encode",
            lhs: t.shape(),
            rhs: (n, e),
        });
    }
    let orders = max_order.min(n).min(params.banks.len());
    let macs_before = tape.macs();
    let mut blocks = Vec::with_capacity(orders);
    let mut spans = Vec::new();
    for k in 1..=orders {
        let (f, b) = params.banks[k - 1];
        let filter = tape.param(store, f);
        let bias = tape.param(store, b);
        let windows = n - k + 1;
        let mut pre: Option<Var> = None;
        for j in 0..k {
            let rows: Vec<(Var, usize)> = (0..windows).map(|i| (x, i + j)).collect();
            let shifted = tape.gather_rows(&rows)?;
            let part = if k == 1 {
                filter
            } else {
                tape.slice_cols(filter, j * e, e)?
            };
            let prod = tape.matmul_nt(shifted, part)?;
            pre = Some(match pre {
                None => prod,
                Some(acc) => tape.add(acc, prod)?,
            });
        }
        let pre = tape.add_row(pre.expect("k >= 1"), bias)?;
        blocks.push(tape.tanh(pre)?);
        spans.extend((0..windows).map(|i| Span::new(i, k)));
    }
    let hidden = tape.concat_rows(&blocks)?;
    Ok(EncoderOutput {
        hidden,
        stats: EncodeStats {
            cell_invocations: spans.len(),
            macs: tape.macs() - macs_before,
        },
        spans,
    })
}
