use alloc::vec::Vec;

use rand::Rng;

use super::{gate, glorot, EncodeStats, EncoderOutput};
use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::dag::Span;
use crate::{Error, Result};

// gate blocks: input, forget, output, candidate
const GATES: usize = 4;

/// One direction of a standard LSTM.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmParams {
    /// `4h x e`
    pub input: ParamId,
    /// `4h x h`
    pub recurrent: ParamId,
    /// `1 x 4h`
    pub bias: ParamId,
    pub hidden_dim: usize,
}

impl LstmParams {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        embedding_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let h = hidden_dim;
        let name = |s: &str| alloc::format!("{prefix}.{s}");
        Ok(Self {
            input: store.add(&name("input"), glorot(GATES * h, embedding_dim, h, rng))?,
            recurrent: store.add(&name("recurrent"), glorot(GATES * h, h, h, rng))?,
            bias: store.add(&name("bias"), Tensor::zeros(1, GATES * h))?,
            hidden_dim: h,
        })
    }

    pub const fn count(embedding_dim: usize, hidden_dim: usize) -> usize {
        GATES * hidden_dim * (embedding_dim + hidden_dim + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BiLstmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BiLstmParams {
    /// Each direction gets `width / 2` hidden units so rows are `width` wide.
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        embedding_dim: usize,
        width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if !width.is_multiple_of(2) || width == 0 {
            return Err(Error::Config(alloc::format!(
                "BiLSTM width {width} must be a positive even number"
            )));
        }
        Ok(Self {
            forward: LstmParams::register(store, &alloc::format!("{prefix}.fwd"), embedding_dim, width / 2, rng)?,
            backward: LstmParams::register(store, &alloc::format!("{prefix}.bwd"), embedding_dim, width / 2, rng)?,
        })
    }

    pub const fn count(embedding_dim: usize, width: usize) -> usize {
        2 * LstmParams::count(embedding_dim, width / 2)
    }
}

fn run(
    tape: &mut Tape,
    store: &ParamStore,
    params: &LstmParams,
    x: Var,
    positions: impl Iterator<Item = usize>,
    n: usize,
) -> Result<Var> {
    let hd = params.hidden_dim;
    let w = tape.param(store, params.input);
    let u = tape.param(store, params.recurrent);
    let b = tape.param(store, params.bias);
    let xw = tape.matmul_nt(x, w)?;
    let xw = tape.add_row(xw, b)?;

    let mut outputs: Vec<Option<Var>> = alloc::vec![None; n];
    let mut prev: Option<(Var, Var)> = None;
    for pos in positions {
        let mut pre = tape.gather_rows(&[(xw, pos)])?;
        if let Some((h, _)) = prev {
            let rec = tape.matmul_nt(h, u)?;
            pre = tape.add(pre, rec)?;
        }
        let i = gate(tape, pre, 0, hd)?;
        let i = tape.sigmoid(i)?;
        let o = gate(tape, pre, 2, hd)?;
        let o = tape.sigmoid(o)?;
        let g = gate(tape, pre, 3, hd)?;
        let g = tape.tanh(g)?;
        let mut c = tape.mul(i, g)?;
        if let Some((_, c_prev)) = prev {
            let f = gate(tape, pre, 1, hd)?;
            let f = tape.sigmoid(f)?;
            let kept = tape.mul(f, c_prev)?;
            c = tape.add(c, kept)?;
        }
        let tc = tape.tanh(c)?;
        let h = tape.mul(o, tc)?;
        outputs[pos] = Some(h);
        prev = Some((h, c));
    }
    let rows: Vec<Var> = outputs
        .into_iter()
        .map(|h| h.expect("every position visited"))
        .collect();
    tape.concat_rows(&rows)
}

/// Word-position units: row `i` is `[h_fwd,i ∥ h_bwd,i]`.
pub fn bilstm_encode(tape: &mut Tape, store: &ParamStore, params: &BiLstmParams, x: Var) -> Result<EncoderOutput> {
    let n = tape.try_value(x)?.rows();
    if n == 0 {
        return Err(Error::Empty("text"));
    }
    let macs_before = tape.macs();
    let fwd = run(tape, store, &params.forward, x, 0..n, n)?;
    let bwd = run(tape, store, &params.backward, x, (0..n).rev(), n)?;
    let hidden = tape.concat_cols(fwd, bwd)?;
    Ok(EncoderOutput {
        hidden,
        spans: (0..n).map(|i| Span::new(i, 1)).collect(),
        stats: EncodeStats {
            cell_invocations: 2 * n,
            macs: tape.macs() - macs_before,
        },
    })
}
