use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use super::{gate, glorot, EncodeStats, EncoderOutput};
use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::dag::{NgramDag, NodeId, StructureKind};
use crate::{Error, Result};

const GATES: usize = 5;
const INPUT: usize = 0;
const OUTPUT: usize = 1;
const UPDATE: usize = 2;
const FORGET_LEFT: usize = 3;
const FORGET_RIGHT: usize = 4;
/// Leading gates a leaf needs; its forget gates only ever scale zeros.
const LEAF_GATES: usize = 3;

/// Which child quantity the forget gates scale in the memory update.
///
/// `Verbatim` uses the children's hidden vectors,
/// `c = i⊙u + fˡ⊙hˡ + fʳ⊙hʳ`; `ChildMemory` uses their memory cells,
/// `c = i⊙u + fˡ⊙cˡ + fʳ⊙cʳ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum MemoryCellVariant {
    #[default]
    Verbatim,
    ChildMemory,
}

impl MemoryCellVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            MemoryCellVariant::Verbatim => "verbatim",
            MemoryCellVariant::ChildMemory => "memory-cell",
        }
    }
}

impl fmt::Display for MemoryCellVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MemoryCellVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "verbatim" => Ok(MemoryCellVariant::Verbatim),
            "memory-cell" | "child-memory" => Ok(MemoryCellVariant::ChildMemory),
            other => Err(Error::Config(alloc::format!("unknown memory cell variant `{other}`"))),
        }
    }
}

/// One parameter set shared by every node of every order.
///
/// The five gates are stacked row-wise in the order
/// input, output, update, left forget, right forget.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeLstmParams {
    /// `5d x e`
    pub input: ParamId,
    /// `5d x d`
    pub left: ParamId,
    /// `5d x d`
    pub right: ParamId,
    /// `1 x 5d`
    pub bias: ParamId,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
}

impl TreeLstmParams {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        embedding_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let (e, d) = (embedding_dim, hidden_dim);
        let name = |s: &str| alloc::format!("{prefix}.{s}");
        Ok(Self {
            input: store.add(&name("input"), glorot(GATES * d, e, d, rng))?,
            left: store.add(&name("left"), glorot(GATES * d, d, d, rng))?,
            right: store.add(&name("right"), glorot(GATES * d, d, d, rng))?,
            bias: store.add(&name("bias"), Tensor::zeros(1, GATES * d))?,
            embedding_dim: e,
            hidden_dim: d,
        })
    }

    /// `5·(e·d + 2·d² + d)`.
    pub const fn count(embedding_dim: usize, hidden_dim: usize) -> usize {
        GATES * (embedding_dim * hidden_dim + 2 * hidden_dim * hidden_dim + hidden_dim)
    }
}

/// Hidden and memory vectors of one node (or one row per node when batched).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeState {
    pub h: Var,
    pub c: Var,
}

impl NodeState {
    pub fn zeros(tape: &mut Tape, rows: usize, hidden_dim: usize) -> Self {
        Self {
            h: tape.constant(Tensor::zeros(rows, hidden_dim)),
            c: tape.constant(Tensor::zeros(rows, hidden_dim)),
        }
    }
}

/// Composes a label embedding with two child states. Every operand may
/// hold several rows, one per node.
pub fn tree_lstm_cell(
    tape: &mut Tape,
    store: &ParamStore,
    params: &TreeLstmParams,
    x: Var,
    left: NodeState,
    right: NodeState,
    variant: MemoryCellVariant,
) -> Result<NodeState> {
    let w = tape.param(store, params.input);
    let ul = tape.param(store, params.left);
    let ur = tape.param(store, params.right);
    let b = tape.param(store, params.bias);
    let xw = tape.matmul_nt(x, w)?;
    let hl = tape.matmul_nt(left.h, ul)?;
    let hr = tape.matmul_nt(right.h, ur)?;
    let pre = tape.add(xw, hl)?;
    let pre = tape.add(pre, hr)?;
    let pre = tape.add_row(pre, b)?;
    let (left_carry, right_carry) = match variant {
        MemoryCellVariant::Verbatim => (left.h, right.h),
        MemoryCellVariant::ChildMemory => (left.c, right.c),
    };
    compose_unfused(tape, pre, params.hidden_dim, Some((left_carry, right_carry)))
}

/// [`compose_unfused`] as two fused tape primitives.
fn compose(tape: &mut Tape, pre: Var, d: usize, carry: Option<(Var, Var)>) -> Result<NodeState> {
    let c = tape.lstm_memory(pre, d, carry)?;
    let h = tape.lstm_hidden(pre, c, d)?;
    Ok(NodeState { h, c })
}

/// Gate nonlinearities and the memory/hidden update from stacked
/// pre-activations, one primitive per step. `carry` is `None` for leaves
/// (zero children).
fn compose_unfused(tape: &mut Tape, pre: Var, d: usize, carry: Option<(Var, Var)>) -> Result<NodeState> {
    let i = gate(tape, pre, INPUT, d)?;
    let i = tape.sigmoid(i)?;
    let o = gate(tape, pre, OUTPUT, d)?;
    let o = tape.sigmoid(o)?;
    let u = gate(tape, pre, UPDATE, d)?;
    let u = tape.tanh(u)?;
    let mut c = tape.mul(i, u)?;
    if let Some((left, right)) = carry {
        let fl = gate(tape, pre, FORGET_LEFT, d)?;
        let fl = tape.sigmoid(fl)?;
        let fr = gate(tape, pre, FORGET_RIGHT, d)?;
        let fr = tape.sigmoid(fr)?;
        let kept_left = tape.mul(fl, left)?;
        let kept_right = tape.mul(fr, right)?;
        c = tape.add(c, kept_left)?;
        c = tape.add(c, kept_right)?;
    }
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok(NodeState { h, c })
}

fn check_embeddings(tape: &Tape, dag: &NgramDag, params: &TreeLstmParams, x: Var) -> Result<()> {
    let t = tape.try_value(x)?;
    if t.rows() != dag.token_count() {
        return Err(Error::Misaligned {
            what: "token embeddings",
            expected: dag.token_count(),
            found: t.rows(),
        });
    }
    if t.cols() != params.embedding_dim {
        return Err(Error::ShapeMismatch {
            op: "encode_dag",
            lhs: t.shape(),
            rhs: (dag.token_count(), params.embedding_dim),
        });
    }
    Ok(())
}

/// Encodes every node of `dag` bottom-up, one level batch at a time.
///
/// Leaves take their token embedding as label input and zero child
/// states; internal nodes take a zero label input, so both zero terms are
/// skipped. Row `i` of the output is node `i`.
pub fn encode_dag(
    tape: &mut Tape,
    store: &ParamStore,
    params: &TreeLstmParams,
    dag: &NgramDag,
    x: Var,
    variant: MemoryCellVariant,
) -> Result<EncoderOutput> {
    encode_dag_with_schedule(tape, store, params, dag, x, variant, dag.level_schedule())
}

/// [`encode_dag`] with a caller-supplied schedule. Any batching in which
/// children precede parents yields the same rows.
pub fn encode_dag_with_schedule(
    tape: &mut Tape,
    store: &ParamStore,
    params: &TreeLstmParams,
    dag: &NgramDag,
    x: Var,
    variant: MemoryCellVariant,
    schedule: &[Vec<NodeId>],
) -> Result<EncoderOutput> {
    check_embeddings(tape, dag, params, x)?;
    let d = params.hidden_dim;
    let macs_before = tape.macs();
    let w = tape.param(store, params.input);
    let ul = tape.param(store, params.left);
    let ur = tape.param(store, params.right);
    let b = tape.param(store, params.bias);
    let mut leaf_weights = None;

    // node id -> (state, row within that state's matrices)
    let mut located: Vec<Option<(NodeState, usize)>> = vec![None; dag.len()];
    // node id -> its hidden row projected through U_l / U_r
    let mut projected = [vec![None; dag.len()], vec![None; dag.len()]];
    let mut invocations = 0;
    for batch in schedule {
        let (leaves, internal): (Vec<NodeId>, Vec<NodeId>) = batch
            .iter()
            .map(|&id| dag.node(id).map(|_| id))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .partition(|&id| dag.nodes()[id].is_leaf());

        if !leaves.is_empty() {
            let (wl, bl) = match leaf_weights {
                Some(pair) => pair,
                None => {
                    let pair = (
                        tape.slice_rows(w, 0, LEAF_GATES * d)?,
                        tape.slice_cols(b, 0, LEAF_GATES * d)?,
                    );
                    *leaf_weights.insert(pair)
                }
            };
            let rows: Vec<(Var, usize)> = leaves.iter().map(|&id| (x, dag.nodes()[id].span.start)).collect();
            let xs = tape.gather_rows(&rows)?;
            let pre = tape.matmul_nt(xs, wl)?;
            let pre = tape.add_row(pre, bl)?;
            let state = compose(tape, pre, d, None)?;
            for (row, &id) in leaves.iter().enumerate() {
                located[id] = Some((state, row));
            }
            invocations += leaves.len();
        }

        if !internal.is_empty() {
            let mut children = Vec::with_capacity(internal.len());
            for &id in &internal {
                let (l, r) = dag.nodes()[id].children.expect("internal node");
                if located[l].is_none() || located[r].is_none() {
                    return Err(Error::Config(alloc::format!(
                        "schedule visits node {id} before its children"
                    )));
                }
                children.push([l, r]);
            }
            let mut parts = [ul, ur];
            for (side, u) in parts.iter_mut().enumerate() {
                let mut fresh: Vec<NodeId> = Vec::new();
                for pair in &children {
                    let c = pair[side];
                    if projected[side][c].is_none() && !fresh.contains(&c) {
                        fresh.push(c);
                    }
                }
                if !fresh.is_empty() {
                    let hs: Vec<(Var, usize)> = fresh.iter().map(|&c| located_h(&located, c)).collect();
                    let hs = tape.gather_rows(&hs)?;
                    let proj = tape.matmul_nt(hs, *u)?;
                    for (row, &c) in fresh.iter().enumerate() {
                        projected[side][c] = Some((proj, row));
                    }
                    if fresh.len() == children.len() && fresh.iter().zip(&children).all(|(f, p)| *f == p[side]) {
                        *u = proj;
                        continue;
                    }
                }
                let rows: Vec<(Var, usize)> = children
                    .iter()
                    .map(|pair| projected[side][pair[side]].expect("projected above"))
                    .collect();
                *u = tape.gather_rows(&rows)?;
            }
            let pre = tape.add(parts[0], parts[1])?;
            let pre = tape.add_row(pre, b)?;
            let gather = |tape: &mut Tape, side: usize, cell: bool| {
                let rows: Vec<(Var, usize)> = children
                    .iter()
                    .map(|pair| {
                        let (s, row) = located[pair[side]].expect("checked above");
                        (if cell { s.c } else { s.h }, row)
                    })
                    .collect();
                tape.gather_rows(&rows)
            };
            let cell = variant == MemoryCellVariant::ChildMemory;
            let carry = (gather(tape, 0, cell)?, gather(tape, 1, cell)?);
            let state = compose(tape, pre, d, Some(carry))?;
            for (row, &id) in internal.iter().enumerate() {
                located[id] = Some((state, row));
            }
            invocations += internal.len();
        }
    }
    finish(tape, dag, located, invocations, macs_before)
}

fn located_h(located: &[Option<(NodeState, usize)>], id: NodeId) -> (Var, usize) {
    let (s, row) = located[id].expect("child encoded");
    (s.h, row)
}

fn finish(
    tape: &mut Tape,
    dag: &NgramDag,
    located: Vec<Option<(NodeState, usize)>>,
    invocations: usize,
    macs_before: u64,
) -> Result<EncoderOutput> {
    let rows = located
        .iter()
        .enumerate()
        .map(|(id, l)| l.map(|(s, r)| (s.h, r)).ok_or(Error::UnknownNode(id)))
        .collect::<Result<Vec<_>>>()?;
    let hidden = tape.gather_rows(&rows)?;
    Ok(EncoderOutput {
        hidden,
        spans: dag.spans().collect(),
        stats: EncodeStats {
            cell_invocations: invocations,
            macs: tape.macs() - macs_before,
        },
    })
}

/// Reference evaluator: one [`tree_lstm_cell`] call per node, in `order`,
/// with explicit zero label inputs and zero child states.
pub fn encode_dag_nodewise(
    tape: &mut Tape,
    store: &ParamStore,
    params: &TreeLstmParams,
    dag: &NgramDag,
    x: Var,
    variant: MemoryCellVariant,
    order: &[NodeId],
) -> Result<EncoderOutput> {
    check_embeddings(tape, dag, params, x)?;
    let macs_before = tape.macs();
    let zero_x = tape.constant(Tensor::zeros(1, params.embedding_dim));
    let zero_state = NodeState::zeros(tape, 1, params.hidden_dim);
    let mut located: Vec<Option<(NodeState, usize)>> = vec![None; dag.len()];
    for &id in order {
        let node = dag.node(id)?;
        let state = match node.children {
            None => {
                let xi = tape.gather_rows(&[(x, node.span.start)])?;
                tree_lstm_cell(tape, store, params, xi, zero_state, zero_state, variant)?
            }
            Some((l, r)) => {
                let (Some((ls, _)), Some((rs, _))) = (located[l], located[r]) else {
                    return Err(Error::Config(alloc::format!(
                        "order visits node {id} before its children"
                    )));
                };
                tree_lstm_cell(tape, store, params, zero_x, ls, rs, variant)?
            }
        };
        located[id] = Some((state, 0));
    }
    finish(tape, dag, located, order.len(), macs_before)
}

/// Left- and right-forest encodings of the same ngrams, concatenated per
/// span into `2d`-wide rows.
#[allow(clippy::too_many_arguments)]
pub fn encode_bi_forest(
    tape: &mut Tape,
    store: &ParamStore,
    left_params: &TreeLstmParams,
    right_params: &TreeLstmParams,
    max_order: usize,
    x: Var,
    variant: MemoryCellVariant,
) -> Result<EncoderOutput> {
    let n = tape.try_value(x)?.rows();
    let left_dag = NgramDag::build(StructureKind::LeftForest, n, max_order, None)?;
    let right_dag = NgramDag::build(StructureKind::RightForest, n, max_order, None)?;
    let left = encode_dag(tape, store, left_params, &left_dag, x, variant)?;
    let right = encode_dag(tape, store, right_params, &right_dag, x, variant)?;
    assert_eq!(left.spans, right.spans, "forest span layouts diverged");
    let hidden = tape.concat_cols(left.hidden, right.hidden)?;
    Ok(EncoderOutput {
        hidden,
        spans: left.spans,
        stats: left.stats.merge(right.stats),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_params(store: &mut ParamStore, e: usize, d: usize) -> TreeLstmParams {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = TreeLstmParams::register(store, "t", e, d, &mut rng).unwrap();
        for id in [p.input, p.left, p.right, p.bias] {
            store.value_mut(id).fill(0.0);
        }
        p
    }

    #[test]
    fn zero_everything_gives_zero_state() {
        let mut store = ParamStore::new();
        let p = zero_params(&mut store, 3, 2);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(1, 3));
        let z = NodeState::zeros(&mut tape, 1, 2);
        let s = tree_lstm_cell(&mut tape, &store, &p, x, z, z, MemoryCellVariant::Verbatim).unwrap();
        assert_eq!(tape.value(s.h).data(), [0.0, 0.0]);
        assert_eq!(tape.value(s.c).data(), [0.0, 0.0]);
    }

    #[test]
    fn zero_params_hand_evaluation() {
        // every gate is sigmoid(0) = 0.5 and u = tanh(0) = 0, so
        // c = 0.5·hˡ + 0.5·hʳ = 0.5, h = 0.5·tanh(0.5)
        let mut store = ParamStore::new();
        let p = zero_params(&mut store, 1, 1);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(1, 1));
        let left = NodeState {
            h: tape.constant(Tensor::scalar(1.0)),
            c: tape.constant(Tensor::scalar(0.0)),
        };
        let right = NodeState::zeros(&mut tape, 1, 1);
        let s = tree_lstm_cell(&mut tape, &store, &p, x, left, right, MemoryCellVariant::Verbatim).unwrap();
        assert_eq!(tape.value(s.c).data(), [0.5]);
        let h = tape.value(s.h).data()[0];
        assert!((h - 0.5 * libm::tanh(0.5)).abs() < 1e-15);
        assert!((h - 0.23106).abs() < 1e-5);

        // the memory-cell variant reads cˡ = 0 instead
        let s = tree_lstm_cell(&mut tape, &store, &p, x, left, right, MemoryCellVariant::ChildMemory).unwrap();
        assert_eq!(tape.value(s.c).data(), [0.0]);
    }

    #[test]
    fn embedding_misalignment_is_an_error() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = TreeLstmParams::register(&mut store, "t", 3, 2, &mut rng).unwrap();
        let dag = NgramDag::build(StructureKind::LeftForest, 4, 2, None).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(3, 3));
        let err = encode_dag(&mut tape, &store, &p, &dag, x, MemoryCellVariant::Verbatim).unwrap_err();
        assert!(matches!(err, Error::Misaligned { .. }));
    }

    #[test]
    fn parameter_count_closed_form() {
        assert_eq!(TreeLstmParams::count(300, 100), 250_500);
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        TreeLstmParams::register(&mut store, "t", 7, 5, &mut rng).unwrap();
        assert_eq!(store.trainable_count(), TreeLstmParams::count(7, 5));
    }
}
