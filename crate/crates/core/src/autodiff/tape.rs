use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::tensor::{gemm, gemm_new};
use super::{ParamGrads, ParamId, ParamStore, Tensor};
use crate::math;
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Train mode enables dropout; eval mode makes it the identity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    Train,
    #[default]
    Eval,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulNt(Var, Var),
    Add(Var, Var),
    /// Broadcast a `1 x n` row over every row of the left operand.
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    ConcatCols(Var, Var),
    ConcatRows(Vec<Var>),
    Gather(Vec<(Var, usize)>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    /// Gate activations `[σ(i) | · | tanh(u) | σ(fˡ) | σ(fʳ)]`.
    LstmMemory(Var, Option<(Var, Var)>, Tensor),
    /// `σ(o)` and `tanh(c)`.
    LstmHidden(Var, Var, Tensor, Tensor),
    Dropout(Var, Vec<f64>),
    Sum(Var),
    CrossEntropy(Var, usize, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records primitive applications for one forward pass.
///
/// Tapes are cheap to build and meant to be thrown away after a single
/// backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<Option<Var>>,
    macs: u64,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Multiply-accumulate operations performed by matrix products so far.
    pub fn macs(&self) -> u64 {
        self.macs
    }

    fn node(&self, v: Var) -> Result<&Node> {
        self.nodes.get(v.0).ok_or(Error::UnknownVar(v.0))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn try_value(&self, v: Var) -> Result<&Tensor> {
        Ok(&self.node(v)?.value)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.get(v.0).is_some_and(|n| n.requires_grad)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A value that never receives gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A free leaf that receives gradients (inputs under test).
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a parameter; repeated calls return the same variable.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(Some(v)) = self.params.get(id.0) {
            return *v;
        }
        let v = self.push(store.value(id).clone(), Op::Param, true);
        if self.params.len() <= id.0 {
            self.params.resize(id.0 + 1, None);
        }
        self.params[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.node(a)?.value, &self.node(b)?.value);
        if ta.cols() != tb.rows() {
            return Err(mismatch("matmul", ta, tb));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let out = gemm_new(m, k, n, ta.data(), k, 1, tb.data(), n, 1);
        self.macs += (m * k * n) as u64;
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ`, for weights stored as `out x in`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.node(a)?.value, &self.node(b)?.value);
        if ta.cols() != tb.cols() {
            return Err(mismatch("matmul_nt", ta, tb));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
        let out = gemm_new(m, k, n, ta.data(), k, 1, tb.data(), 1, k);
        self.macs += (m * k * n) as u64;
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(out, Op::MatMulNt(a, b), rg))
    }

    /// Matrix times vector, both in row convention: `x · aᵀ`.
    pub fn matvec(&mut self, a: Var, x: Var) -> Result<Var> {
        self.matmul_nt(x, a)
    }

    fn zip_same(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (&self.node(a)?.value, &self.node(b)?.value);
        if ta.shape() != tb.shape() {
            return Err(mismatch(op, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::from_vec(ta.rows(), ta.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "add", |x, y| x + y)?;
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (&self.node(a)?.value, &self.node(row)?.value);
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(mismatch("add_row", ta, tr));
        }
        let mut out = ta.clone();
        let cols = ta.cols();
        if cols > 0 {
            for chunk in out.data_mut().chunks_mut(cols) {
                for (x, b) in chunk.iter_mut().zip(tr.data()) {
                    *x += b;
                }
            }
        }
        let rg = self.requires_grad(a) || self.requires_grad(row);
        Ok(self.push(out, Op::AddRow(a, row), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let mut out = self.node(a)?.value.clone();
        out.scale_mut(s);
        let rg = self.requires_grad(a);
        Ok(self.push(out, Op::Scale(a, s), rg))
    }

    fn map(&mut self, a: Var, f: fn(&[f64], &mut [f64])) -> Result<Tensor> {
        let t = &self.node(a)?.value;
        let mut out = Tensor::zeros(t.rows(), t.cols());
        f(t.data(), out.data_mut());
        Ok(out)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, math::sigmoid_into)?;
        let rg = self.requires_grad(a);
        Ok(self.push(out, Op::Sigmoid(a), rg))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, math::tanh_into)?;
        let rg = self.requires_grad(a);
        Ok(self.push(out, Op::Tanh(a), rg))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let t = &self.node(a)?.value;
        let mut out = t.clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        let rg = self.requires_grad(a);
        Ok(self.push(out, Op::Softmax(a), rg))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.node(a)?.value, &self.node(b)?.value);
        if ta.rows() != tb.rows() {
            return Err(mismatch("concat_cols", ta, tb));
        }
        let cols = ta.cols() + tb.cols();
        let mut data = Vec::with_capacity(ta.rows() * cols);
        for r in 0..ta.rows() {
            data.extend_from_slice(ta.row(r));
            data.extend_from_slice(tb.row(r));
        }
        let out = Tensor::from_vec(ta.rows(), cols, data)?;
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(out, Op::ConcatCols(a, b), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::Empty("concat_rows"))?;
        let cols = self.node(first)?.value.cols();
        let mut data = Vec::new();
        let mut rows = 0;
        let mut rg = false;
        for &p in parts {
            let t = &self.node(p)?.value;
            if t.cols() != cols {
                return Err(mismatch("concat_rows", &self.nodes[first.0].value, t));
            }
            data.extend_from_slice(t.data());
            rows += t.rows();
            rg |= self.nodes[p.0].requires_grad;
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Stacks `(source, row)` pairs into a new matrix.
    pub fn gather_rows(&mut self, sources: &[(Var, usize)]) -> Result<Var> {
        let &(first, _) = sources.first().ok_or(Error::Empty("gather_rows"))?;
        let cols = self.node(first)?.value.cols();
        let mut data = Vec::with_capacity(sources.len() * cols);
        let mut rg = false;
        for &(v, r) in sources {
            let t = &self.node(v)?.value;
            if t.cols() != cols || r >= t.rows() {
                return Err(Error::ShapeMismatch {
                    op: "gather_rows",
                    lhs: (r + 1, cols),
                    rhs: t.shape(),
                });
            }
            data.extend_from_slice(t.row(r));
            rg |= self.nodes[v.0].requires_grad;
        }
        let out = Tensor::from_vec(sources.len(), cols, data)?;
        Ok(self.push(out, Op::Gather(sources.to_vec()), rg))
    }

    /// Rows of `table` at `ids`, e.g. an embedding lookup.
    pub fn row_lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let sources: Vec<(Var, usize)> = ids.iter().map(|&i| (table, i)).collect();
        self.gather_rows(&sources)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let t = &self.node(a)?.value;
        if start + width > t.cols() {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                lhs: (t.rows(), start + width),
                rhs: t.shape(),
            });
        }
        let mut data = Vec::with_capacity(t.rows() * width);
        for r in 0..t.rows() {
            data.extend_from_slice(&t.row(r)[start..start + width]);
        }
        let out = Tensor::from_vec(t.rows(), width, data)?;
        let rg = self.requires_grad(a);
        Ok(self.push(out, Op::SliceCols(a, start), rg))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, count: usize) -> Result<Var> {
        let t = &self.node(a)?.value;
        if start + count > t.rows() {
            return Err(Error::ShapeMismatch {
                op: "slice_rows",
                lhs: (start + count, t.cols()),
                rhs: t.shape(),
            });
        }
        let c = t.cols();
        let out = Tensor::from_vec(count, c, t.data()[start * c..(start + count) * c].to_vec())?;
        let rg = self.requires_grad(a);
        Ok(self.push(out, Op::SliceRows(a, start), rg))
    }

    /// Gated memory update from pre-activations stacked as
    /// `[i | o | u | fˡ | fʳ]`, each block `width` wide:
    /// `c = σ(i)⊙tanh(u) + σ(fˡ)⊙left + σ(fʳ)⊙right`. Without `carry` the
    /// forget terms vanish and only the first three blocks are read.
    pub fn lstm_memory(&mut self, pre: Var, width: usize, carry: Option<(Var, Var)>) -> Result<Var> {
        let tp = &self.node(pre)?.value;
        let blocks = if carry.is_some() { 5 } else { 3 };
        if tp.cols() < blocks * width {
            return Err(Error::ShapeMismatch {
                op: "lstm_memory",
                lhs: tp.shape(),
                rhs: (tp.rows(), blocks * width),
            });
        }
        let rows = tp.rows();
        let mut acts = Tensor::zeros(rows, blocks * width);
        let mut c = Tensor::zeros(rows, width);
        for r in 0..rows {
            let (p, a) = (tp.row(r), acts.row_mut(r));
            math::sigmoid_into(&p[..width], &mut a[..width]);
            math::tanh_into(&p[2 * width..3 * width], &mut a[2 * width..3 * width]);
            math::sigmoid_into(&p[3 * width..blocks * width], &mut a[3 * width..]);
            let (i, u) = (&a[..width], &a[2 * width..3 * width]);
            for ((v, i), u) in c.row_mut(r).iter_mut().zip(i).zip(u) {
                *v = i * u;
            }
        }
        let mut rg = self.requires_grad(pre);
        if let Some((l, rt)) = carry {
            let (tl, tr) = (&self.node(l)?.value, &self.node(rt)?.value);
            if tl.shape() != (rows, width) || tr.shape() != (rows, width) {
                return Err(mismatch("lstm_memory", tl, tr));
            }
            for r in 0..rows {
                let a = acts.row(r);
                let (fl, fr) = (&a[3 * width..4 * width], &a[4 * width..5 * width]);
                let terms = fl.iter().zip(tl.row(r)).zip(fr.iter().zip(tr.row(r)));
                for (v, ((fl, l), (fr, rt))) in c.row_mut(r).iter_mut().zip(terms) {
                    *v += fl * l + fr * rt;
                }
            }
            rg |= self.requires_grad(l) || self.requires_grad(rt);
        }
        Ok(self.push(c, Op::LstmMemory(pre, carry, acts), rg))
    }

    /// `σ(o)⊙tanh(c)` where `o` is the second `width` block of `pre`.
    pub fn lstm_hidden(&mut self, pre: Var, c: Var, width: usize) -> Result<Var> {
        let (tp, tc) = (&self.node(pre)?.value, &self.node(c)?.value);
        if tc.shape() != (tp.rows(), width) || tp.cols() < 2 * width {
            return Err(mismatch("lstm_hidden", tp, tc));
        }
        let rows = tp.rows();
        let mut o = Tensor::zeros(rows, width);
        let mut t = Tensor::zeros(rows, width);
        for r in 0..rows {
            math::sigmoid_into(&tp.row(r)[width..2 * width], o.row_mut(r));
        }
        math::tanh_into(tc.data(), t.data_mut());
        let mut h = o.clone();
        for (h, t) in h.data_mut().iter_mut().zip(t.data()) {
            *h *= t;
        }
        let rg = self.requires_grad(pre) || self.requires_grad(c);
        Ok(self.push(h, Op::LstmHidden(pre, c, o, t), rg))
    }

    /// `Σᵢ αᵢ·rowsᵢ` for a `1 x N` weight vector over an `N x d` matrix.
    pub fn weighted_sum(&mut self, alpha: Var, rows: Var) -> Result<Var> {
        let (ta, tr) = (&self.node(alpha)?.value, &self.node(rows)?.value);
        if ta.rows() != 1 || ta.cols() != tr.rows() {
            return Err(mismatch("weighted_sum", ta, tr));
        }
        self.matmul(alpha, rows)
    }

    /// Inverted dropout: survivors are rescaled by `1/(1-p)` in train mode;
    /// eval mode returns `a` unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, mode: Mode, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::DropoutProbability(p));
        }
        self.node(a)?;
        if mode == Mode::Eval || p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let t = &self.nodes[a.0].value;
        let mask: Vec<f64> = (0..t.len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = t.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::from_vec(t.rows(), t.cols(), data)?;
        let rg = self.requires_grad(a);
        Ok(self.push(out, Op::Dropout(a, mask), rg))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.node(a)?.value.sum();
        let rg = self.requires_grad(a);
        Ok(self.push(Tensor::scalar(s), Op::Sum(a), rg))
    }

    /// `-log softmax(logits)[gold]` for a `1 x C` logit row, via log-sum-exp.
    pub fn cross_entropy(&mut self, logits: Var, gold: usize) -> Result<Var> {
        let t = &self.node(logits)?.value;
        if t.rows() != 1 {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                lhs: t.shape(),
                rhs: (1, t.cols()),
            });
        }
        if gold >= t.cols() {
            return Err(Error::LabelOutOfRange {
                label: gold,
                classes: t.cols(),
            });
        }
        let x = t.data();
        let lse = log_sum_exp(x);
        let loss = lse - x[gold];
        let probs = x.iter().map(|v| math::exp(v - lse)).collect();
        let rg = self.requires_grad(logits);
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy(logits, gold, probs), rg))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let node = self.node(loss)?;
        if node.value.shape() != (1, 1) {
            let (rows, cols) = node.value.shape();
            return Err(Error::NonScalarLoss { rows, cols });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf | Op::Param) {
                continue;
            }
            if let Some(g) = grads[i].take() {
                self.propagate(node, g, &mut grads);
            }
        }
        Ok(Gradients {
            grads,
            params: self.params.clone(),
        })
    }

    fn propagate(&self, node: &Node, g: Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if wants(*a) {
                    match &mut grads[a.0] {
                        Some(da) => gemm(m, n, k, g.data(), n, 1, tb.data(), 1, n, 1.0, da.data_mut(), k, 1),
                        empty => *empty = Some(gemm_new(m, n, k, g.data(), n, 1, tb.data(), 1, n)),
                    }
                }
                if wants(*b) {
                    match &mut grads[b.0] {
                        Some(db) => gemm(k, m, n, ta.data(), 1, k, g.data(), n, 1, 1.0, db.data_mut(), n, 1),
                        empty => *empty = Some(gemm_new(k, m, n, ta.data(), 1, k, g.data(), n, 1)),
                    }
                }
            }
            Op::MatMulNt(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
                if wants(*a) {
                    match &mut grads[a.0] {
                        Some(da) => gemm(m, n, k, g.data(), n, 1, tb.data(), k, 1, 1.0, da.data_mut(), k, 1),
                        empty => *empty = Some(gemm_new(m, n, k, g.data(), n, 1, tb.data(), k, 1)),
                    }
                }
                if wants(*b) {
                    match &mut grads[b.0] {
                        Some(db) => gemm(n, m, k, g.data(), 1, n, ta.data(), k, 1, 1.0, db.data_mut(), k, 1),
                        empty => *empty = Some(gemm_new(n, m, k, g.data(), 1, n, ta.data(), k, 1)),
                    }
                }
            }
            Op::Add(a, b) => match (wants(*a), wants(*b)) {
                (true, true) => {
                    pass_through(grads, *a, &g);
                    pass_through_owned(grads, *b, g);
                }
                (true, false) => pass_through_owned(grads, *a, g),
                (false, true) => pass_through_owned(grads, *b, g),
                (false, false) => {}
            },
            Op::AddRow(a, row) => {
                if wants(*row) {
                    let dr = slot(grads, *row, val(*row));
                    let cols = g.cols();
                    if cols > 0 {
                        for chunk in g.data().chunks(cols) {
                            for (d, x) in dr.data_mut().iter_mut().zip(chunk) {
                                *d += x;
                            }
                        }
                    }
                }
                if wants(*a) {
                    pass_through_owned(grads, *a, g);
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                if wants(*a) {
                    let da = slot(grads, *a, ta);
                    for ((d, x), y) in da.data_mut().iter_mut().zip(g.data()).zip(tb.data()) {
                        *d += x * y;
                    }
                }
                if wants(*b) {
                    let db = slot(grads, *b, tb);
                    for ((d, x), y) in db.data_mut().iter_mut().zip(g.data()).zip(ta.data()) {
                        *d += x * y;
                    }
                }
            }
            Op::Scale(a, s) => {
                let da = slot(grads, *a, &g);
                for (d, x) in da.data_mut().iter_mut().zip(g.data()) {
                    *d += x * s;
                }
            }
            Op::Sigmoid(a) => {
                let da = slot(grads, *a, &g);
                for ((d, x), y) in da.data_mut().iter_mut().zip(g.data()).zip(node.value.data()) {
                    *d += x * y * (1.0 - y);
                }
            }
            Op::Tanh(a) => {
                let da = slot(grads, *a, &g);
                for ((d, x), y) in da.data_mut().iter_mut().zip(g.data()).zip(node.value.data()) {
                    *d += x * (1.0 - y * y);
                }
            }
            Op::Softmax(a) => {
                let da = slot(grads, *a, &g);
                let y = &node.value;
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for ((d, p), q) in da.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *d += p * (q - dot);
                    }
                }
            }
            Op::ConcatCols(a, b) => {
                let split = val(*a).cols();
                if wants(*a) {
                    let da = slot(grads, *a, val(*a));
                    for r in 0..g.rows() {
                        for (d, x) in da.row_mut(r).iter_mut().zip(&g.row(r)[..split]) {
                            *d += x;
                        }
                    }
                }
                if wants(*b) {
                    let db = slot(grads, *b, val(*b));
                    for r in 0..g.rows() {
                        for (d, x) in db.row_mut(r).iter_mut().zip(&g.row(r)[split..]) {
                            *d += x;
                        }
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let t = val(p);
                    let len = t.len();
                    if wants(p) {
                        let dp = slot(grads, p, t);
                        for (d, x) in dp.data_mut().iter_mut().zip(&g.data()[offset..offset + len]) {
                            *d += x;
                        }
                    }
                    offset += len;
                }
            }
            Op::Gather(sources) => {
                for (i, &(v, r)) in sources.iter().enumerate() {
                    if wants(v) {
                        let dv = slot(grads, v, val(v));
                        for (d, x) in dv.row_mut(r).iter_mut().zip(g.row(i)) {
                            *d += x;
                        }
                    }
                }
            }
            Op::SliceCols(a, start) => {
                let width = g.cols();
                let da = slot(grads, *a, val(*a));
                for r in 0..g.rows() {
                    for (d, x) in da.row_mut(r)[*start..*start + width].iter_mut().zip(g.row(r)) {
                        *d += x;
                    }
                }
            }
            Op::SliceRows(a, start) => {
                let c = g.cols();
                let da = slot(grads, *a, val(*a));
                for (d, x) in da.data_mut()[start * c..].iter_mut().zip(g.data()) {
                    *d += x;
                }
            }
            Op::LstmMemory(pre, carry, acts) => {
                let w = g.cols();
                if wants(*pre) {
                    let dp = slot(grads, *pre, val(*pre));
                    for r in 0..g.rows() {
                        let (a, gr) = (acts.row(r), g.row(r));
                        let (di, rest) = dp.row_mut(r).split_at_mut(w);
                        let (du, df) = rest[w..].split_at_mut(w);
                        let (ai, au) = (&a[..w], &a[2 * w..3 * w]);
                        for ((di, du), ((gr, i), u)) in di.iter_mut().zip(du.iter_mut()).zip(gr.iter().zip(ai).zip(au))
                        {
                            *di += gr * u * i * (1.0 - i);
                            *du += gr * i * (1.0 - u * u);
                        }
                        if let Some((l, rt)) = carry {
                            let (dl, dr) = df[..2 * w].split_at_mut(w);
                            for (d, side, prev) in [(dl, 3, val(*l)), (dr, 4, val(*rt))] {
                                let f = &a[side * w..(side + 1) * w];
                                for (d, ((gr, p), f)) in d.iter_mut().zip(gr.iter().zip(prev.row(r)).zip(f)) {
                                    *d += gr * p * f * (1.0 - f);
                                }
                            }
                        }
                    }
                }
                if let Some((l, rt)) = carry {
                    for (side, v) in [(3, *l), (4, *rt)] {
                        if wants(v) {
                            let dv = slot(grads, v, val(v));
                            for r in 0..g.rows() {
                                let f = &acts.row(r)[side * w..(side + 1) * w];
                                for (d, (gr, f)) in dv.row_mut(r).iter_mut().zip(g.row(r).iter().zip(f)) {
                                    *d += gr * f;
                                }
                            }
                        }
                    }
                }
            }
            Op::LstmHidden(pre, c, o, t) => {
                let w = g.cols();
                if wants(*pre) {
                    let dp = slot(grads, *pre, val(*pre));
                    for r in 0..g.rows() {
                        let (or, tr, gr) = (o.row(r), t.row(r), g.row(r));
                        for (j, d) in dp.row_mut(r)[w..2 * w].iter_mut().enumerate() {
                            *d += gr[j] * tr[j] * or[j] * (1.0 - or[j]);
                        }
                    }
                }
                if wants(*c) {
                    let dc = slot(grads, *c, val(*c));
                    for r in 0..g.rows() {
                        let (or, tr, gr) = (o.row(r), t.row(r), g.row(r));
                        for (j, d) in dc.row_mut(r).iter_mut().enumerate() {
                            *d += gr[j] * or[j] * (1.0 - tr[j] * tr[j]);
                        }
                    }
                }
            }
            Op::Dropout(a, mask) => {
                let da = slot(grads, *a, &g);
                for ((d, x), m) in da.data_mut().iter_mut().zip(g.data()).zip(mask) {
                    *d += x * m;
                }
            }
            Op::Sum(a) => {
                let s = g.data()[0];
                let da = slot(grads, *a, val(*a));
                da.data_mut().iter_mut().for_each(|d| *d += s);
            }
            Op::CrossEntropy(logits, gold, probs) => {
                let s = g.data()[0];
                let dl = slot(grads, *logits, val(*logits));
                for (j, (d, p)) in dl.data_mut().iter_mut().zip(probs).enumerate() {
                    let target = if j == *gold { 1.0 } else { 0.0 };
                    *d += s * (p - target);
                }
            }
        }
    }
}

fn pass_through(grads: &mut [Option<Tensor>], v: Var, g: &Tensor) {
    match &mut grads[v.0] {
        Some(t) => t.add_assign(g),
        empty => *empty = Some(g.clone()),
    }
}

fn pass_through_owned(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(t) => t.add_assign(&g),
        empty => *empty = Some(g),
    }
}

fn slot<'a>(grads: &'a mut [Option<Tensor>], v: Var, like: &Tensor) -> &'a mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(like.rows(), like.cols()))
}

fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + math::ln(x.iter().map(|v| math::exp(v - max)).sum::<f64>())
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = math::exp(*v - max);
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<Option<Var>>,
}

impl Gradients {
    /// Gradient with respect to a recorded leaf or parameter that requires one.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradients of every parameter recorded on the tape.
    pub fn params(&self) -> ParamGrads {
        let grads = self
            .params
            .iter()
            .map(|v| v.and_then(|v| self.wrt(v).cloned()))
            .collect();
        ParamGrads { grads }
    }
}
