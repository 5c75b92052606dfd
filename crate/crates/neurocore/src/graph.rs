//! Append-only computation tape with reverse-mode gradients.
//!
//! Nodes are recorded in insertion order, which is also a valid topological
//! order: every op can only reference nodes that already exist. Values are
//! computed eagerly when a node is pushed; [`Graph::backward`] walks the tape
//! once in reverse and returns a [`Gradients`] table without touching the
//! recorded values.

use crate::error::NeuroError;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `x [B,in] · wᵀ + b`, with `w [out,in]`.
    Affine {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    /// `a [B,k] · bᵀ` with `b [M,k]`.
    MatMulT {
        a: NodeId,
        b: NodeId,
    },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Minimum(NodeId, NodeId),
    Clamp {
        x: NodeId,
        lo: f64,
        hi: f64,
    },
    MaskedLogSoftmax {
        x: NodeId,
        mask: Vec<bool>,
    },
    MaskedSoftmax {
        x: NodeId,
        mask: Vec<bool>,
    },
    Gather {
        x: NodeId,
        index: Vec<usize>,
    },
    ConcatCols(NodeId, NodeId),
    RowNormalize(NodeId),
    SliceRows {
        x: NodeId,
        start: usize,
        len: usize,
    },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Single-owner tape. Build one per forward pass.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

const NORM_EPS: f64 = 1e-12;

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Parameters, inputs and constants all enter the tape as leaves.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    fn rc(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.rows_cols()
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) {
        assert_eq!(
            self.nodes[a.0].value.shape(),
            self.nodes[b.0].value.shape(),
            "{what}: operand shapes differ"
        );
    }

    fn shape_like(&self, x: NodeId, rows: usize, cols: usize) -> Vec<usize> {
        if self.nodes[x.0].value.shape().len() == 1 && rows == 1 {
            vec![cols]
        } else {
            vec![rows, cols]
        }
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> NodeId {
        let (rows, inp) = self.rc(x);
        let (out, w_in) = self.rc(w);
        assert_eq!(
            self.value(w).shape().len(),
            2,
            "affine: weight must be a matrix"
        );
        assert_eq!(
            inp, w_in,
            "affine: input width {inp} vs weight width {w_in}"
        );
        if let Some(b) = b {
            assert_eq!(self.value(b).len(), out, "affine: bias length mismatch");
        }
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut data = vec![0.0; rows * out];
        for r in 0..rows {
            let xr = &xv[r * inp..(r + 1) * inp];
            for o in 0..out {
                let wr = &wv[o * inp..(o + 1) * inp];
                let mut acc = 0.0;
                for i in 0..inp {
                    acc += wr[i] * xr[i];
                }
                data[r * out + o] = acc;
            }
        }
        if let Some(b) = b {
            let bv = self.value(b).data();
            for r in 0..rows {
                for o in 0..out {
                    data[r * out + o] += bv[o];
                }
            }
        }
        let shape = self.shape_like(x, rows, out);
        self.push(Op::Affine { x, w, b }, Tensor::new(shape, data))
    }

    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ra, k) = self.rc(a);
        let (rb, kb) = self.rc(b);
        assert_eq!(k, kb, "matmul_t: inner dimensions {k} vs {kb}");
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut data = vec![0.0; ra * rb];
        for i in 0..ra {
            for j in 0..rb {
                let mut acc = 0.0;
                for t in 0..k {
                    acc += av[i * k + t] * bv[j * k + t];
                }
                data[i * rb + j] = acc;
            }
        }
        self.push(Op::MatMulT { a, b }, Tensor::matrix(ra, rb, data))
    }

    fn binary(&mut self, a: NodeId, b: NodeId, what: &str, f: impl Fn(f64, f64) -> f64) -> Tensor {
        self.same_shape(a, b, what);
        let av = self.value(a);
        let bv = self.value(b);
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    fn unary(&self, a: NodeId, f: impl Fn(f64) -> f64) -> Tensor {
        let av = self.value(a);
        Tensor::new(
            av.shape().to_vec(),
            av.data().iter().map(|&x| f(x)).collect(),
        )
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.binary(a, b, "add", |x, y| x + y);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.binary(a, b, "sub", |x, y| x - y);
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.binary(a, b, "mul", |x, y| x * y);
        self.push(Op::Mul(a, b), v)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.binary(a, b, "div", |x, y| x / y);
        self.push(Op::Div(a, b), v)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.unary(a, |x| x * c);
        self.push(Op::Scale(a, c), v)
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.unary(a, |x| x + c);
        self.push(Op::AddConst(a), v)
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        let n = self.scale(a, -1.0);
        self.add_const(n, 1.0)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.unary(a, f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.unary(a, sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.unary(a, |x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.unary(a, f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let v = self.unary(a, f64::ln);
        self.push(Op::Log(a), v)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Op::Mean(a), Tensor::scalar(s))
    }

    pub fn minimum(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.binary(a, b, "minimum", f64::min);
        self.push(Op::Minimum(a, b), v)
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        assert!(lo <= hi, "clamp: empty interval");
        let v = self.unary(x, |t| t.clamp(lo, hi));
        self.push(Op::Clamp { x, lo, hi }, v)
    }

    fn check_mask(&self, x: NodeId, mask: &[bool]) -> (usize, usize) {
        let (rows, cols) = self.rc(x);
        assert_eq!(mask.len(), rows * cols, "mask length does not match logits");
        (rows, cols)
    }

    /// Row-wise log-softmax over the entries whose mask is `true`.
    /// Masked-out entries hold `0.0` and receive no gradient; every row must
    /// keep at least one entry (callers validate with
    /// [`crate::masked_softmax`] semantics).
    pub fn masked_log_softmax(&mut self, x: NodeId, mask: Vec<bool>) -> NodeId {
        let (rows, cols) = self.check_mask(x, &mask);
        let xv = self.value(x).data();
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &xv[r * cols..(r + 1) * cols];
            let m = &mask[r * cols..(r + 1) * cols];
            let lse = masked_logsumexp(row, m);
            for c in 0..cols {
                if m[c] {
                    data[r * cols + c] = row[c] - lse;
                }
            }
        }
        let shape = self.value(x).shape().to_vec();
        self.push(Op::MaskedLogSoftmax { x, mask }, Tensor::new(shape, data))
    }

    pub fn masked_softmax(&mut self, x: NodeId, mask: Vec<bool>) -> NodeId {
        let (rows, cols) = self.check_mask(x, &mask);
        let xv = self.value(x).data();
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &xv[r * cols..(r + 1) * cols];
            let m = &mask[r * cols..(r + 1) * cols];
            let lse = masked_logsumexp(row, m);
            for c in 0..cols {
                if m[c] {
                    data[r * cols + c] = (row[c] - lse).exp();
                }
            }
        }
        let shape = self.value(x).shape().to_vec();
        self.push(Op::MaskedSoftmax { x, mask }, Tensor::new(shape, data))
    }

    /// Picks column `index[r]` from each row, giving a vector of length rows.
    pub fn gather(&mut self, x: NodeId, index: Vec<usize>) -> NodeId {
        let (rows, cols) = self.rc(x);
        assert_eq!(index.len(), rows, "gather: one index per row");
        let xv = self.value(x).data();
        let data = index
            .iter()
            .enumerate()
            .map(|(r, &c)| {
                assert!(c < cols, "gather: column {c} out of range {cols}");
                xv[r * cols + c]
            })
            .collect();
        self.push(Op::Gather { x, index }, Tensor::vector(data))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ra, ca) = self.rc(a);
        let (rb, cb) = self.rc(b);
        assert_eq!(ra, rb, "concat_cols: row counts differ");
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut data = Vec::with_capacity(ra * (ca + cb));
        for r in 0..ra {
            data.extend_from_slice(&av[r * ca..(r + 1) * ca]);
            data.extend_from_slice(&bv[r * cb..(r + 1) * cb]);
        }
        let shape = self.shape_like(a, ra, ca + cb);
        self.push(Op::ConcatCols(a, b), Tensor::new(shape, data))
    }

    /// Scales every row to unit L2 norm.
    pub fn row_normalize(&mut self, x: NodeId) -> NodeId {
        let (rows, cols) = self.rc(x);
        let xv = self.value(x).data();
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &xv[r * cols..(r + 1) * cols];
            let n = (row.iter().map(|v| v * v).sum::<f64>() + NORM_EPS).sqrt();
            for c in 0..cols {
                data[r * cols + c] = row[c] / n;
            }
        }
        let shape = self.value(x).shape().to_vec();
        self.push(Op::RowNormalize(x), Tensor::new(shape, data))
    }

    /// Rows `start..start+len` of a matrix.
    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let (rows, cols) = self.rc(x);
        assert!(len > 0 && start + len <= rows, "slice_rows out of range");
        let data = self.value(x).data()[start * cols..(start + len) * cols].to_vec();
        self.push(
            Op::SliceRows { x, start, len },
            Tensor::matrix(len, cols, data),
        )
    }

    /// Reverse sweep from a scalar `loss` node.
    ///
    /// Fails with [`NeuroError::Numeric`] naming the first node (in tape
    /// order) whose value or gradient is not finite.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, NeuroError> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.len() != 1 {
            return Err(NeuroError::Contract(format!(
                "backward requires a scalar loss, node {} has shape {:?}",
                loss.0,
                loss_value.shape()
            )));
        }
        for (i, n) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if !n.value.is_finite() {
                return Err(NeuroError::Numeric { node: i });
            }
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let sizes = self.nodes.iter().map(|n| n.value.len()).collect();
        let out = Gradients { grads, sizes };
        for (i, g) in out.grads.iter().enumerate() {
            if let Some(g) = g {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(NeuroError::Numeric { node: i });
                }
            }
        }
        Ok(out)
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        let val = |id: NodeId| self.nodes[id.0].value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let (rows, inp) = self.rc(*x);
                let (outs, _) = self.rc(*w);
                let xv = val(*x);
                let wv = val(*w);
                {
                    let gx = acc(grads, *x, xv.len());
                    for r in 0..rows {
                        for o in 0..outs {
                            let go = g[r * outs + o];
                            if go == 0.0 {
                                continue;
                            }
                            let wr = &wv[o * inp..(o + 1) * inp];
                            for i in 0..inp {
                                gx[r * inp + i] += go * wr[i];
                            }
                        }
                    }
                }
                {
                    let gw = acc(grads, *w, wv.len());
                    for r in 0..rows {
                        let xr = &xv[r * inp..(r + 1) * inp];
                        for o in 0..outs {
                            let go = g[r * outs + o];
                            if go == 0.0 {
                                continue;
                            }
                            for i in 0..inp {
                                gw[o * inp + i] += go * xr[i];
                            }
                        }
                    }
                }
                if let Some(b) = b {
                    let gb = acc(grads, *b, outs);
                    for r in 0..rows {
                        for o in 0..outs {
                            gb[o] += g[r * outs + o];
                        }
                    }
                }
            }
            Op::MatMulT { a, b } => {
                let (ra, k) = self.rc(*a);
                let (rb, _) = self.rc(*b);
                let av = val(*a).to_vec();
                let bv = val(*b).to_vec();
                {
                    let ga = acc(grads, *a, ra * k);
                    for i in 0..ra {
                        for j in 0..rb {
                            let gij = g[i * rb + j];
                            for t in 0..k {
                                ga[i * k + t] += gij * bv[j * k + t];
                            }
                        }
                    }
                }
                let gb = acc(grads, *b, rb * k);
                for i in 0..ra {
                    for j in 0..rb {
                        let gij = g[i * rb + j];
                        for t in 0..k {
                            gb[j * k + t] += gij * av[i * k + t];
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                add_into(acc(grads, *a, g.len()), g, |_, v| v);
                add_into(acc(grads, *b, g.len()), g, |_, v| v);
            }
            Op::Sub(a, b) => {
                add_into(acc(grads, *a, g.len()), g, |_, v| v);
                add_into(acc(grads, *b, g.len()), g, |_, v| -v);
            }
            Op::Mul(a, b) => {
                let av = val(*a).to_vec();
                let bv = val(*b).to_vec();
                add_into(acc(grads, *a, g.len()), g, |i, v| v * bv[i]);
                add_into(acc(grads, *b, g.len()), g, |i, v| v * av[i]);
            }
            Op::Div(a, b) => {
                let av = val(*a).to_vec();
                let bv = val(*b).to_vec();
                add_into(acc(grads, *a, g.len()), g, |i, v| v / bv[i]);
                add_into(acc(grads, *b, g.len()), g, |i, v| {
                    -v * av[i] / (bv[i] * bv[i])
                });
            }
            Op::Scale(a, c) => add_into(acc(grads, *a, g.len()), g, |_, v| v * c),
            Op::AddConst(a) => add_into(acc(grads, *a, g.len()), g, |_, v| v),
            Op::Tanh(a) => add_into(acc(grads, *a, g.len()), g, |i, v| {
                v * (1.0 - out[i] * out[i])
            }),
            Op::Sigmoid(a) => add_into(acc(grads, *a, g.len()), g, |i, v| {
                v * out[i] * (1.0 - out[i])
            }),
            Op::Relu(a) => {
                let av = val(*a).to_vec();
                add_into(acc(grads, *a, g.len()), g, |i, v| {
                    if av[i] > 0.0 {
                        v
                    } else {
                        0.0
                    }
                })
            }
            Op::Exp(a) => add_into(acc(grads, *a, g.len()), g, |i, v| v * out[i]),
            Op::Log(a) => {
                let av = val(*a).to_vec();
                add_into(acc(grads, *a, g.len()), g, |i, v| v / av[i])
            }
            Op::Sum(a) => {
                let n = val(*a).len();
                let ga = acc(grads, *a, n);
                for v in ga.iter_mut() {
                    *v += g[0];
                }
            }
            Op::Mean(a) => {
                let n = val(*a).len();
                let ga = acc(grads, *a, n);
                let s = g[0] / n as f64;
                for v in ga.iter_mut() {
                    *v += s;
                }
            }
            Op::Minimum(a, b) => {
                let av = val(*a).to_vec();
                let bv = val(*b).to_vec();
                add_into(acc(grads, *a, g.len()), g, |i, v| {
                    if av[i] <= bv[i] {
                        v
                    } else {
                        0.0
                    }
                });
                add_into(acc(grads, *b, g.len()), g, |i, v| {
                    if av[i] <= bv[i] {
                        0.0
                    } else {
                        v
                    }
                });
            }
            Op::Clamp { x, lo, hi } => {
                let xv = val(*x).to_vec();
                add_into(acc(grads, *x, g.len()), g, |i, v| {
                    if xv[i] >= *lo && xv[i] <= *hi {
                        v
                    } else {
                        0.0
                    }
                })
            }
            Op::MaskedLogSoftmax { x, mask } => {
                let (rows, cols) = self.rc(*x);
                let gx = acc(grads, *x, rows * cols);
                for r in 0..rows {
                    let base = r * cols;
                    let gsum: f64 = (0..cols)
                        .filter(|&c| mask[base + c])
                        .map(|c| g[base + c])
                        .sum();
                    for c in 0..cols {
                        if mask[base + c] {
                            gx[base + c] += g[base + c] - out[base + c].exp() * gsum;
                        }
                    }
                }
            }
            Op::MaskedSoftmax { x, mask } => {
                let (rows, cols) = self.rc(*x);
                let gx = acc(grads, *x, rows * cols);
                for r in 0..rows {
                    let base = r * cols;
                    let dot: f64 = (0..cols).map(|c| g[base + c] * out[base + c]).sum();
                    for c in 0..cols {
                        if mask[base + c] {
                            gx[base + c] += out[base + c] * (g[base + c] - dot);
                        }
                    }
                }
            }
            Op::Gather { x, index } => {
                let (rows, cols) = self.rc(*x);
                let gx = acc(grads, *x, rows * cols);
                for (r, &c) in index.iter().enumerate() {
                    gx[r * cols + c] += g[r];
                }
            }
            Op::ConcatCols(a, b) => {
                let (ra, ca) = self.rc(*a);
                let (_, cb) = self.rc(*b);
                {
                    let ga = acc(grads, *a, ra * ca);
                    for r in 0..ra {
                        for c in 0..ca {
                            ga[r * ca + c] += g[r * (ca + cb) + c];
                        }
                    }
                }
                let gb = acc(grads, *b, ra * cb);
                for r in 0..ra {
                    for c in 0..cb {
                        gb[r * cb + c] += g[r * (ca + cb) + ca + c];
                    }
                }
            }
            Op::RowNormalize(x) => {
                let (rows, cols) = self.rc(*x);
                let xv = val(*x).to_vec();
                let gx = acc(grads, *x, rows * cols);
                for r in 0..rows {
                    let base = r * cols;
                    let row = &xv[base..base + cols];
                    let n = (row.iter().map(|v| v * v).sum::<f64>() + NORM_EPS).sqrt();
                    let dot: f64 = (0..cols).map(|c| g[base + c] * out[base + c]).sum();
                    for c in 0..cols {
                        gx[base + c] += (g[base + c] - out[base + c] * dot) / n;
                    }
                }
            }
            Op::SliceRows { x, start, len } => {
                let (rows, cols) = self.rc(*x);
                let gx = acc(grads, *x, rows * cols);
                for i in 0..len * cols {
                    gx[start * cols + i] += g[i];
                }
            }
        }
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], id: NodeId, n: usize) -> &mut Vec<f64> {
    grads[id.0].get_or_insert_with(|| vec![0.0; n])
}

fn add_into(dst: &mut [f64], g: &[f64], f: impl Fn(usize, f64) -> f64) {
    for (i, (d, &v)) in dst.iter_mut().zip(g).enumerate() {
        *d += f(i, v);
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn masked_logsumexp(row: &[f64], mask: &[bool]) -> f64 {
    let max = row
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(
        max > f64::NEG_INFINITY,
        "masked softmax row has no legal entry"
    );
    let s: f64 = row
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| (v - max).exp())
        .sum();
    max + s.ln()
}

/// Reverse-sweep result. Nodes the loss does not depend on report zeros.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    sizes: Vec<usize>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Vec<f64> {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => vec![0.0; self.sizes[id.0]],
        }
    }

    /// Gradients of a list of parameter leaves, in order.
    pub fn collect(&self, ids: &[NodeId]) -> Vec<Vec<f64>> {
        ids.iter().map(|&id| self.get(id)).collect()
    }
}
