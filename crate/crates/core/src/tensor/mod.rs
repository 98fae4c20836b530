//! Reverse-mode automatic differentiation over `ndarray` matrices.
//!
//! Everything the acoustic model computes is recorded on a [`Tape`] as a
//! sequence of primitive matrix operations. `Tape::backward` then walks the
//! recording in reverse and accumulates exact analytic gradients for every
//! trainable leaf. All arithmetic is f64 and strictly sequential, so a given
//! graph always produces bit-identical values and gradients.
//!
//! Matrices are row-major `[rows, cols]`; a time-major feature matrix is
//! `[T, d]`, an embedding is `[1, d]`, a scalar is `[1, 1]`.

use ndarray::{s, Array2, ArrayView2, Axis};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

enum Op {
    Leaf { trainable: bool },
    MatMul(Var, Var),
    /// `a @ b^T` with `a: [m,k]`, `b: [n,k]`.
    MatMulNT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    /// `a + row` with `row: [1, n]` broadcast over rows of `a`.
    AddRowBroadcast(Var, Var),
    /// `a - row` with `row: [1, n]` broadcast over rows of `a`.
    SubRowBroadcast(Var, Var),
    Relu(Var),
    Tanh(Var),
    Abs(Var),
    /// `sqrt(max(a + eps, 0))` with subgradient 0 where `a + eps <= 0`.
    Sqrt(Var, f64),
    SoftmaxRows(Var),
    /// Mean cross-entropy of row-wise logits against integer targets.
    CrossEntropyRows { logits: Var, targets: Vec<usize> },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Array2<f64>,
        inv_std: Vec<f64>,
    },
    ConcatCols(Var, Var),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize, usize),
    /// Sliding window of `k` consecutive rows (zero padded), flattened per
    /// step: output `[T, k*d]`. Kernel `k` must be odd.
    UnfoldTime(Var, usize),
    /// Column means: `[T, d] -> [1, d]`.
    MeanRows(Var),
    /// Mean over all entries: `-> [1, 1]`.
    MeanAll(Var),
    /// Sum over all entries: `-> [1, 1]`.
    SumAll(Var),
    /// Broadcast `[1, d]` to `[t, d]`.
    RepeatRows(Var),
    /// `1 - cos(a, b)` for two `[1, d]` vectors: `-> [1, 1]`.
    CosineGap(Var, Var),
}

struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

/// Gradients of one scalar output with respect to trainable leaves.
pub struct Gradients {
    by_node: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient for a trainable leaf, if that leaf influenced the output.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.by_node.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Array2<f64>> {
        self.by_node.get_mut(v.0).and_then(|g| g.take())
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = &self.nodes[v.0].value;
        assert_eq!(val.dim(), (1, 1), "scalar() on non-scalar node");
        val[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    fn push(&mut self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    // ---- leaves ------------------------------------------------------

    pub fn leaf(&mut self, value: Array2<f64>, trainable: bool) -> Var {
        self.push(value, Op::Leaf { trainable }, trainable)
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.leaf(value, false)
    }

    // ---- primitive operations ----------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (_, ka) = self.shape(a);
        let (kb, _) = self.shape(b);
        assert_eq!(ka, kb, "matmul inner dims {ka} vs {kb}");
        let value = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), needs)
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (_, ka) = self.shape(a);
        let (_, kb) = self.shape(b);
        assert_eq!(ka, kb, "matmul_nt inner dims {ka} vs {kb}");
        let value = self.nodes[a.0].value.dot(&self.nodes[b.0].value.t());
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMulNT(a, b), needs)
    }

    fn binary_same_shape(&self, a: Var, b: Var, what: &str) {
        assert_eq!(self.shape(a), self.shape(b), "{what} shape mismatch");
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary_same_shape(a, b, "add");
        let value = &self.nodes[a.0].value + &self.nodes[b.0].value;
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), needs)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary_same_shape(a, b, "sub");
        let value = &self.nodes[a.0].value - &self.nodes[b.0].value;
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::Sub(a, b), needs)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary_same_shape(a, b, "mul");
        let value = &self.nodes[a.0].value * &self.nodes[b.0].value;
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::Mul(a, b), needs)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x * c);
        let needs = self.needs(a);
        self.push(value, Op::Scale(a, c), needs)
    }

    pub fn add_row_broadcast(&mut self, a: Var, row: Var) -> Var {
        let (_, n) = self.shape(a);
        assert_eq!(self.shape(row), (1, n), "row broadcast shape");
        let value = &self.nodes[a.0].value + &self.nodes[row.0].value;
        let needs = self.needs(a) || self.needs(row);
        self.push(value, Op::AddRowBroadcast(a, row), needs)
    }

    pub fn sub_row_broadcast(&mut self, a: Var, row: Var) -> Var {
        let (_, n) = self.shape(a);
        assert_eq!(self.shape(row), (1, n), "row broadcast shape");
        let value = &self.nodes[a.0].value - &self.nodes[row.0].value;
        let needs = self.needs(a) || self.needs(row);
        self.push(value, Op::SubRowBroadcast(a, row), needs)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x.max(0.0));
        let needs = self.needs(a);
        self.push(value, Op::Relu(a), needs)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(f64::tanh);
        let needs = self.needs(a);
        self.push(value, Op::Tanh(a), needs)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(f64::abs);
        let needs = self.needs(a);
        self.push(value, Op::Abs(a), needs)
    }

    /// `sqrt(max(a + eps, 0))`, subgradient 0 at and below the kink.
    pub fn sqrt_floor(&mut self, a: Var, eps: f64) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| (x + eps).max(0.0).sqrt());
        let needs = self.needs(a);
        self.push(value, Op::Sqrt(a, eps), needs)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = &self.nodes[a.0].value;
        let mut value = x.clone();
        for mut row in value.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        let needs = self.needs(a);
        self.push(value, Op::SoftmaxRows(a), needs)
    }

    /// Mean cross-entropy over rows; `targets[r]` indexes the true class of
    /// row `r`.
    pub fn cross_entropy_rows(&mut self, logits: Var, targets: Vec<usize>) -> Var {
        let (rows, cols) = self.shape(logits);
        assert_eq!(targets.len(), rows, "one target per row");
        assert!(targets.iter().all(|&t| t < cols), "target out of range");
        let x = &self.nodes[logits.0].value;
        let mut total = 0.0;
        for (r, row) in x.rows().into_iter().enumerate() {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[targets[r]];
        }
        let value = Array2::from_elem((1, 1), total / rows as f64);
        let needs = self.needs(logits);
        self.push(value, Op::CrossEntropyRows { logits, targets }, needs)
    }

    /// Row-wise layer normalization with learned gain/bias (`[1, d]` each).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let (_, d) = self.shape(x);
        assert_eq!(self.shape(gamma), (1, d));
        assert_eq!(self.shape(beta), (1, d));
        let xv = &self.nodes[x.0].value;
        let mut normalized = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in normalized.rows_mut() {
            let mean = row.sum() / d as f64;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let istd = 1.0 / (var + eps).sqrt();
            inv_std.push(istd);
            row.mapv_inplace(|v| (v - mean) * istd);
        }
        let value = &normalized * &self.nodes[gamma.0].value + &self.nodes[beta.0].value;
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(value, Op::LayerNorm { x, gamma, beta, normalized, inv_std }, needs)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        assert_eq!(ra, rb, "concat_cols row mismatch");
        let mut value = Array2::zeros((ra, ca + cb));
        value.slice_mut(s![.., ..ca]).assign(&self.nodes[a.0].value);
        value.slice_mut(s![.., ca..]).assign(&self.nodes[b.0].value);
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::ConcatCols(a, b), needs)
    }

    pub fn slice_cols(&mut self, a: Var, from: usize, to: usize) -> Var {
        let (_, c) = self.shape(a);
        assert!(from < to && to <= c, "slice_cols range");
        let value = self.nodes[a.0].value.slice(s![.., from..to]).to_owned();
        let needs = self.needs(a);
        self.push(value, Op::SliceCols(a, from, to), needs)
    }

    pub fn slice_rows(&mut self, a: Var, from: usize, to: usize) -> Var {
        let (r, _) = self.shape(a);
        assert!(from < to && to <= r, "slice_rows range");
        let value = self.nodes[a.0].value.slice(s![from..to, ..]).to_owned();
        let needs = self.needs(a);
        self.push(value, Op::SliceRows(a, from, to), needs)
    }

    pub fn unfold_time(&mut self, a: Var, k: usize) -> Var {
        assert!(k % 2 == 1, "kernel must be odd");
        let (t, d) = self.shape(a);
        let pad = k / 2;
        let x = &self.nodes[a.0].value;
        let mut value = Array2::zeros((t, k * d));
        for row in 0..t {
            for tap in 0..k {
                let src = row as isize + tap as isize - pad as isize;
                if src < 0 || src >= t as isize {
                    continue;
                }
                value
                    .slice_mut(s![row, tap * d..(tap + 1) * d])
                    .assign(&x.row(src as usize));
            }
        }
        let needs = self.needs(a);
        self.push(value, Op::UnfoldTime(a, k), needs)
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let (t, _) = self.shape(a);
        let value = self
            .nodes[a.0]
            .value
            .sum_axis(Axis(0))
            .insert_axis(Axis(0))
            .mapv(|v| v / t as f64);
        let needs = self.needs(a);
        self.push(value, Op::MeanRows(a), needs)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let (t, d) = self.shape(a);
        let value = Array2::from_elem((1, 1), self.nodes[a.0].value.sum() / (t * d) as f64);
        let needs = self.needs(a);
        self.push(value, Op::MeanAll(a), needs)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.nodes[a.0].value.sum());
        let needs = self.needs(a);
        self.push(value, Op::SumAll(a), needs)
    }

    pub fn repeat_rows(&mut self, a: Var, t: usize) -> Var {
        let (r, d) = self.shape(a);
        assert_eq!(r, 1, "repeat_rows expects a [1, d] input");
        assert!(t >= 1);
        let row = self.nodes[a.0].value.row(0).to_owned();
        let value = Array2::from_shape_fn((t, d), |(_, j)| row[j]);
        let needs = self.needs(a);
        self.push(value, Op::RepeatRows(a), needs)
    }

    /// `1 - cos(a, b)` for nonzero `[1, d]` vectors.
    pub fn cosine_gap(&mut self, a: Var, b: Var) -> Var {
        self.binary_same_shape(a, b, "cosine_gap");
        assert_eq!(self.shape(a).0, 1, "cosine_gap expects [1, d] vectors");
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let na = av.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb = bv.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(na > 0.0 && nb > 0.0, "cosine_gap on zero-norm vector");
        let dot = av.iter().zip(bv.iter()).map(|(x, y)| x * y).sum::<f64>();
        let value = Array2::from_elem((1, 1), 1.0 - dot / (na * nb));
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::CosineGap(a, b), needs)
    }

    // ---- backward ------------------------------------------------------

    /// Accumulate gradients of scalar `output` into every trainable leaf.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.shape(output), (1, 1), "backward needs a scalar output");
        let mut acc: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut result: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        acc[output.0] = Some(Array2::from_elem((1, 1), 1.0));

        for i in (0..=output.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = acc[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf { trainable } => {
                    if *trainable {
                        result[i] = Some(g);
                    }
                }
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        let d = g.dot(&self.nodes[b.0].value.t());
                        acc_owned(&mut acc[a.0], d);
                    }
                    if self.needs(*b) {
                        let d = self.nodes[a.0].value.t().dot(&g);
                        acc_owned(&mut acc[b.0], d);
                    }
                }
                Op::MatMulNT(a, b) => {
                    if self.needs(*a) {
                        let d = g.dot(&self.nodes[b.0].value);
                        acc_owned(&mut acc[a.0], d);
                    }
                    if self.needs(*b) {
                        let d = g.t().dot(&self.nodes[a.0].value);
                        acc_owned(&mut acc[b.0], d);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        acc_view(&mut acc[a.0], &g.view());
                    }
                    if self.needs(*b) {
                        acc_view(&mut acc[b.0], &g.view());
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(*a) {
                        acc_view(&mut acc[a.0], &g.view());
                    }
                    if self.needs(*b) {
                        acc_owned(&mut acc[b.0], g.mapv(|v| -v));
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        acc_owned(&mut acc[a.0], &g * &self.nodes[b.0].value);
                    }
                    if self.needs(*b) {
                        acc_owned(&mut acc[b.0], &g * &self.nodes[a.0].value);
                    }
                }
                Op::Scale(a, c) => {
                    if self.needs(*a) {
                        acc_owned(&mut acc[a.0], g.mapv(|v| v * c));
                    }
                }
                Op::AddRowBroadcast(a, row) => {
                    if self.needs(*a) {
                        acc_view(&mut acc[a.0], &g.view());
                    }
                    if self.needs(*row) {
                        let d = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                        acc_owned(&mut acc[row.0], d);
                    }
                }
                Op::SubRowBroadcast(a, row) => {
                    if self.needs(*a) {
                        acc_view(&mut acc[a.0], &g.view());
                    }
                    if self.needs(*row) {
                        let d = g.sum_axis(Axis(0)).insert_axis(Axis(0)).mapv(|v| -v);
                        acc_owned(&mut acc[row.0], d);
                    }
                }
                Op::Relu(a) => {
                    if self.needs(*a) {
                        let mut d = g;
                        d.zip_mut_with(&self.nodes[a.0].value, |gv, &xv| {
                            if xv <= 0.0 {
                                *gv = 0.0;
                            }
                        });
                        acc_owned(&mut acc[a.0], d);
                    }
                }
                Op::Tanh(a) => {
                    if self.needs(*a) {
                        let mut d = g;
                        d.zip_mut_with(&self.nodes[i].value, |gv, &yv| {
                            *gv *= 1.0 - yv * yv;
                        });
                        acc_owned(&mut acc[a.0], d);
                    }
                }
                Op::Abs(a) => {
                    if self.needs(*a) {
                        let mut d = g;
                        d.zip_mut_with(&self.nodes[a.0].value, |gv, &xv| {
                            *gv *= if xv > 0.0 {
                                1.0
                            } else if xv < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                        });
                        acc_owned(&mut acc[a.0], d);
                    }
                }
                Op::Sqrt(a, eps) => {
                    if self.needs(*a) {
                        let mut d = g;
                        let eps = *eps;
                        d.zip_mut_with(&self.nodes[a.0].value, |gv, &xv| {
                            let shifted = xv + eps;
                            *gv = if shifted > 0.0 { *gv * 0.5 / shifted.sqrt() } else { 0.0 };
                        });
                        acc_owned(&mut acc[a.0], d);
                    }
                }
                Op::SoftmaxRows(a) => {
                    if self.needs(*a) {
                        let y = &self.nodes[i].value;
                        let mut d = g;
                        for (mut grow, yrow) in d.rows_mut().into_iter().zip(y.rows()) {
                            let dot: f64 =
                                grow.iter().zip(yrow.iter()).map(|(gv, yv)| gv * yv).sum();
                            for (gv, yv) in grow.iter_mut().zip(yrow.iter()) {
                                *gv = yv * (*gv - dot);
                            }
                        }
                        acc_owned(&mut acc[a.0], d);
                    }
                }
                Op::CrossEntropyRows { logits, targets } => {
                    if self.needs(*logits) {
                        let x = &self.nodes[logits.0].value;
                        let rows = x.nrows();
                        let scale = g[[0, 0]] / rows as f64;
                        let mut d = Array2::zeros(x.dim());
                        for (r, row) in x.rows().into_iter().enumerate() {
                            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                            let denom: f64 = row.iter().map(|&v| (v - max).exp()).sum();
                            for (c, &v) in row.iter().enumerate() {
                                let p = (v - max).exp() / denom;
                                let onehot = if c == targets[r] { 1.0 } else { 0.0 };
                                d[[r, c]] = scale * (p - onehot);
                            }
                        }
                        acc_owned(&mut acc[logits.0], d);
                    }
                }
                Op::LayerNorm { x, gamma, beta, normalized, inv_std } => {
                    if self.needs(*beta) {
                        let d = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                        acc_owned(&mut acc[beta.0], d);
                    }
                    if self.needs(*gamma) {
                        let d = (&g * normalized).sum_axis(Axis(0)).insert_axis(Axis(0));
                        acc_owned(&mut acc[gamma.0], d);
                    }
                    if self.needs(*x) {
                        let d_feat = self.shape(*x).1 as f64;
                        let gm = &self.nodes[gamma.0].value;
                        let dxhat = &g * gm;
                        let mut d = Array2::zeros(g.dim());
                        for (r, (dn_row, n_row)) in
                            dxhat.rows().into_iter().zip(normalized.rows()).enumerate()
                        {
                            let mean_dn: f64 = dn_row.sum() / d_feat;
                            let mean_dn_n: f64 = dn_row
                                .iter()
                                .zip(n_row.iter())
                                .map(|(a, b)| a * b)
                                .sum::<f64>()
                                / d_feat;
                            for (c, (dn, nv)) in dn_row.iter().zip(n_row.iter()).enumerate() {
                                d[[r, c]] = inv_std[r] * (dn - mean_dn - nv * mean_dn_n);
                            }
                        }
                        acc_owned(&mut acc[x.0], d);
                    }
                }
                Op::ConcatCols(a, b) => {
                    let (_, ca) = self.shape(*a);
                    if self.needs(*a) {
                        acc_view(&mut acc[a.0], &g.slice(s![.., ..ca]));
                    }
                    if self.needs(*b) {
                        acc_view(&mut acc[b.0], &g.slice(s![.., ca..]));
                    }
                }
                Op::SliceCols(a, from, to) => {
                    if self.needs(*a) {
                        let mut d = Array2::zeros(self.shape(*a));
                        d.slice_mut(s![.., *from..*to]).assign(&g);
                        acc_owned(&mut acc[a.0], d);
                    }
                }
                Op::SliceRows(a, from, to) => {
                    if self.needs(*a) {
                        let mut d = Array2::zeros(self.shape(*a));
                        d.slice_mut(s![*from..*to, ..]).assign(&g);
                        acc_owned(&mut acc[a.0], d);
                    }
                }
                Op::UnfoldTime(a, k) => {
                    if self.needs(*a) {
                        let (t, d_in) = self.shape(*a);
                        let pad = k / 2;
                        let mut d = Array2::zeros((t, d_in));
                        for row in 0..t {
                            for tap in 0..*k {
                                let src = row as isize + tap as isize - pad as isize;
                                if src < 0 || src >= t as isize {
                                    continue;
                                }
                                let mut dst = d.row_mut(src as usize);
                                let patch = g.slice(s![row, tap * d_in..(tap + 1) * d_in]);
                                dst += &patch;
                            }
                        }
                        acc_owned(&mut acc[a.0], d);
                    }
                }
                Op::MeanRows(a) => {
                    if self.needs(*a) {
                        let (t, d_cols) = self.shape(*a);
                        let scale = 1.0 / t as f64;
                        let row = g.row(0);
                        let d = Array2::from_shape_fn((t, d_cols), |(_, j)| row[j] * scale);
                        acc_owned(&mut acc[a.0], d);
                    }
                }
                Op::MeanAll(a) => {
                    if self.needs(*a) {
                        let (t, d_cols) = self.shape(*a);
                        let v = g[[0, 0]] / (t * d_cols) as f64;
                        acc_owned(&mut acc[a.0], Array2::from_elem((t, d_cols), v));
                    }
                }
                Op::SumAll(a) => {
                    if self.needs(*a) {
                        let v = g[[0, 0]];
                        acc_owned(&mut acc[a.0], Array2::from_elem(self.shape(*a), v));
                    }
                }
                Op::RepeatRows(a) => {
                    if self.needs(*a) {
                        let d = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                        acc_owned(&mut acc[a.0], d);
                    }
                }
                Op::CosineGap(a, b) => {
                    let gv = g[[0, 0]];
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let na = av.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let nb = bv.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let dot: f64 = av.iter().zip(bv.iter()).map(|(x, y)| x * y).sum();
                    let cos = dot / (na * nb);
                    if self.needs(*a) {
                        let d = Array2::from_shape_fn(av.dim(), |(r, c)| {
                            let ahat = av[[r, c]] / na;
                            let bhat = bv[[r, c]] / nb;
                            -gv * (bhat - cos * ahat) / na
                        });
                        acc_owned(&mut acc[a.0], d);
                    }
                    if self.needs(*b) {
                        let d = Array2::from_shape_fn(bv.dim(), |(r, c)| {
                            let ahat = av[[r, c]] / na;
                            let bhat = bv[[r, c]] / nb;
                            -gv * (ahat - cos * bhat) / nb
                        });
                        acc_owned(&mut acc[b.0], d);
                    }
                }
            }
        }

        Gradients { by_node: result }
    }
}

fn acc_owned(slot: &mut Option<Array2<f64>>, delta: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &delta,
        None => *slot = Some(delta),
    }
}

fn acc_view(slot: &mut Option<Array2<f64>>, delta: &ArrayView2<f64>) {
    match slot {
        Some(acc) => *acc += delta,
        None => *slot = Some(delta.to_owned()),
    }
}

#[cfg(test)]
mod tests;
