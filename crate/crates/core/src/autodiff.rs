//! Tape-based reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Graph`] records every operation as it is evaluated; [`Graph::backward`]
//! walks the tape in reverse and accumulates vector-Jacobian products. Nodes
//! that do not depend on any differentiable leaf are skipped.

use std::ops::Range;

use crate::scalar::{gemm, Scalar, View};
use crate::skeleton::{fk::fk_row_into, forward_kinematics_vjp, Skeleton, JOINT_COUNT, POSE_DIM};
use crate::tensor::Matrix;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Query rows attending to key rows; one pair per independent sequence.
#[derive(Clone, Debug)]
pub struct SegmentPair {
    pub queries: Range<usize>,
    pub keys: Range<usize>,
}

enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, S),
    ScaleRows(Var, Vec<S>),
    Silu(Var),
    LayerNorm { x: Var, xhat: Matrix<S>, inv_std: Vec<S> },
    Attention { q: Var, k: Var, v: Var, heads: usize, pairs: Vec<SegmentPair>, probs: Vec<Vec<S>> },
    ConcatCols(Vec<Var>),
    SumSquares(Var),
    MeanSquares(Var),
    FrameDiff(Var, Vec<Range<usize>>),
    SegmentMean(Var, Vec<Range<usize>>),
    NormalizeRows { x: Var, norms: Vec<S> },
    Transpose(Var),
    SoftCrossEntropy { logits: Var, targets: Matrix<S>, probs: Matrix<S> },
    Kinematics { x: Var, skeleton: Skeleton<S> },
}

struct Node<S> {
    value: Matrix<S>,
    op: Op<S>,
    needs_grad: bool,
}

pub struct Graph<S: Scalar> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<S>, op: Op<S>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn grad_any(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn value(&self, v: Var) -> &Matrix<S> {
        &self.nodes[v.0].value
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Matrix<S>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Differentiable leaf.
    pub fn variable(&mut self, value: Matrix<S>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b)).expect("matmul shape");
        let g = self.grad_any(&[a, b]);
        self.push(value, Op::MatMul(a, b), g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).add(self.value(b)).expect("add shape");
        let g = self.grad_any(&[a, b]);
        self.push(value, Op::Add(a, b), g)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).sub(self.value(b)).expect("sub shape");
        let g = self.grad_any(&[a, b]);
        self.push(value, Op::Sub(a, b), g)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y).expect("mul shape");
        let g = self.grad_any(&[a, b]);
        self.push(value, Op::Mul(a, b), g)
    }

    /// `a (r×c) + row (1×c)` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (av, rv) = (self.value(a), self.value(row));
        assert_eq!((1, av.cols()), rv.shape(), "add_row shape");
        let mut value = av.clone();
        for r in 0..value.rows() {
            for (x, &b) in value.row_mut(r).iter_mut().zip(rv.data()) {
                *x = *x + b;
            }
        }
        let g = self.grad_any(&[a, row]);
        self.push(value, Op::AddRow(a, row), g)
    }

    /// `a (r×c) * row (1×c)` broadcast over rows.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (av, rv) = (self.value(a), self.value(row));
        assert_eq!((1, av.cols()), rv.shape(), "mul_row shape");
        let mut value = av.clone();
        for r in 0..value.rows() {
            for (x, &b) in value.row_mut(r).iter_mut().zip(rv.data()) {
                *x = *x * b;
            }
        }
        let g = self.grad_any(&[a, row]);
        self.push(value, Op::MulRow(a, row), g)
    }

    pub fn scale(&mut self, a: Var, k: S) -> Var {
        let value = self.value(a).scale(k);
        let g = self.grad_any(&[a]);
        self.push(value, Op::Scale(a, k), g)
    }

    /// Multiplies row `i` by the constant `k[i]`.
    pub fn scale_rows(&mut self, a: Var, k: Vec<S>) -> Var {
        let mut value = self.value(a).clone();
        assert_eq!(k.len(), value.rows(), "scale_rows length");
        for (r, &kr) in k.iter().enumerate() {
            for x in value.row_mut(r) {
                *x = *x * kr;
            }
        }
        let g = self.grad_any(&[a]);
        self.push(value, Op::ScaleRows(a, k), g)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * sigmoid(x));
        let g = self.grad_any(&[a]);
        self.push(value, Op::Silu(a), g)
    }

    /// Per-row standardization without affine terms.
    pub fn layer_norm(&mut self, x: Var) -> Var {
        let eps = S::of(1e-5);
        let xv = self.value(x);
        let cols = S::of(xv.cols() as f64);
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.rows());
        for r in 0..xv.rows() {
            let row = xhat.row_mut(r);
            let mean = row.iter().copied().sum::<S>() / cols;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / cols;
            let is = S::one() / (var + eps).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * is;
            }
            inv_std.push(is);
        }
        let g = self.grad_any(&[x]);
        self.push(xhat.clone(), Op::LayerNorm { x, xhat, inv_std }, g)
    }

    /// Multi-head scaled dot-product attention, block-diagonal over `pairs`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, pairs: Vec<SegmentPair>) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let width = qv.cols();
        assert!(heads > 0 && width % heads == 0, "attention width must divide into heads");
        assert_eq!(kv.cols(), width, "attention key width");
        assert_eq!(vv.shape(), kv.shape(), "attention value shape");
        let dh = width / heads;
        let scale = S::one() / S::of(dh as f64).sqrt();
        let mut out = Matrix::zeros(qv.rows(), width);
        let mut probs = Vec::with_capacity(pairs.len() * heads);
        for pair in &pairs {
            let (nq, nk) = (pair.queries.len(), pair.keys.len());
            for h in 0..heads {
                let mut p = vec![S::zero(); nq * nk];
                gemm(
                    nq,
                    dh,
                    nk,
                    scale,
                    qv.data(),
                    View::row_major(pair.queries.start * width + h * dh, width),
                    kv.data(),
                    View::transposed(pair.keys.start * width + h * dh, width),
                    S::zero(),
                    &mut p,
                    View::row_major(0, nk),
                );
                for row in p.chunks_mut(nk) {
                    softmax_in_place(row);
                }
                gemm(
                    nq,
                    nk,
                    dh,
                    S::one(),
                    &p,
                    View::row_major(0, nk),
                    vv.data(),
                    View::row_major(pair.keys.start * width + h * dh, width),
                    S::zero(),
                    out.data_mut(),
                    View::row_major(pair.queries.start * width + h * dh, width),
                );
                probs.push(p);
            }
        }
        let g = self.grad_any(&[q, k, v]);
        self.push(out, Op::Attention { q, k, v, heads, pairs, probs }, g)
    }

    pub fn concat_cols(&mut self, parts: Vec<Var>) -> Var {
        let mats: Vec<&Matrix<S>> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Matrix::hstack(&mats).expect("concat_cols rows");
        let g = self.grad_any(&parts);
        self.push(value, Op::ConcatCols(parts), g)
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum_squares());
        let g = self.grad_any(&[a]);
        self.push(value, Op::SumSquares(a), g)
    }

    /// Mean over all elements of the squared entries.
    pub fn mean_squares(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let value = Matrix::scalar(av.sum_squares() / S::of(av.len().max(1) as f64));
        let g = self.grad_any(&[a]);
        self.push(value, Op::MeanSquares(a), g)
    }

    /// Row `i+1` minus row `i` inside every segment, concatenated.
    pub fn frame_diff(&mut self, a: Var, segments: Vec<Range<usize>>) -> Var {
        let av = self.value(a);
        let rows: usize = segments.iter().map(|s| s.len().saturating_sub(1)).sum();
        let mut value = Matrix::zeros(rows, av.cols());
        let mut o = 0;
        for seg in &segments {
            for r in seg.start + 1..seg.end {
                let (cur, prev) = (av.row(r), av.row(r - 1));
                for (c, x) in value.row_mut(o).iter_mut().enumerate() {
                    *x = cur[c] - prev[c];
                }
                o += 1;
            }
        }
        let g = self.grad_any(&[a]);
        self.push(value, Op::FrameDiff(a, segments), g)
    }

    /// Mean of the rows of every segment: one output row per segment.
    pub fn segment_mean(&mut self, a: Var, segments: Vec<Range<usize>>) -> Var {
        let av = self.value(a);
        let mut value = Matrix::zeros(segments.len(), av.cols());
        for (i, seg) in segments.iter().enumerate() {
            let inv = S::one() / S::of(seg.len() as f64);
            for r in seg.clone() {
                for (x, &y) in value.row_mut(i).iter_mut().zip(av.row(r)) {
                    *x = *x + y * inv;
                }
            }
        }
        let g = self.grad_any(&[a]);
        self.push(value, Op::SegmentMean(a, segments), g)
    }

    pub fn normalize_rows(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        let mut norms = Vec::with_capacity(value.rows());
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let n = row.iter().map(|&v| v * v).sum::<S>().sqrt().max(S::of(1e-12));
            for v in row.iter_mut() {
                *v = *v / n;
            }
            norms.push(n);
        }
        let g = self.grad_any(&[x]);
        self.push(value, Op::NormalizeRows { x, norms }, g)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let g = self.grad_any(&[a]);
        self.push(value, Op::Transpose(a), g)
    }

    /// Mean over rows of `-sum_c targets[r,c] * log softmax(logits)[r,c]`.
    pub fn soft_cross_entropy(&mut self, logits: Var, targets: Matrix<S>) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.shape(), targets.shape(), "soft_cross_entropy shape");
        let mut probs = lv.clone();
        let mut loss = S::zero();
        for r in 0..lv.rows() {
            let row = lv.row(r);
            let m = row.iter().copied().fold(S::neg_infinity(), S::max);
            let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<S>().ln();
            for (c, p) in probs.row_mut(r).iter_mut().enumerate() {
                let logp = row[c] - lse;
                loss = loss - targets.get(r, c) * logp;
                *p = logp.exp();
            }
        }
        let value = Matrix::scalar(loss / S::of(lv.rows().max(1) as f64));
        let g = self.grad_any(&[logits]);
        self.push(value, Op::SoftCrossEntropy { logits, targets, probs }, g)
    }

    /// Global joint positions (`R × 72`) of every encoded pose row (`R × 147`).
    pub fn forward_kinematics(&mut self, x: Var, skeleton: &Skeleton<S>) -> Result<Var> {
        let xv = self.value(x);
        assert_eq!(xv.cols(), POSE_DIM, "forward_kinematics input width");
        let mut value = Matrix::zeros(xv.rows(), JOINT_COUNT * 3);
        for r in 0..xv.rows() {
            fk_row_into(skeleton, xv.row(r), value.row_mut(r))?;
        }
        let g = self.grad_any(&[x]);
        Ok(self.push(value, Op::Kinematics { x, skeleton: skeleton.clone() }, g))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients<S>> {
        assert_eq!(self.value(output).shape(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Matrix<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Matrix::scalar(S::one()));
        for i in (0..=output.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix<S>>], v: Var, g: Matrix<S>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn accumulate_with(&self, grads: &mut [Option<Matrix<S>>], v: Var, f: impl FnOnce(&mut Matrix<S>)) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let (r, c) = self.value(v).shape();
        let slot = grads[v.0].get_or_insert_with(|| Matrix::zeros(r, c));
        f(slot);
    }

    fn propagate(&self, i: usize, g: &Matrix<S>, grads: &mut [Option<Matrix<S>>]) -> Result<()> {
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                self.accumulate_with(grads, *a, |ga| {
                    gemm(m, n, k, S::one(), g.data(), View::row_major(0, n), bv.data(), View::transposed(0, n), S::one(), ga.data_mut(), View::row_major(0, k));
                });
                self.accumulate_with(grads, *b, |gb| {
                    gemm(k, m, n, S::one(), av.data(), View::transposed(0, k), g.data(), View::row_major(0, n), S::one(), gb.data_mut(), View::row_major(0, n));
                });
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.scale(-S::one()));
            }
            Op::Mul(a, b) => {
                let ga = g.zip_map(self.value(*b), |x, y| x * y)?;
                let gb = g.zip_map(self.value(*a), |x, y| x * y)?;
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate_with(grads, *row, |gr| {
                    for r in 0..g.rows() {
                        for (x, &y) in gr.data_mut().iter_mut().zip(g.row(r)) {
                            *x = *x + y;
                        }
                    }
                });
            }
            Op::MulRow(a, row) => {
                let (av, rv) = (self.value(*a), self.value(*row));
                self.accumulate_with(grads, *a, |ga| {
                    for r in 0..g.rows() {
                        let gr = g.row(r);
                        for (c, x) in ga.row_mut(r).iter_mut().enumerate() {
                            *x = *x + gr[c] * rv.data()[c];
                        }
                    }
                });
                self.accumulate_with(grads, *row, |gw| {
                    for r in 0..g.rows() {
                        let (gr, ar) = (g.row(r), av.row(r));
                        for (c, x) in gw.data_mut().iter_mut().enumerate() {
                            *x = *x + gr[c] * ar[c];
                        }
                    }
                });
            }
            Op::Scale(a, k) => self.accumulate(grads, *a, g.scale(*k)),
            Op::ScaleRows(a, k) => {
                let mut ga = g.clone();
                for (r, &kr) in k.iter().enumerate() {
                    for x in ga.row_mut(r) {
                        *x = *x * kr;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Silu(a) => {
                let ga = g.zip_map(self.value(*a), |gy, x| {
                    let s = sigmoid(x);
                    gy * s * (S::one() + x * (S::one() - s))
                })?;
                self.accumulate(grads, *a, ga);
            }
            Op::LayerNorm { x, xhat, inv_std } => {
                let cols = S::of(xhat.cols() as f64);
                let mut gx = Matrix::zeros(xhat.rows(), xhat.cols());
                for r in 0..xhat.rows() {
                    let (gy, xh) = (g.row(r), xhat.row(r));
                    let mean_g = gy.iter().copied().sum::<S>() / cols;
                    let mean_gx = gy.iter().zip(xh).map(|(&a, &b)| a * b).sum::<S>() / cols;
                    for (c, out) in gx.row_mut(r).iter_mut().enumerate() {
                        *out = inv_std[r] * (gy[c] - mean_g - xh[c] * mean_gx);
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Attention { q, k, v, heads, pairs, probs } => {
                self.attention_backward(g, *q, *k, *v, *heads, pairs, probs, grads);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    self.accumulate(grads, p, g.slice_cols(off..off + w));
                    off += w;
                }
            }
            Op::SumSquares(a) => {
                let k = g.item() * S::of(2.0);
                self.accumulate(grads, *a, self.value(*a).scale(k));
            }
            Op::MeanSquares(a) => {
                let av = self.value(*a);
                let k = g.item() * S::of(2.0) / S::of(av.len().max(1) as f64);
                self.accumulate(grads, *a, av.scale(k));
            }
            Op::FrameDiff(a, segments) => {
                self.accumulate_with(grads, *a, |ga| {
                    let mut o = 0;
                    for seg in segments {
                        for r in seg.start + 1..seg.end {
                            for (c, &gv) in g.row(o).iter().enumerate() {
                                let cur = ga.get(r, c);
                                ga.set(r, c, cur + gv);
                                let prev = ga.get(r - 1, c);
                                ga.set(r - 1, c, prev - gv);
                            }
                            o += 1;
                        }
                    }
                });
            }
            Op::SegmentMean(a, segments) => {
                self.accumulate_with(grads, *a, |ga| {
                    for (i, seg) in segments.iter().enumerate() {
                        let inv = S::one() / S::of(seg.len() as f64);
                        for r in seg.clone() {
                            for (x, &y) in ga.row_mut(r).iter_mut().zip(g.row(i)) {
                                *x = *x + y * inv;
                            }
                        }
                    }
                });
            }
            Op::NormalizeRows { x, norms } => {
                let y = &self.nodes[i].value;
                let mut gx = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (gy, yr) = (g.row(r), y.row(r));
                    let d = gy.iter().zip(yr).map(|(&a, &b)| a * b).sum::<S>();
                    for (c, out) in gx.row_mut(r).iter_mut().enumerate() {
                        *out = (gy[c] - yr[c] * d) / norms[r];
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.transpose()),
            Op::SoftCrossEntropy { logits, targets, probs } => {
                let k = g.item() / S::of(probs.rows().max(1) as f64);
                let gl = probs.zip_map(targets, |p, t| (p - t) * k)?;
                self.accumulate(grads, *logits, gl);
            }
            Op::Kinematics { x, skeleton } => {
                let xv = self.value(*x);
                let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                for r in 0..xv.rows() {
                    let back = forward_kinematics_vjp(skeleton, xv.row(r), g.row(r))?;
                    gx.row_mut(r).copy_from_slice(&back);
                }
                self.accumulate(grads, *x, gx);
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        g: &Matrix<S>,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        pairs: &[SegmentPair],
        probs: &[Vec<S>],
        grads: &mut [Option<Matrix<S>>],
    ) {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let width = qv.cols();
        let dh = width / heads;
        let scale = S::one() / S::of(dh as f64).sqrt();
        let mut gq = Matrix::zeros(qv.rows(), width);
        let mut gk = Matrix::zeros(kv.rows(), width);
        let mut gv = Matrix::zeros(vv.rows(), width);
        for (s, pair) in pairs.iter().enumerate() {
            let (nq, nk) = (pair.queries.len(), pair.keys.len());
            let qoff = pair.queries.start * width;
            let koff = pair.keys.start * width;
            for h in 0..heads {
                let p = &probs[s * heads + h];
                // dV += P^T dOut
                gemm(nk, nq, dh, S::one(), p, View::transposed(0, nk), g.data(), View::row_major(qoff + h * dh, width), S::one(), gv.data_mut(), View::row_major(koff + h * dh, width));
                // dP = dOut V^T
                let mut dp = vec![S::zero(); nq * nk];
                gemm(nq, dh, nk, S::one(), g.data(), View::row_major(qoff + h * dh, width), vv.data(), View::transposed(koff + h * dh, width), S::zero(), &mut dp, View::row_major(0, nk));
                // softmax backward, folded with the score scale
                for (prow, dprow) in p.chunks(nk).zip(dp.chunks_mut(nk)) {
                    let dot = prow.iter().zip(dprow.iter()).map(|(&a, &b)| a * b).sum::<S>();
                    for (d, &pp) in dprow.iter_mut().zip(prow) {
                        *d = pp * (*d - dot) * scale;
                    }
                }
                gemm(nq, nk, dh, S::one(), &dp, View::row_major(0, nk), kv.data(), View::row_major(koff + h * dh, width), S::one(), gq.data_mut(), View::row_major(qoff + h * dh, width));
                gemm(nk, nq, dh, S::one(), &dp, View::transposed(0, nk), qv.data(), View::row_major(qoff + h * dh, width), S::one(), gk.data_mut(), View::row_major(koff + h * dh, width));
            }
        }
        self.accumulate(grads, q, gq);
        self.accumulate(grads, k, gk);
        self.accumulate(grads, v, gv);
    }
}

pub struct Gradients<S> {
    grads: Vec<Option<Matrix<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&Matrix<S>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

#[inline]
fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

fn softmax_in_place<S: Scalar>(row: &mut [S]) {
    let m = row.iter().copied().fold(S::neg_infinity(), S::max);
    let mut sum = S::zero();
    for x in row.iter_mut() {
        *x = (*x - m).exp();
        sum = sum + *x;
    }
    for x in row.iter_mut() {
        *x = *x / sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix<f64> {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Checks d(output)/d(input) of `build` against central differences.
    fn check(inputs: Vec<Matrix<f64>>, build: impl Fn(&mut Graph<f64>, &[Var]) -> Var) {
        let eval = |ins: &[Matrix<f64>]| {
            let mut g = Graph::new();
            let vars: Vec<Var> = ins.iter().map(|m| g.variable(m.clone())).collect();
            let out = build(&mut g, &vars);
            (g, vars, out)
        };
        let (g, vars, out) = eval(&inputs);
        let grads = g.backward(out).unwrap();
        let h = 1e-6;
        for (i, input) in inputs.iter().enumerate() {
            let analytic = grads.get(vars[i]).cloned().unwrap_or_else(|| Matrix::zeros(input.rows(), input.cols()));
            for e in 0..input.len() {
                let mut plus = inputs.clone();
                plus[i].data_mut()[e] += h;
                let mut minus = inputs.clone();
                minus[i].data_mut()[e] -= h;
                let (gp, _, op) = eval(&plus);
                let (gm, _, om) = eval(&minus);
                let fd = (gp.value(op).item() - gm.value(om).item()) / (2.0 * h);
                let a = analytic.data()[e];
                assert!((fd - a).abs() < 1e-6 * (1.0 + fd.abs()), "input {i} elem {e}: fd {fd} analytic {a}");
            }
        }
    }

    #[test]
    fn elementwise_and_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ins = vec![rand_matrix(&mut rng, 3, 4), rand_matrix(&mut rng, 4, 2), rand_matrix(&mut rng, 3, 2), rand_matrix(&mut rng, 1, 2)];
        check(ins, |g, v| {
            let m = g.matmul(v[0], v[1]);
            let s = g.silu(m);
            let p = g.mul(s, v[2]);
            let q = g.add_row(p, v[3]);
            let r = g.mul_row(q, v[3]);
            let d = g.sub(r, v[2]);
            let t = g.scale_rows(d, vec![0.5, -1.0, 2.0]);
            g.sum_squares(t)
        });
    }

    #[test]
    fn layer_norm_and_concat() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ins = vec![rand_matrix(&mut rng, 3, 5), rand_matrix(&mut rng, 3, 2)];
        check(ins, |g, v| {
            let n = g.layer_norm(v[0]);
            let c = g.concat_cols(vec![n, v[1]]);
            let w = g.constant(Matrix::from_fn(7, 1, |r, _| r as f64 - 3.0));
            let y = g.matmul(c, w);
            g.mean_squares(y)
        });
    }

    #[test]
    fn attention_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ins = vec![rand_matrix(&mut rng, 5, 4), rand_matrix(&mut rng, 5, 4), rand_matrix(&mut rng, 5, 4)];
        check(ins, |g, v| {
            let pairs = vec![SegmentPair { queries: 0..2, keys: 0..2 }, SegmentPair { queries: 2..5, keys: 2..5 }];
            let a = g.attention(v[0], v[1], v[2], 2, pairs);
            let w = g.constant(Matrix::from_fn(5, 4, |r, c| (r * 4 + c) as f64 * 0.1 - 1.0));
            let y = g.mul(a, w);
            g.sum_squares(y)
        });
    }

    #[test]
    fn attention_does_not_leak_across_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (q, k, mut v) = (rand_matrix(&mut rng, 4, 2), rand_matrix(&mut rng, 4, 2), rand_matrix(&mut rng, 4, 2));
        let run = |v: &Matrix<f64>| {
            let mut g = Graph::new();
            let (a, b, c) = (g.constant(q.clone()), g.constant(k.clone()), g.constant(v.clone()));
            let pairs = vec![SegmentPair { queries: 0..2, keys: 0..2 }, SegmentPair { queries: 2..4, keys: 2..4 }];
            let o = g.attention(a, b, c, 1, pairs);
            g.value(o).clone()
        };
        let before = run(&v);
        v.set(3, 0, 10.0);
        let after = run(&v);
        assert_eq!(before.slice_rows(0..2), after.slice_rows(0..2));
        assert_ne!(before.slice_rows(2..4), after.slice_rows(2..4));
    }

    #[test]
    fn pooling_normalization_and_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ins = vec![rand_matrix(&mut rng, 6, 3), rand_matrix(&mut rng, 3, 3)];
        check(ins, |g, v| {
            let d = g.frame_diff(v[0], vec![0..3, 3..6]);
            let d2 = g.sum_squares(d);
            let m = g.segment_mean(v[0], vec![0..2, 2..6]);
            let n = g.normalize_rows(m);
            let t = g.transpose(v[1]);
            let logits = g.matmul(n, t);
            let targets = Matrix::from_vec(2, 3, vec![1.0, 0.0, 0.0, 0.0, 0.5, 0.5]).unwrap();
            let ce = g.soft_cross_entropy(logits, targets);
            g.add(ce, d2)
        });
    }

    #[test]
    fn kinematics_op() {
        let skel: Skeleton<f64> = Skeleton::canonical();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ins = vec![rand_matrix(&mut rng, 2, POSE_DIM)];
        check(ins, |g, v| {
            let p = g.forward_kinematics(v[0], &skel).unwrap();
            let w = g.constant(Matrix::from_fn(2, 72, |r, c| ((r + c) % 7) as f64 * 0.1));
            let y = g.mul(p, w);
            g.sum_squares(y)
        });
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::<f64>::new();
        let c = g.constant(Matrix::scalar(2.0));
        let x = g.variable(Matrix::scalar(3.0));
        let y = g.mul(c, x);
        let grads = g.backward(y).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(x).unwrap().item(), 2.0);
    }
}
