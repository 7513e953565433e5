//! Matrix-valued reverse-mode differentiation.
//!
//! A [`Tape`] records every operation of one forward pass together with its
//! output. [`Tape::backward`] walks the records in reverse, accumulating
//! the gradient of a scalar output with respect to every recorded value.
//! Scalars are `1 × 1` matrices.

use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::smoothing::EdgeHistory;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Relu(Var),
    /// Adds a `1 × d` row to every row.
    AddRow(Var, Var),
    /// Elementwise product with a constant (dropout masks).
    Mask(Var, Array2<f64>),
    Sigmoid(Var),
    /// `K × K` rates to the symmetrised `n × n` pair weights.
    ExpandPairWeights {
        decay: Var,
        labels: Arc<Vec<usize>>,
    },
    /// `(1 − W) ⊙ prev + W ⊙ snapshot`; `W` is `1 × 1` or full size.
    SmoothStep {
        prev: Var,
        snapshot: Var,
        weight: Var,
    },
    /// Closed-form `Â_T` from an edge history under per-pair weights.
    SmoothHistory {
        decay: Var,
        labels: Arc<Vec<usize>>,
        history: Arc<EdgeHistory>,
        derivs: Vec<f64>,
    },
    /// `D^{-1/2} (A + I) D^{-1/2}`.
    NormalizeAdjacency {
        input: Var,
        inv_sqrt_deg: Array1<f64>,
    },
    /// Mean negative log-likelihood of `labels` over `mask` rows.
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Arc<Vec<usize>>,
        mask: Arc<Vec<usize>>,
        probs: Array2<f64>,
    },
}

struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf | Op::Constant => vec![],
            Op::MatMul(a, b) => vec![*a, *b],
            Op::AddRow(a, b) => vec![*a, *b],
            Op::Relu(a) | Op::Mask(a, _) | Op::Sigmoid(a) => vec![*a],
            Op::ExpandPairWeights { decay, .. } | Op::SmoothHistory { decay, .. } => vec![*decay],
            Op::SmoothStep { prev, snapshot, weight } => vec![*prev, *snapshot, *weight],
            Op::NormalizeAdjacency { input, .. } => vec![*input],
            Op::SoftmaxCrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every value on a tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }

    /// The gradient, or zeros when the output does not depend on `v`.
    pub fn get_or_zero(&self, v: Var) -> Array2<f64> {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Array2::zeros(self.shapes[v.0]))
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|x| (x - m).exp());
        let z = row.sum();
        row.mapv_inplace(|x| x / z);
    }
    out
}

fn shape_of(a: &Array2<f64>) -> (usize, usize) {
    a.dim()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        let needs_grad = match op {
            Op::Leaf => true,
            _ => op.inputs().iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
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

    /// A value whose gradient is wanted.
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// An input that receives no gradient.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.ncols() != y.nrows() {
            return Err(Error::shape("matmul", x.ncols(), y.nrows()));
        }
        let out = x.dot(y);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(row));
        if r.nrows() != 1 || r.ncols() != x.ncols() {
            return Err(Error::shape("add_row", (1, x.ncols()), r.dim()));
        }
        let out = x + r;
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn mask(&mut self, a: Var, mask: Array2<f64>) -> Result<Var> {
        if self.value(a).dim() != mask.dim() {
            return Err(Error::shape("mask", self.value(a).dim(), mask.dim()));
        }
        let out = self.value(a) * &mask;
        Ok(self.push(out, Op::Mask(a, mask)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn expand_pair_weights(&mut self, decay: Var, labels: Arc<Vec<usize>>) -> Result<Var> {
        let lam = self.value(decay);
        let k = lam.nrows();
        if lam.ncols() != k || labels.iter().any(|&c| c >= k) {
            return Err(Error::shape("expand_pair_weights", k, lam.dim()));
        }
        let n = labels.len();
        let out = Array2::from_shape_fn((n, n), |(i, j)| {
            0.5 * (lam[[labels[i], labels[j]]] + lam[[labels[j], labels[i]]])
        });
        Ok(self.push(out, Op::ExpandPairWeights { decay, labels }))
    }

    pub fn smooth_step(&mut self, prev: Var, snapshot: Var, weight: Var) -> Result<Var> {
        let (p, s, w) = (self.value(prev), self.value(snapshot), self.value(weight));
        if p.dim() != s.dim() || (w.dim() != (1, 1) && w.dim() != p.dim()) {
            return Err(Error::shape("smooth_step", p.dim(), (s.dim(), w.dim())));
        }
        let out = if w.dim() == (1, 1) {
            let l = w[[0, 0]];
            p * (1.0 - l) + s * l
        } else {
            let mut o = p.clone();
            ndarray::Zip::from(&mut o)
                .and(s)
                .and(w)
                .for_each(|o, &s, &w| *o = (1.0 - w) * *o + w * s);
            o
        };
        Ok(self.push(out, Op::SmoothStep { prev, snapshot, weight }))
    }

    pub fn smooth_history(&mut self, decay: Var, labels: Arc<Vec<usize>>, history: Arc<EdgeHistory>) -> Result<Var> {
        let lam = self.value(decay);
        let k = lam.nrows();
        if lam.ncols() != k || labels.len() != history.n() || labels.iter().any(|&c| c >= k) {
            return Err(Error::shape(
                "smooth_history",
                (history.n(), k),
                (labels.len(), lam.dim()),
            ));
        }
        let n = history.n();
        let mut out = Array2::zeros((n, n));
        let mut derivs = Vec::with_capacity(history.pairs().len());
        for (idx, &(u, v)) in history.pairs().iter().enumerate() {
            let (a, b) = (labels[u], labels[v]);
            let w = 0.5 * (lam[[a, b]] + lam[[b, a]]);
            let (x, d) = history.pair_value(idx, w);
            out[[u, v]] = x;
            out[[v, u]] = x;
            derivs.push(d);
        }
        Ok(self.push(
            out,
            Op::SmoothHistory {
                decay,
                labels,
                history,
                derivs,
            },
        ))
    }

    pub fn normalize_adjacency(&mut self, input: Var) -> Result<Var> {
        let a = self.value(input);
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::shape("normalize_adjacency", (n, n), a.dim()));
        }
        let deg = a.sum_axis(Axis(1)) + 1.0;
        if deg.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::Domain("nonpositive degree in normalize_adjacency".into()));
        }
        let s = deg.mapv(|d| 1.0 / d.sqrt());
        let mut out = a.clone();
        for i in 0..n {
            out[[i, i]] += 1.0;
        }
        for ((i, j), x) in out.indexed_iter_mut() {
            *x *= s[i] * s[j];
        }
        Ok(self.push(out, Op::NormalizeAdjacency { input, inv_sqrt_deg: s }))
    }

    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        labels: Arc<Vec<usize>>,
        mask: Arc<Vec<usize>>,
    ) -> Result<Var> {
        if mask.is_empty() {
            return Err(Error::EmptyMask);
        }
        let z = self.value(logits);
        if labels.len() != z.nrows() {
            return Err(Error::shape("softmax_cross_entropy", z.nrows(), labels.len()));
        }
        let mut loss = 0.0;
        for &i in mask.iter() {
            let row = z.row(i);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            loss += lse - row[labels[i]];
        }
        loss /= mask.len() as f64;
        let probs = softmax_rows(z);
        Ok(self.push(
            Array2::from_elem((1, 1), loss),
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                mask,
                probs,
            },
        ))
    }

    /// Gradients of the `1 × 1` value `output`. Consumes the tape.
    pub fn backward(self, output: Var) -> Result<Gradients> {
        if self.value(output).dim() != (1, 1) {
            return Err(Error::shape("backward", (1, 1), self.value(output).dim()));
        }
        let shapes: Vec<_> = self.nodes.iter().map(|n| shape_of(&n.value)).collect();
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Array2::ones((1, 1)));

        let needs: Vec<bool> = self.nodes.iter().map(|n| n.needs_grad).collect();
        let wants = |v: &Var| needs[v.0];
        fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Leaf | Op::Constant => {}
                Op::MatMul(a, b) => {
                    if wants(a) {
                        acc(&mut grads, *a, g.dot(&self.value(*b).t()));
                    }
                    if wants(b) {
                        acc(&mut grads, *b, self.value(*a).t().dot(&g));
                    }
                }
                Op::AddRow(a, b) => {
                    if wants(b) {
                        acc(&mut grads, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if wants(a) {
                        acc(&mut grads, *a, g.clone());
                    }
                }
                Op::Relu(a) => {
                    let mut ga = g.clone();
                    ndarray::Zip::from(&mut ga).and(self.value(*a)).for_each(|g, &x| {
                        if x <= 0.0 {
                            *g = 0.0
                        }
                    });
                    acc(&mut grads, *a, ga);
                }
                Op::Mask(a, m) => acc(&mut grads, *a, &g * m),
                Op::Sigmoid(a) => {
                    let ga = &g * &node.value.mapv(|s| s * (1.0 - s));
                    acc(&mut grads, *a, ga);
                }
                Op::ExpandPairWeights { decay, labels } => {
                    let k = self.value(*decay).nrows();
                    let mut gl = Array2::zeros((k, k));
                    for ((i, j), &x) in g.indexed_iter() {
                        let (a, b) = (labels[i], labels[j]);
                        gl[[a, b]] += 0.5 * x;
                        gl[[b, a]] += 0.5 * x;
                    }
                    acc(&mut grads, *decay, gl);
                }
                Op::SmoothStep { prev, snapshot, weight } => {
                    let (p, s, w) = (self.value(*prev), self.value(*snapshot), self.value(*weight));
                    if w.dim() == (1, 1) {
                        let l = w[[0, 0]];
                        if wants(prev) {
                            acc(&mut grads, *prev, &g * (1.0 - l));
                        }
                        if wants(snapshot) {
                            acc(&mut grads, *snapshot, &g * l);
                        }
                        if wants(weight) {
                            let gw = (&g * &(s - p)).sum();
                            acc(&mut grads, *weight, Array2::from_elem((1, 1), gw));
                        }
                    } else {
                        if wants(prev) {
                            acc(&mut grads, *prev, &g * &w.mapv(|x| 1.0 - x));
                        }
                        if wants(snapshot) {
                            acc(&mut grads, *snapshot, &g * w);
                        }
                        if wants(weight) {
                            acc(&mut grads, *weight, &g * &(s - p));
                        }
                    }
                }
                Op::SmoothHistory {
                    decay,
                    labels,
                    history,
                    derivs,
                } => {
                    let k = self.value(*decay).nrows();
                    let mut gl = Array2::zeros((k, k));
                    for (idx, &(u, v)) in history.pairs().iter().enumerate() {
                        let gw = (g[[u, v]] + g[[v, u]]) * derivs[idx];
                        let (a, b) = (labels[u], labels[v]);
                        gl[[a, b]] += 0.5 * gw;
                        gl[[b, a]] += 0.5 * gw;
                    }
                    acc(&mut grads, *decay, gl);
                }
                Op::NormalizeAdjacency { input, inv_sqrt_deg: s } => {
                    let a = self.value(*input);
                    let n = a.nrows();
                    // h = g ⊙ Ã, Ã = A + I
                    let mut h = &g * a;
                    for i in 0..n {
                        h[[i, i]] += g[[i, i]];
                    }
                    let row_part = h.dot(s);
                    let col_part = h.t().dot(s);
                    let gd: Vec<f64> = (0..n)
                        .map(|m| -0.5 * s[m].powi(3) * (row_part[m] + col_part[m]))
                        .collect();
                    let mut ga = g.clone();
                    for ((i, j), x) in ga.indexed_iter_mut() {
                        *x = *x * s[i] * s[j] + gd[i];
                    }
                    acc(&mut grads, *input, ga);
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    labels,
                    mask,
                    probs,
                } => {
                    let scale = g[[0, 0]] / mask.len() as f64;
                    let mut gz = Array2::zeros(probs.dim());
                    for &i in mask.iter() {
                        for c in 0..probs.ncols() {
                            let target = if labels[i] == c { 1.0 } else { 0.0 };
                            gz[[i, c]] += scale * (probs[[i, c]] - target);
                        }
                    }
                    acc(&mut grads, *logits, gz);
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads, shapes })
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
