//! Exponentially weighted adjacency smoothing.
//!
//! With a scalar decay rate `λ` the smoothed adjacency follows
//! `Â_t = (1 − λ) Â_{t−1} + λ A_t` from the base case `Â_1 = A_1`. The
//! matrix form replaces `λ` with a per-pair weight `Λ[c(i), c(j)]` looked
//! up from the current cluster labels. The same base case applies to both.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dsbm::Snapshot;
use crate::error::{Error, Result};
use crate::membership::MembershipMatrix;

/// Smoothed adjacency `Â_t` at 1-based step `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedAdjacency {
    pub matrix: Array2<f64>,
    pub step: usize,
}

impl SmoothedAdjacency {
    /// `Â_1 = A_1`.
    pub fn initial(snapshot: &Snapshot) -> Self {
        Self {
            matrix: snapshot.to_dense(),
            step: 1,
        }
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `K × K` decay rates, one per ordered cluster pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayMatrix(Array2<f64>);

impl DecayMatrix {
    pub fn new(lambda: Array2<f64>) -> Result<Self> {
        if lambda.nrows() != lambda.ncols() || lambda.is_empty() {
            return Err(Error::shape("DecayMatrix", "square K x K", lambda.dim()));
        }
        if lambda.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::param("decay", "entries must lie in [0, 1]"));
        }
        Ok(Self(lambda))
    }

    pub fn uniform(k: usize, lambda: f64) -> Result<Self> {
        Self::new(Array2::from_elem((k, k), lambda))
    }

    /// Given diagonal, off-diagonal entries set to 1.
    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let k = diag.len();
        Self::new(Array2::from_shape_fn(
            (k, k),
            |(i, j)| {
                if i == j {
                    diag[i]
                } else {
                    1.0
                }
            },
        ))
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.nrows()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.0.diag().to_vec()
    }

    /// Largest diagonal entry.
    pub fn max_diagonal(&self) -> f64 {
        self.0.diag().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Symmetrised pair weight `(Λ[a, b] + Λ[b, a]) / 2`.
    pub fn pair_weight(&self, a: usize, b: usize) -> f64 {
        0.5 * (self.0[[a, b]] + self.0[[b, a]])
    }

    /// Dense `n × n` weight matrix `sym(Θ Λ Θᵀ)`.
    pub fn expand(&self, theta: &MembershipMatrix) -> Array2<f64> {
        let l = theta.labels();
        Array2::from_shape_fn((l.len(), l.len()), |(i, j)| self.pair_weight(l[i], l[j]))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::param("lambda", format!("{lambda} not in [0, 1]")))
    }
}

/// One step of scalar smoothing.
pub fn smooth_scalar(prev: &SmoothedAdjacency, snapshot: &Snapshot, lambda: f64) -> Result<SmoothedAdjacency> {
    check_lambda(lambda)?;
    if snapshot.n() != prev.n() {
        return Err(Error::shape("smooth_scalar", prev.n(), snapshot.n()));
    }
    let mut matrix = &prev.matrix * (1.0 - lambda);
    for &(u, v) in snapshot.edges() {
        matrix[[u, v]] += lambda;
        matrix[[v, u]] += lambda;
    }
    Ok(SmoothedAdjacency {
        matrix,
        step: prev.step + 1,
    })
}

/// One step of per-cluster-pair smoothing with weights looked up from
/// `theta`. Asymmetric `Λ` is symmetrised so the output stays symmetric.
pub fn smooth_matrix(
    prev: &SmoothedAdjacency,
    snapshot: &Snapshot,
    theta: &MembershipMatrix,
    decay: &DecayMatrix,
) -> Result<SmoothedAdjacency> {
    let n = prev.n();
    if snapshot.n() != n || theta.n() != n {
        return Err(Error::shape("smooth_matrix", n, (snapshot.n(), theta.n())));
    }
    if theta.k() != decay.k() {
        return Err(Error::shape("smooth_matrix decay", theta.k(), decay.k()));
    }
    let l = theta.labels();
    let k = decay.k();
    let mut w = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..k {
            w[a * k + b] = decay.pair_weight(a, b);
        }
    }
    let mut matrix = prev.matrix.clone();
    for ((i, j), x) in matrix.indexed_iter_mut() {
        *x *= 1.0 - w[l[i] * k + l[j]];
    }
    for &(u, v) in snapshot.edges() {
        let wt = w[l[u] * k + l[v]];
        matrix[[u, v]] += wt;
        matrix[[v, u]] += wt;
    }
    Ok(SmoothedAdjacency {
        matrix,
        step: prev.step + 1,
    })
}

/// Runs scalar smoothing over all snapshots and returns `Â_T`.
pub fn smooth_sequence_scalar(snapshots: &[Snapshot], lambda: f64) -> Result<SmoothedAdjacency> {
    let (first, rest) = snapshots
        .split_first()
        .ok_or_else(|| Error::param("snapshots", "empty sequence"))?;
    rest.iter().try_fold(SmoothedAdjacency::initial(first), |acc, s| {
        smooth_scalar(&acc, s, lambda)
    })
}

/// Geometric weights that express `Â` as a convex combination of past
/// snapshots after `steps` recursion updates:
/// `β_s = λ(1−λ)^s` for `s < steps` and `β_steps = (1−λ)^steps`, where
/// `β_s` multiplies the snapshot `s` steps before the newest one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSequence {
    pub betas: Vec<f64>,
}

impl WeightSequence {
    pub fn total(&self) -> f64 {
        self.betas.iter().sum()
    }
}

pub fn effective_weights(lambda: f64, steps: usize) -> Result<WeightSequence> {
    check_lambda(lambda)?;
    let mut betas = Vec::with_capacity(steps + 1);
    for s in 0..steps {
        betas.push(lambda * (1.0 - lambda).powi(s as i32));
    }
    betas.push((1.0 - lambda).powi(steps as i32));
    Ok(WeightSequence { betas })
}

/// `min(1, √(n α ε))`.
pub fn optimal_decay_rate(n: usize, alpha: f64, epsilon: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::param("n", "must be positive"));
    }
    if !(alpha > 0.0) {
        return Err(Error::param("alpha", "must be positive"));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::param("epsilon", "must be nonnegative"));
    }
    Ok((n as f64 * alpha * epsilon).sqrt().min(1.0))
}

/// Per-cluster optimal decay on the diagonal, full forgetting (1) between
/// clusters.
pub fn optimal_decay_matrix(n: usize, alpha: f64, epsilon: &[f64]) -> Result<DecayMatrix> {
    if epsilon.is_empty() {
        return Err(Error::param("epsilon", "empty"));
    }
    let diag = epsilon
        .iter()
        .map(|&e| optimal_decay_rate(n, alpha, e))
        .collect::<Result<Vec<_>>>()?;
    DecayMatrix::from_diagonal(&diag)
}

/// The two terms bounding a cluster block's concentration for maximum
/// weight `β`: the variance term `√(nαβ)` and the staleness term
/// `α √(n² ε / β)`.
pub fn concentration_terms(beta: f64, n: usize, alpha: f64, epsilon: f64) -> Result<(f64, f64)> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Domain(format!("beta = {beta} outside (0, 1]")));
    }
    if n == 0 || !(alpha > 0.0) || !(epsilon > 0.0) {
        return Err(Error::param(
            "concentration_terms",
            "n, alpha, epsilon must be positive",
        ));
    }
    let n = n as f64;
    Ok(((n * alpha * beta).sqrt(), alpha * (n * n * epsilon / beta).sqrt()))
}

/// Every pair that formed an edge at least once, with the steps at which
/// it did. Evaluates the smoothed entries of `Â_T` in closed form, so a
/// run touches only observed pairs instead of every `n²` entry per step.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeHistory {
    n: usize,
    steps: usize,
    pairs: Vec<(usize, usize)>,
    /// 1-based steps, ascending, one list per pair.
    times: Vec<Vec<usize>>,
}

impl EdgeHistory {
    pub fn from_snapshots(n: usize, snapshots: &[Snapshot]) -> Self {
        let mut events: Vec<((usize, usize), usize)> = snapshots
            .iter()
            .enumerate()
            .flat_map(|(t, s)| s.edges().iter().map(move |&e| (e, t + 1)))
            .collect();
        events.sort_unstable();
        let mut pairs = Vec::new();
        let mut times: Vec<Vec<usize>> = Vec::new();
        for (pair, t) in events {
            if pairs.last() == Some(&pair) {
                times.last_mut().expect("paired with pairs").push(t);
            } else {
                pairs.push(pair);
                times.push(vec![t]);
            }
        }
        Self {
            n,
            steps: snapshots.len(),
            pairs,
            times,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Final smoothed value of pair `idx` under a constant weight `w`, and
    /// its derivative with respect to `w`.
    pub fn pair_value(&self, idx: usize, w: f64) -> (f64, f64) {
        let big_t = self.steps as i32;
        let keep = 1.0 - w;
        let mut value = 0.0;
        let mut deriv = 0.0;
        for &t in &self.times[idx] {
            let age = big_t - t as i32;
            if t == 1 {
                value += keep.powi(big_t - 1);
                if big_t > 1 {
                    deriv -= f64::from(big_t - 1) * keep.powi(big_t - 2);
                }
            } else {
                let decay = keep.powi(age);
                value += w * decay;
                deriv += decay;
                if age > 0 {
                    deriv -= w * f64::from(age) * keep.powi(age - 1);
                }
            }
        }
        (value, deriv)
    }

    /// Dense `Â_T` for per-pair weights given by `weight(u, v)`.
    pub fn smoothed(&self, mut weight: impl FnMut(usize, usize) -> f64) -> Array2<f64> {
        let mut a = Array2::zeros((self.n, self.n));
        for (idx, &(u, v)) in self.pairs.iter().enumerate() {
            let (x, _) = self.pair_value(idx, weight(u, v));
            a[[u, v]] = x;
            a[[v, u]] = x;
        }
        a
    }
}
