//! Dynamic stochastic block model.
//!
//! Nodes start in clusters drawn i.i.d. from `p`, then migrate each step
//! according to a fixed row-stochastic transition matrix `H`. At every step
//! a fresh set of edges is drawn: a pair in the same cluster connects with
//! probability `alpha`, a pair in different clusters with `tau * alpha`.
//! A snapshot holds only the edges formed at that step.

use log::warn;
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::membership::MembershipMatrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub n: usize,
    pub k: usize,
    /// Initial cluster distribution.
    pub p: Vec<f64>,
    pub alpha: f64,
    pub tau: f64,
    /// Per-cluster change probability.
    pub epsilon: Vec<f64>,
    pub steps: usize,
    pub seed: u64,
}

impl SbmParams {
    /// The simulated configuration used throughout the experiments:
    /// 200 nodes, 2 balanced clusters, 50 steps, `alpha = 0.02`,
    /// `tau * alpha = 0.001`, change probabilities 0.05 and 0.1.
    pub fn reference(seed: u64) -> Self {
        Self {
            n: 200,
            k: 2,
            p: vec![0.5, 0.5],
            alpha: 0.02,
            tau: 0.05,
            epsilon: vec![0.05, 0.1],
            steps: 50,
            seed,
        }
    }

    /// Strict validation: all probabilities in their open intervals.
    pub fn validate(&self) -> Result<()> {
        self.check(true)
    }

    /// Accepts the closed intervals (`alpha = 0`, `epsilon = 0`, ...), warning
    /// when a boundary value is used.
    pub fn validate_relaxed(&self) -> Result<()> {
        self.check(false)?;
        if self.check(true).is_err() {
            warn!("degenerate SBM parameters accepted: {self:?}");
        }
        Ok(())
    }

    fn check(&self, strict: bool) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("n", "node count must be positive"));
        }
        if self.k < 2 && strict {
            return Err(Error::param("k", "need at least two clusters"));
        }
        if self.k == 0 {
            return Err(Error::param("k", "need at least one cluster"));
        }
        if self.steps == 0 {
            return Err(Error::param("steps", "need at least one time step"));
        }
        if self.p.len() != self.k {
            return Err(Error::param("p", format!("expected {} entries", self.k)));
        }
        if self.epsilon.len() != self.k {
            return Err(Error::param("epsilon", format!("expected {} entries", self.k)));
        }
        if self.p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::param("p", "entries must lie in [0, 1]"));
        }
        let total: f64 = self.p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::param("p", format!("sums to {total}, not 1")));
        }
        check_probability("alpha", self.alpha, strict)?;
        check_probability("tau", self.tau, strict)?;
        for &e in &self.epsilon {
            check_probability("epsilon", e, strict)?;
        }
        Ok(())
    }
}

fn check_probability(name: &'static str, x: f64, open: bool) -> Result<()> {
    let ok = if open {
        x > 0.0 && x < 1.0
    } else {
        (0.0..=1.0).contains(&x)
    };
    if ok {
        Ok(())
    } else if open {
        Err(Error::param(name, format!("{x} not in (0, 1)")))
    } else {
        Err(Error::param(name, format!("{x} not in [0, 1]")))
    }
}

/// `K × K` block connectivity: `alpha` on the diagonal, `tau * alpha` off it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityMatrix(Array2<f64>);

impl ConnectivityMatrix {
    /// Like [`build_connectivity`] but accepts the closed unit interval.
    pub fn degenerate(alpha: f64, tau: f64, k: usize) -> Result<Self> {
        check_probability("alpha", alpha, false)?;
        check_probability("tau", tau, false)?;
        Ok(Self::fill(alpha, tau, k))
    }

    fn fill(alpha: f64, tau: f64, k: usize) -> Self {
        Self(Array2::from_shape_fn(
            (k, k),
            |(i, j)| {
                if i == j {
                    alpha
                } else {
                    tau * alpha
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

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.0[[a, b]]
    }
}

pub fn build_connectivity(alpha: f64, tau: f64, k: usize) -> Result<ConnectivityMatrix> {
    check_probability("alpha", alpha, true)?;
    check_probability("tau", tau, true)?;
    if k < 2 {
        return Err(Error::param("k", "need at least two clusters"));
    }
    Ok(ConnectivityMatrix::fill(alpha, tau, k))
}

/// Row-stochastic membership transition matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix(Array2<f64>);

impl TransitionMatrix {
    /// Accepts `epsilon` in the closed interval; `epsilon = 0` gives the identity.
    pub fn degenerate(epsilon: &[f64]) -> Result<Self> {
        for &e in epsilon {
            check_probability("epsilon", e, false)?;
        }
        Self::fill(epsilon)
    }

    fn fill(epsilon: &[f64]) -> Result<Self> {
        let k = epsilon.len();
        if k == 0 {
            return Err(Error::param("epsilon", "empty"));
        }
        if k == 1 {
            return Ok(Self(Array2::ones((1, 1))));
        }
        let off = (k - 1) as f64;
        Ok(Self(Array2::from_shape_fn((k, k), |(j, c)| {
            if j == c {
                1.0 - epsilon[j]
            } else {
                epsilon[j] / off
            }
        })))
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.nrows()
    }

    /// Samples the next cluster of a node currently in `from`.
    fn sample_next<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        let row = self.0.row(from);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (c, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return c;
            }
        }
        // rounding left u above the last partial sum
        row.iter().rposition(|&p| p > 0.0).unwrap_or(from)
    }
}

pub fn build_transition_matrix(epsilon: &[f64], k: usize) -> Result<TransitionMatrix> {
    if epsilon.len() != k {
        return Err(Error::param("epsilon", format!("expected {k} entries")));
    }
    for &e in epsilon {
        check_probability("epsilon", e, true)?;
    }
    TransitionMatrix::fill(epsilon)
}

/// Draws a categorical index from `p`.
fn sample_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (c, &w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return c;
        }
    }
    p.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

pub fn sample_initial_memberships<R: Rng + ?Sized>(params: &SbmParams, rng: &mut R) -> Result<MembershipMatrix> {
    params.validate_relaxed()?;
    let labels = (0..params.n).map(|_| sample_categorical(&params.p, rng)).collect();
    MembershipMatrix::from_labels(labels, params.k)
}

pub fn evolve_memberships<R: Rng + ?Sized>(
    prev: &MembershipMatrix,
    h: &TransitionMatrix,
    rng: &mut R,
) -> Result<MembershipMatrix> {
    if prev.k() != h.k() {
        return Err(Error::shape("evolve_memberships", h.k(), prev.k()));
    }
    let labels = prev.labels().iter().map(|&c| h.sample_next(c, rng)).collect();
    MembershipMatrix::from_labels(labels, prev.k())
}

/// `P = Θ B Θᵀ`, computed by label lookup.
pub fn connection_probability(theta: &MembershipMatrix, b: &ConnectivityMatrix) -> Result<Array2<f64>> {
    if theta.k() != b.k() {
        return Err(Error::shape("connection_probability", b.k(), theta.k()));
    }
    let l = theta.labels();
    Ok(Array2::from_shape_fn((l.len(), l.len()), |(i, j)| b.get(l[i], l[j])))
}

/// Undirected simple graph formed at one time step, as a sorted edge list
/// with `u < v`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Snapshot {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Snapshot {
    /// Builds a snapshot from arbitrary pairs: orientation is normalised,
    /// duplicates collapse, self-loops are rejected.
    pub fn from_edges(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut edges = Vec::new();
        for (u, v) in pairs {
            if u >= n || v >= n {
                return Err(Error::param("edge", format!("({u}, {v}) outside 0..{n}")));
            }
            if u == v {
                return Err(Error::param("edge", format!("self-loop at {u}")));
            }
            edges.push((u.min(v), u.max(v)));
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self { n, edges })
    }

    pub fn empty(n: usize) -> Self {
        Self { n, edges: Vec::new() }
    }

    /// Validates a dense symmetric 0/1 matrix with zero diagonal.
    pub fn from_dense(a: &Array2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::shape("Snapshot::from_dense", (n, n), a.dim()));
        }
        let mut edges = Vec::new();
        for i in 0..n {
            if a[[i, i]] != 0.0 {
                return Err(Error::param("snapshot", format!("nonzero diagonal at {i}")));
            }
            for j in (i + 1)..n {
                let x = a[[i, j]];
                if x != a[[j, i]] {
                    return Err(Error::param("snapshot", format!("asymmetric at ({i}, {j})")));
                }
                if x == 1.0 {
                    edges.push((i, j));
                } else if x != 0.0 {
                    return Err(Error::param("snapshot", format!("non-binary at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, edges })
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.n, self.n));
        for &(u, v) in &self.edges {
            a[[u, v]] = 1.0;
            a[[v, u]] = 1.0;
        }
        a
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
}

/// Samples one snapshot: each pair `i < j` independently with probability
/// `B[c(i), c(j)]`.
pub fn sample_snapshot<R: Rng + ?Sized>(
    theta: &MembershipMatrix,
    b: &ConnectivityMatrix,
    rng: &mut R,
) -> Result<Snapshot> {
    if theta.k() != b.k() {
        return Err(Error::shape("sample_snapshot", b.k(), theta.k()));
    }
    let l = theta.labels();
    let n = l.len();
    let mut edges = Vec::new();
    for i in 0..n {
        let row = b.matrix().row(l[i]);
        for j in (i + 1)..n {
            let p = row[l[j]];
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Ok(Snapshot { n, edges })
}

/// A temporal graph: per-step new-edge snapshots plus, when known, the
/// ground-truth memberships at every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicGraph {
    pub n: usize,
    pub snapshots: Vec<Snapshot>,
    pub memberships: Option<Vec<MembershipMatrix>>,
    pub params: Option<SbmParams>,
    /// Static node features used as the GCN input; identity when absent.
    pub features: Option<Array2<f64>>,
}

impl DynamicGraph {
    pub fn new(n: usize, snapshots: Vec<Snapshot>) -> Result<Self> {
        if let Some(s) = snapshots.iter().find(|s| s.n() != n) {
            return Err(Error::shape("DynamicGraph::new", n, s.n()));
        }
        Ok(Self {
            n,
            snapshots,
            memberships: None,
            params: None,
            features: None,
        })
    }

    pub fn with_memberships(mut self, memberships: Vec<MembershipMatrix>) -> Result<Self> {
        if memberships.len() != self.snapshots.len() {
            return Err(Error::shape(
                "DynamicGraph::with_memberships",
                self.snapshots.len(),
                memberships.len(),
            ));
        }
        if let Some(m) = memberships.iter().find(|m| m.n() != self.n) {
            return Err(Error::shape("DynamicGraph::with_memberships", self.n, m.n()));
        }
        self.memberships = Some(memberships);
        Ok(self)
    }

    pub fn steps(&self) -> usize {
        self.snapshots.len()
    }

    /// Cluster count of the ground truth, if present.
    pub fn k(&self) -> Option<usize> {
        self.memberships
            .as_ref()
            .and_then(|m| m.first())
            .map(MembershipMatrix::k)
            .or(self.params.as_ref().map(|p| p.k))
    }

    pub fn membership(&self, t: usize) -> Option<&MembershipMatrix> {
        self.memberships.as_ref().and_then(|m| m.get(t))
    }

    /// The graph restricted to its first `t` steps.
    pub fn truncated(&self, t: usize) -> Self {
        let t = t.min(self.steps());
        Self {
            n: self.n,
            snapshots: self.snapshots[..t].to_vec(),
            memberships: self.memberships.as_ref().map(|m| m[..t].to_vec()),
            params: self.params.clone(),
            features: self.features.clone(),
        }
    }

    /// Binary union of the first `t` snapshots (`t = steps()` for all).
    pub fn cumulative_binary(&self, t: usize) -> Array2<f64> {
        let mut a = Array2::zeros((self.n, self.n));
        for s in &self.snapshots[..t] {
            for &(u, v) in s.edges() {
                a[[u, v]] = 1.0;
                a[[v, u]] = 1.0;
            }
        }
        a
    }

    /// Plain sum of the first `t` snapshots; pairs drawn repeatedly count
    /// once per step.
    pub fn cumulative_sum(&self, t: usize) -> Array2<f64> {
        let mut a = Array2::zeros((self.n, self.n));
        for s in &self.snapshots[..t] {
            for &(u, v) in s.edges() {
                a[[u, v]] += 1.0;
                a[[v, u]] += 1.0;
            }
        }
        a
    }

    /// Number of distinct pairs that ever formed an edge.
    pub fn unique_edge_count(&self) -> usize {
        let mut all: Vec<(usize, usize)> = self.snapshots.iter().flat_map(|s| s.edges().iter().copied()).collect();
        all.sort_unstable();
        all.dedup();
        all.len()
    }
}

/// Generates a full dynamic SBM instance.
///
/// Streams: memberships at step 1 come from stream 0; the membership
/// update into step `t` (for `t >= 2`) and the snapshot at step `t` come
/// from stream `t`, so a given step is reproducible on its own.
pub fn generate_sequence(params: &SbmParams) -> Result<DynamicGraph> {
    params.validate_relaxed()?;
    let b = ConnectivityMatrix::degenerate(params.alpha, params.tau, params.k)?;
    let h = TransitionMatrix::degenerate(&params.epsilon)?;

    let mut init_rng = rng::stream(params.seed, 0);
    let mut theta = sample_initial_memberships(params, &mut init_rng)?;
    let mut snapshots = Vec::with_capacity(params.steps);
    let mut memberships = Vec::with_capacity(params.steps);
    for t in 1..=params.steps {
        let mut step_rng = rng::stream(params.seed, t as u64);
        if t > 1 {
            theta = evolve_memberships(&theta, &h, &mut step_rng)?;
        }
        snapshots.push(sample_snapshot(&theta, &b, &mut step_rng)?);
        memberships.push(theta.clone());
    }
    let mut graph = DynamicGraph::new(params.n, snapshots)?.with_memberships(memberships)?;
    graph.params = Some(params.clone());
    Ok(graph)
}
