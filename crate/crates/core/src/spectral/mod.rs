//! Spectral clustering of (smoothed) adjacency matrices.
//!
//! Nodes are embedded with the `K` leading singular vectors of the input and
//! grouped by k-means. [`decayed_spectral_cluster`] runs this at every step
//! of a dynamic graph, on a static, scalar-decayed or matrix-decayed
//! adjacency.

pub mod eigen;
pub mod kmeans;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub use eigen::{jacobi_eigen, top_eigenpairs, SubspaceOptions, SymmetricEigen};
pub use kmeans::{kmeans, kmeans_with, KmeansOptions, KmeansResult};

use crate::dsbm::DynamicGraph;
use crate::error::{Error, Result};
use crate::membership::MembershipMatrix;
use crate::metrics::match_labels;
use crate::smoothing::{smooth_matrix, smooth_scalar, DecayMatrix, SmoothedAdjacency};

/// Leading left singular vectors `E_K` of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// `n × K`, orthonormal columns.
    pub e_k: Array2<f64>,
    /// Singular values, nonincreasing.
    pub singular_values: Vec<f64>,
    /// Signed eigenvalues matching the columns.
    pub eigenvalues: Vec<f64>,
}

pub fn leading_singular_vectors(m: ArrayView2<'_, f64>, k: usize) -> Result<Embedding> {
    leading_singular_vectors_with(m, k, &SubspaceOptions::default(), None)
}

pub fn leading_singular_vectors_with(
    m: ArrayView2<'_, f64>,
    k: usize,
    opts: &SubspaceOptions,
    warm: Option<ArrayView2<'_, f64>>,
) -> Result<Embedding> {
    let eig = top_eigenpairs(m, k, opts, warm)?;
    Ok(Embedding {
        e_k: eig.vectors,
        singular_values: eig.values.iter().map(|v| v.abs()).collect(),
        eigenvalues: eig.values,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectralOptions {
    pub subspace: SubspaceOptions,
    pub kmeans: KmeansOptions,
}

/// Full output of one spectral clustering call.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFit {
    pub embedding: Embedding,
    pub kmeans: KmeansResult,
    /// `n × K` soft assignment scores (softmin of scaled squared distances
    /// to the centroids), for ranking metrics.
    pub scores: Array2<f64>,
}

pub fn spectral_cluster(m: ArrayView2<'_, f64>, k: usize, seed: u64) -> Result<MembershipMatrix> {
    Ok(spectral_fit(m, k, seed, &SpectralOptions::default(), None)?
        .kmeans
        .theta_hat)
}

pub fn spectral_fit(
    m: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
    opts: &SpectralOptions,
    warm: Option<ArrayView2<'_, f64>>,
) -> Result<SpectralFit> {
    let embedding = leading_singular_vectors_with(m, k, &opts.subspace, warm)?;
    let km = kmeans_with(embedding.e_k.view(), k, seed, &opts.kmeans)?;
    let scores = softmin_scores(embedding.e_k.view(), &km.centroids);
    Ok(SpectralFit {
        embedding,
        kmeans: km,
        scores,
    })
}

fn softmin_scores(points: ArrayView2<'_, f64>, centroids: &Array2<f64>) -> Array2<f64> {
    let n = points.nrows();
    let k = centroids.nrows();
    let mut d = Array2::<f64>::zeros((n, k));
    for i in 0..n {
        for c in 0..k {
            d[[i, c]] = points
                .row(i)
                .iter()
                .zip(centroids.row(c).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
        }
    }
    let mean = d.mean().unwrap_or(0.0);
    let scale = if mean > 0.0 { 1.0 / mean } else { 0.0 };
    for mut row in d.rows_mut() {
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        row.mapv_inplace(|x| (-(x - lo) * scale).exp());
        let z = row.sum();
        row.mapv_inplace(|x| x / z);
    }
    d
}

/// How the cumulative adjacency of the static baseline is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Accumulation {
    /// Binary union of all snapshots so far.
    Binary,
    /// Raw sum; repeated pairs count once per step.
    Sum,
}

/// Labels used to look up per-pair decay rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// Ground-truth memberships at the current step.
    Oracle,
    /// The previous step's estimate.
    PlugIn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decay {
    /// No decay: cluster the cumulative adjacency.
    None(Accumulation),
    Scalar(f64),
    Matrix {
        decay: DecayMatrix,
        mode: WeightMode,
    },
}

/// Per-step output of the decayed pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayedClustering {
    pub estimates: Vec<MembershipMatrix>,
    pub scores: Vec<Array2<f64>>,
    /// The smoothed matrix at the last step.
    pub last_adjacency: Array2<f64>,
}

/// Clusters every step of `graph` on its decayed adjacency.
///
/// In plug-in mode the estimate at each step is relabelled to agree with
/// the previous one, so `Λ` rows keep referring to the same clusters over
/// time.
pub fn decayed_spectral_cluster(
    graph: &DynamicGraph,
    decay: &Decay,
    k: usize,
    seed: u64,
    opts: &SpectralOptions,
) -> Result<DecayedClustering> {
    let steps = graph.steps();
    if steps == 0 {
        return Err(Error::param("graph", "no snapshots"));
    }
    match decay {
        Decay::Scalar(l) if !(0.0..=1.0).contains(l) => {
            return Err(Error::param("lambda", format!("{l} not in [0, 1]")));
        }
        Decay::Matrix { decay, mode } => {
            if decay.k() != k {
                return Err(Error::shape("decayed_spectral_cluster decay", k, decay.k()));
            }
            if *mode == WeightMode::Oracle && graph.memberships.is_none() {
                return Err(Error::param("mode", "oracle weighting needs ground-truth memberships"));
            }
        }
        _ => {}
    }

    let mut estimates: Vec<MembershipMatrix> = Vec::with_capacity(steps);
    let mut scores = Vec::with_capacity(steps);
    let mut warm: Option<Array2<f64>> = None;
    let mut smoothed = SmoothedAdjacency::initial(&graph.snapshots[0]);
    let mut cumulative = graph.snapshots[0].to_dense();

    for t in 0..steps {
        if t > 0 {
            let snap = &graph.snapshots[t];
            match decay {
                Decay::None(acc) => {
                    for &(u, v) in snap.edges() {
                        match acc {
                            Accumulation::Binary => {
                                cumulative[[u, v]] = 1.0;
                                cumulative[[v, u]] = 1.0;
                            }
                            Accumulation::Sum => {
                                cumulative[[u, v]] += 1.0;
                                cumulative[[v, u]] += 1.0;
                            }
                        }
                    }
                }
                Decay::Scalar(l) => smoothed = smooth_scalar(&smoothed, snap, *l)?,
                Decay::Matrix { decay, mode } => {
                    let theta = match mode {
                        WeightMode::Oracle => graph.membership(t).expect("checked above"),
                        WeightMode::PlugIn => &estimates[t - 1],
                    };
                    smoothed = smooth_matrix(&smoothed, snap, theta, decay)?;
                }
            }
        }
        let input = match decay {
            Decay::None(_) => cumulative.view(),
            _ => smoothed.matrix.view(),
        };
        let fit = spectral_fit(input, k, seed, opts, warm.as_ref().map(|w| w.view()))?;
        warm = Some(fit.embedding.e_k.clone());
        let (mut est, mut sc) = (fit.kmeans.theta_hat, fit.scores);
        if matches!(
            decay,
            Decay::Matrix {
                mode: WeightMode::PlugIn,
                ..
            }
        ) && t > 0
        {
            let perm = match_labels(&est, &estimates[t - 1])?;
            est = est.permuted(&perm);
            sc = permute_columns(&sc, &perm);
        }
        estimates.push(est);
        scores.push(sc);
    }
    let last_adjacency = match decay {
        Decay::None(_) => cumulative,
        _ => smoothed.matrix,
    };
    Ok(DecayedClustering {
        estimates,
        scores,
        last_adjacency,
    })
}

/// Moves score column `c` to column `perm[c]`.
pub fn permute_columns(scores: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros(scores.dim());
    for (c, &p) in perm.iter().enumerate() {
        out.column_mut(p).assign(&scores.column(c));
    }
    out
}
