use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::membership::MembershipMatrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KmeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KmeansOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    pub theta_hat: MembershipMatrix,
    /// `K × d` cluster centres.
    pub centroids: Array2<f64>,
    /// `‖Θ̂ C − X‖_F²`.
    pub cost: f64,
    /// An empty cluster had to be refilled in the winning run.
    pub repaired: bool,
    pub iterations: usize,
    /// Cost after each Lloyd iteration of the winning run.
    pub cost_trace: Vec<f64>,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm from k-means++ seeds, best of `restarts` runs.
///
/// Restart `r` draws from stream `r` of `seed`. Nearest-centre ties go to
/// the lowest cluster index; an emptied cluster takes over the point
/// farthest from its own centre.
pub fn kmeans(points: ArrayView2<'_, f64>, k: usize, seed: u64, restarts: usize) -> Result<KmeansResult> {
    kmeans_with(
        points,
        k,
        seed,
        &KmeansOptions {
            restarts,
            ..KmeansOptions::default()
        },
    )
}

pub fn kmeans_with(points: ArrayView2<'_, f64>, k: usize, seed: u64, opts: &KmeansOptions) -> Result<KmeansResult> {
    let n = points.nrows();
    if k == 0 || n < k {
        return Err(Error::param("k", format!("need 1 <= k <= n = {n}, got {k}")));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("kmeans input"));
    }
    let mut best: Option<KmeansResult> = None;
    for r in 0..opts.restarts.max(1) {
        let mut g = rng::stream(seed, r as u64);
        let init = plus_plus(points, k, &mut g);
        let run = lloyd(points, init, opts.max_iter)?;
        if best.as_ref().is_none_or(|b| run.cost < b.cost) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn plus_plus(points: ArrayView2<'_, f64>, k: usize, g: &mut impl Rng) -> Array2<f64> {
    let (n, d) = points.dim();
    let mut centres = Array2::zeros((k, d));
    let first = g.gen_range(0..n);
    centres.row_mut(0).assign(&points.row(first));
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), centres.row(0))).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let u = g.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                acc += w;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            g.gen_range(0..n)
        };
        centres.row_mut(c).assign(&points.row(pick));
        for (i, dd) in dist.iter_mut().enumerate() {
            *dd = dd.min(sq_dist(points.row(i), centres.row(c)));
        }
    }
    centres
}

fn assign(points: ArrayView2<'_, f64>, centres: &Array2<f64>, labels: &mut [usize]) -> bool {
    let mut changed = false;
    for (i, label) in labels.iter_mut().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..centres.nrows() {
            let d = sq_dist(points.row(i), centres.row(c));
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        if *label != best {
            *label = best;
            changed = true;
        }
    }
    changed
}

fn update(points: ArrayView2<'_, f64>, labels: &[usize], centres: &mut Array2<f64>) -> Vec<usize> {
    let k = centres.nrows();
    let mut counts = vec![0usize; k];
    let mut sums = Array2::<f64>::zeros(centres.dim());
    for (i, &c) in labels.iter().enumerate() {
        counts[c] += 1;
        let mut row = sums.row_mut(c);
        row += &points.row(i);
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            let m = &sums.row(c) / count as f64;
            centres.row_mut(c).assign(&m);
        }
    }
    counts
}

fn cost_of(points: ArrayView2<'_, f64>, labels: &[usize], centres: &Array2<f64>) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(points.row(i), centres.row(c)))
        .sum()
}

/// Refills empty clusters; returns whether any repair happened.
fn repair(points: ArrayView2<'_, f64>, labels: &mut [usize], centres: &mut Array2<f64>) -> bool {
    let mut repaired = false;
    loop {
        let counts = update(points, labels, centres);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return repaired;
        };
        let mut far = None;
        let mut far_d = f64::NEG_INFINITY;
        for (i, &c) in labels.iter().enumerate() {
            if counts[c] < 2 {
                continue;
            }
            let d = sq_dist(points.row(i), centres.row(c));
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let i = far.expect("n >= k leaves a cluster with two or more points");
        labels[i] = empty;
        centres.row_mut(empty).assign(&points.row(i));
        repaired = true;
    }
}

fn lloyd(points: ArrayView2<'_, f64>, mut centres: Array2<f64>, max_iter: usize) -> Result<KmeansResult> {
    let n = points.nrows();
    let k = centres.nrows();
    let mut labels = vec![usize::MAX; n];
    let mut repaired = false;
    let mut trace = Vec::new();
    let mut iterations = 0;
    while iterations < max_iter.max(1) {
        iterations += 1;
        let changed = assign(points, &centres, &mut labels);
        if !changed && iterations > 1 {
            break;
        }
        repaired |= repair(points, &mut labels, &mut centres);
        trace.push(cost_of(points, &labels, &centres));
    }
    let cost = cost_of(points, &labels, &centres);
    Ok(KmeansResult {
        theta_hat: MembershipMatrix::from_labels(labels, k)?,
        centroids: centres,
        cost,
        repaired,
        iterations,
        cost_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn separated_groups() {
        let pts = array![[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [5.0, 5.0], [5.1, 5.0], [5.0, 5.1]];
        let r = kmeans(pts.view(), 2, 1, 10).unwrap();
        let l = r.theta_hat.labels();
        assert_eq!(l[0], l[1]);
        assert_eq!(l[1], l[2]);
        assert_eq!(l[3], l[4]);
        assert_eq!(l[4], l[5]);
        assert_ne!(l[0], l[3]);
        assert!(!r.repaired);
    }

    #[test]
    fn identical_points() {
        let pts = Array2::from_elem((6, 2), 0.3);
        let r = kmeans(pts.view(), 3, 2, 5).unwrap();
        assert_eq!(r.cost, 0.0);
        assert!(r.repaired);
        assert!(r.theta_hat.cluster_sizes().iter().all(|&s| s >= 1));
    }

    #[test]
    fn one_point_per_cluster() {
        let pts = array![[0.0], [1.0], [3.0]];
        let r = kmeans(pts.view(), 3, 3, 4).unwrap();
        assert_eq!(r.cost, 0.0);
        let mut l = r.theta_hat.labels().to_vec();
        l.sort_unstable();
        assert_eq!(l, vec![0, 1, 2]);
    }

    #[test]
    fn cost_matches_frobenius_objective() {
        let mut g = rng::stream(11, 0);
        let pts = Array2::from_shape_fn((30, 3), |_| g.gen::<f64>());
        let r = kmeans(pts.view(), 3, 5, 3).unwrap();
        let fitted = r.theta_hat.to_dense().dot(&r.centroids);
        let diff = &fitted - &pts;
        assert!((diff.iter().map(|x| x * x).sum::<f64>() - r.cost).abs() < 1e-12);
    }

    #[test]
    fn invalid_k() {
        let pts = array![[0.0], [1.0]];
        assert!(kmeans(pts.view(), 3, 0, 1).is_err());
        assert!(kmeans(pts.view(), 0, 0, 1).is_err());
    }
}
