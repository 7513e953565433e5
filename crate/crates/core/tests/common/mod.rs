//! Helpers and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use decay_cluster::dsbm::{DynamicGraph, Snapshot};
use decay_cluster::neural::{ModelKind, NeuralModel, Prepared, SmoothingRoute, Supervision, TrainConfig};
use decay_cluster::rng::{self, StreamRng};
use ndarray::{Array2, ArrayView2};
use rand::Rng;

pub const H: f64 = 1e-5;

pub fn random_graph(n: usize, steps: usize, p: f64, g: &mut StreamRng) -> DynamicGraph {
    let snaps = (0..steps)
        .map(|_| {
            let mut e = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if g.gen::<f64>() < p {
                        e.push((u, v));
                    }
                }
            }
            Snapshot::from_edges(n, e).unwrap()
        })
        .collect();
    DynamicGraph::new(n, snaps).unwrap()
}

pub struct Instance {
    pub graph: DynamicGraph,
    pub sup: Supervision,
    pub model: NeuralModel,
    pub dropout_seed: u64,
}

pub fn instance(seed: u64, kind: ModelKind, route: SmoothingRoute, k: usize) -> Instance {
    let mut g = rng::stream(seed, 99);
    let n = 12;
    let graph = random_graph(n, 4, 0.3, &mut g);
    let labels: Vec<usize> = (0..n).map(|_| g.gen_range(0..k)).collect();
    let train: Vec<usize> = (0..n).filter(|_| g.gen::<f64>() < 0.7).collect();
    let train = if train.is_empty() { vec![0] } else { train };
    let config = TrainConfig {
        seed,
        route,
        dropout: 0.3,
        ..TrainConfig::default()
    };
    let mut model = NeuralModel::new(kind, k, n, &config).unwrap();
    model.gcn.w1.mapv_inplace(|x| x * 3.0);
    model.gcn.w2.mapv_inplace(|x| x * 3.0);
    if let Some(d) = &mut model.decay {
        d.raw.mapv_inplace(|_| g.gen_range(-1.5..1.5));
    }
    if kind == ModelKind::Trnngcn {
        model.previous_labels = Some((0..n).map(|_| g.gen_range(0..k)).collect());
    }
    Instance {
        graph,
        sup: Supervision { labels, train, k },
        model,
        dropout_seed: seed ^ 0xD0,
    }
}

pub fn loss_at(inst: &Instance, model: &NeuralModel, prep: &Prepared) -> f64 {
    let mut g = rng::stream(inst.dropout_seed, 0);
    model.loss_and_gradients(prep, &inst.sup, Some(&mut g)).unwrap().0
}

pub fn param_mut(model: &mut NeuralModel, which: usize) -> &mut Array2<f64> {
    model.tensors_mut().swap_remove(which)
}

/// Largest elementwise relative discrepancy between analytic and central
/// difference gradients over every parameter entry.
pub fn worst_relative_error(inst: &Instance) -> f64 {
    let prep = Prepared::new(&inst.graph, inst.model.kind, inst.model.config.route).unwrap();
    let mut g = rng::stream(inst.dropout_seed, 0);
    let (_, _, grads) = inst.model.loss_and_gradients(&prep, &inst.sup, Some(&mut g)).unwrap();
    let mut worst: f64 = 0.0;
    for (which, grad) in grads.iter().enumerate() {
        for idx in 0..grad.len() {
            let mut plus = inst.model.clone();
            let mut minus = inst.model.clone();
            let shape = grad.dim();
            let ij = (idx / shape.1, idx % shape.1);
            param_mut(&mut plus, which)[ij] += H;
            param_mut(&mut minus, which)[ij] -= H;
            let fd = (loss_at(inst, &plus, &prep) - loss_at(inst, &minus, &prep)) / (2.0 * H);
            let a = grad[ij];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-7);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Largest absolute difference between the closed-form and unrolled
/// smoothing routes, over the loss and every gradient entry.
pub fn route_discrepancy(seed: u64, kind: ModelKind) -> f64 {
    let a = instance(seed, kind, SmoothingRoute::ClosedForm, 2);
    let b = instance(seed, kind, SmoothingRoute::Unrolled, 2);
    let pa = Prepared::new(&a.graph, kind, SmoothingRoute::ClosedForm).unwrap();
    let pb = Prepared::new(&b.graph, kind, SmoothingRoute::Unrolled).unwrap();
    let (la, _, ga) = a.model.loss_and_gradients(&pa, &a.sup, None).unwrap();
    let (lb, _, gb) = b.model.loss_and_gradients(&pb, &b.sup, None).unwrap();
    let mut worst = (la - lb).abs();
    for (x, y) in ga.iter().zip(&gb) {
        for (p, q) in x.iter().zip(y) {
            worst = worst.max((p - q).abs());
        }
    }
    worst
}

/// All permutations of `0..k`.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// `(1/n) min_π ‖Θ̂π − Θ‖₀` by trying every relabelling of the dense
/// one-hot matrices.
pub fn relative_error_by_enumeration(hat: &[usize], truth: &[usize], k: usize) -> f64 {
    let n = truth.len();
    let mut best = usize::MAX;
    for perm in permutations(k) {
        let mut diff = 0;
        for i in 0..n {
            for c in 0..k {
                let a = usize::from(perm[hat[i]] == c);
                let b = usize::from(truth[i] == c);
                diff += a.abs_diff(b);
            }
        }
        best = best.min(diff);
    }
    best as f64 / n as f64
}

/// Macro one-vs-rest AUC by comparing every positive with every negative.
pub fn auc_by_pairs(scores: ArrayView2<'_, f64>, truth: &[usize]) -> f64 {
    let k = scores.ncols();
    let mut total = 0.0;
    let mut used = 0;
    for c in 0..k {
        let pos: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == c).collect();
        let neg: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] != c).collect();
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let mut wins = 0.0;
        for &p in &pos {
            for &q in &neg {
                let (a, b) = (scores[[p, c]], scores[[q, c]]);
                if a > b {
                    wins += 1.0;
                } else if a == b {
                    wins += 0.5;
                }
            }
        }
        total += wins / (pos.len() as f64 * neg.len() as f64);
        used += 1;
    }
    total / used as f64
}

/// Largest absolute eigenvalue from a full dense decomposition.
pub fn dense_spectral_norm(m: &Array2<f64>) -> f64 {
    let n = m.nrows();
    let d = nalgebra::DMatrix::from_fn(n, n, |i, j| m[[i, j]]);
    let e = nalgebra::SymmetricEigen::new(d);
    e.eigenvalues.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// The k-means optimum by enumerating every assignment of points to
/// clusters.
pub fn kmeans_optimum(points: ArrayView2<'_, f64>, k: usize) -> f64 {
    let (n, d) = points.dim();
    let mut assign = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assign[i]] += 1;
            for j in 0..d {
                sums[assign[i]][j] += points[[i, j]];
            }
        }
        let mut cost = 0.0;
        for i in 0..n {
            let c = assign[i];
            for j in 0..d {
                let mu = sums[c][j] / counts[c] as f64;
                cost += (points[[i, j]] - mu).powi(2);
            }
        }
        best = best.min(cost);
        let mut pos = 0;
        loop {
            if pos == n {
                return best;
            }
            assign[pos] += 1;
            if assign[pos] < k {
                break;
            }
            assign[pos] = 0;
            pos += 1;
        }
    }
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        for &t in &idx[i..=j] {
            r[t] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson on midranks).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}
