//! Clustering and classification metrics, spectral-norm diagnostics and
//! the relative-error bound calculator.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::membership::MembershipMatrix;
use crate::spectral::eigen::{check_finite, top_eigenpairs, SubspaceOptions};

fn check_pair(a: &MembershipMatrix, b: &MembershipMatrix) -> Result<()> {
    if a.n() != b.n() || a.k() != b.k() {
        return Err(Error::shape("membership pair", (b.n(), b.k()), (a.n(), a.k())));
    }
    if a.n() == 0 {
        return Err(Error::param("membership", "no nodes"));
    }
    Ok(())
}

/// `K × K` counts: row = estimated label, column = true label.
pub fn confusion(theta_hat: &MembershipMatrix, theta: &MembershipMatrix) -> Result<Array2<f64>> {
    check_pair(theta_hat, theta)?;
    let mut c = Array2::zeros((theta.k(), theta.k()));
    for (&e, &t) in theta_hat.labels().iter().zip(theta.labels()) {
        c[[e, t]] += 1.0;
    }
    Ok(c)
}

fn trace_of(c: &Array2<f64>, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(e, &t)| c[[e, t]]).sum()
}

/// Best relabelling by enumerating all `K!` permutations in lexicographic
/// order; the first optimum wins, so the identity is kept when optimal.
pub fn match_labels_exhaustive(weights: &Array2<f64>) -> Vec<usize> {
    let k = weights.nrows();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = perm.clone();
    let mut best_score = trace_of(weights, &perm);
    while next_permutation(&mut perm) {
        let s = trace_of(weights, &perm);
        if s > best_score {
            best_score = s;
            best = perm.clone();
        }
    }
    best
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Maximum-weight perfect assignment (Hungarian method with potentials,
/// `O(K³)`). Returns `perm` with row `r` assigned to column `perm[r]`.
pub fn match_labels_assignment(weights: &Array2<f64>) -> Vec<usize> {
    let k = weights.nrows();
    let max = weights.iter().copied().fold(0.0f64, f64::max);
    // minimise cost = max - weight; 1-based arrays with a sentinel at 0
    let cost = |r: usize, c: usize| max - weights[[r - 1, c - 1]];
    let mut u = vec![0.0; k + 1];
    let mut v = vec![0.0; k + 1];
    let mut p = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for i in 1..=k {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=k {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; k];
    for j in 1..=k {
        perm[p[j] - 1] = j - 1;
    }
    perm
}

/// Permutation mapping estimated labels onto true labels so that the
/// number of agreeing nodes is maximal. Exhaustive for `K ≤ 8`,
/// assignment-based above.
pub fn match_labels(theta_hat: &MembershipMatrix, theta: &MembershipMatrix) -> Result<Vec<usize>> {
    let c = confusion(theta_hat, theta)?;
    Ok(if theta.k() <= 8 {
        match_labels_exhaustive(&c)
    } else {
        match_labels_assignment(&c)
    })
}

fn matched_count(theta_hat: &MembershipMatrix, theta: &MembershipMatrix) -> Result<usize> {
    let c = confusion(theta_hat, theta)?;
    let perm = match_labels(theta_hat, theta)?;
    Ok(trace_of(&c, &perm) as usize)
}

/// `(1/n) min_π ‖Θ̂π − Θ‖₀`. Each mislabelled node differs in two entries,
/// so the value lies in `[0, 2]`.
pub fn relative_error(theta_hat: &MembershipMatrix, theta: &MembershipMatrix) -> Result<f64> {
    let n = theta.n();
    let hit = matched_count(theta_hat, theta)?;
    Ok(2.0 * (n - hit) as f64 / n as f64)
}

/// Fraction of nodes labelled correctly after optimal relabelling.
pub fn accuracy(theta_hat: &MembershipMatrix, theta: &MembershipMatrix) -> Result<f64> {
    Ok(matched_count(theta_hat, theta)? as f64 / theta.n() as f64)
}

/// Plain agreement, no relabelling (supervised predictions).
pub fn split_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::shape("split_accuracy", truth.len(), pred.len()));
    }
    if truth.is_empty() {
        return Err(Error::param("split_accuracy", "no nodes"));
    }
    let hit = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hit as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucResult {
    pub value: f64,
    /// Classes left out because they had no positive or no negative node.
    pub skipped: Vec<usize>,
}

/// One-vs-rest ROC AUC per class from midranks, macro-averaged. Tied
/// scores count one half.
pub fn macro_auc(scores: ArrayView2<'_, f64>, truth: &[usize]) -> Result<AucResult> {
    let (n, k) = scores.dim();
    if truth.len() != n {
        return Err(Error::shape("macro_auc", n, truth.len()));
    }
    check_finite(&scores, "macro_auc scores")?;
    if let Some(&c) = truth.iter().find(|&&c| c >= k) {
        return Err(Error::param("truth", format!("label {c} >= {k}")));
    }
    let mut total = 0.0;
    let mut used = 0usize;
    let mut skipped = Vec::new();
    for c in 0..k {
        let pos = truth.iter().filter(|&&t| t == c).count();
        let neg = n - pos;
        if pos == 0 || neg == 0 {
            skipped.push(c);
            continue;
        }
        let col = scores.column(c);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| col[a].partial_cmp(&col[b]).expect("finite"));
        let mut rank_sum = 0.0;
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && col[idx[j + 1]] == col[idx[i]] {
                j += 1;
            }
            // 1-based ranks i+1..=j+1 share their mean
            let mid = (i + j + 2) as f64 / 2.0;
            for &node in &idx[i..=j] {
                if truth[node] == c {
                    rank_sum += mid;
                }
            }
            i = j + 1;
        }
        let (p, q) = (pos as f64, neg as f64);
        total += (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
        used += 1;
    }
    if used == 0 {
        return Err(Error::Domain(
            "AUC undefined: no class has both positives and negatives".into(),
        ));
    }
    Ok(AucResult {
        value: total / used as f64,
        skipped,
    })
}

/// Macro-averaged F1 on raw labels; a class with no predictions and no
/// members scores 0.
pub fn macro_f1_labels(pred: &[usize], truth: &[usize], k: usize) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::shape("macro_f1", truth.len(), pred.len()));
    }
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fneg = vec![0usize; k];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= k || t >= k {
            return Err(Error::param("labels", format!("label outside 0..{k}")));
        }
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fneg[t] += 1;
        }
    }
    let sum: f64 = (0..k)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fneg[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    Ok(sum / k as f64)
}

/// Macro F1 after optimal relabelling of the estimate.
pub fn macro_f1(theta_hat: &MembershipMatrix, theta: &MembershipMatrix) -> Result<f64> {
    let perm = match_labels(theta_hat, theta)?;
    let aligned = theta_hat.permuted(&perm);
    macro_f1_labels(aligned.labels(), theta.labels(), theta.k())
}

/// Largest singular value.
pub fn spectral_norm(m: ArrayView2<'_, f64>) -> Result<f64> {
    check_finite(&m, "spectral_norm")?;
    if m.is_empty() {
        return Ok(0.0);
    }
    let symmetric = m.nrows() == m.ncols() && (0..m.nrows()).all(|i| (0..i).all(|j| m[[i, j]] == m[[j, i]]));
    let opts = SubspaceOptions {
        tol: 1e-12,
        ..SubspaceOptions::default()
    };
    if symmetric {
        let e = top_eigenpairs(m, 1, &opts, None)?;
        Ok(e.values[0].abs())
    } else {
        let gram = if m.nrows() <= m.ncols() {
            m.dot(&m.t())
        } else {
            m.t().dot(&m)
        };
        let e = top_eigenpairs(gram.view(), 1, &opts, None)?;
        Ok(e.values[0].max(0.0).sqrt())
    }
}

/// `‖Â − P‖`.
pub fn concentration(m_hat: ArrayView2<'_, f64>, p: ArrayView2<'_, f64>) -> Result<f64> {
    if m_hat.dim() != p.dim() {
        return Err(Error::shape("concentration", p.dim(), m_hat.dim()));
    }
    spectral_norm((&m_hat - &p).view())
}

/// Inputs of the relative-error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub delta: f64,
    /// Second-largest cluster size.
    pub n_max2: f64,
    pub n_min: f64,
    pub k: usize,
    pub n: usize,
    pub alpha: f64,
    pub tau: f64,
    pub concentration: f64,
}

/// `(1+δ) n'_max K / (n α² n_min² τ²) · ‖Â − P‖²`, with the suppressed
/// universal constant taken as 1.
pub fn error_bound(b: &BoundInputs) -> Result<f64> {
    let denom = b.n as f64 * b.alpha * b.alpha * b.n_min * b.n_min * b.tau * b.tau;
    if !(denom > 0.0) {
        return Err(Error::Domain(format!("error bound denominator is {denom}")));
    }
    Ok((1.0 + b.delta) * b.n_max2 * b.k as f64 / denom * b.concentration * b.concentration)
}

/// Second-largest and smallest cluster sizes.
pub fn size_extremes(theta: &MembershipMatrix) -> (usize, usize) {
    let mut s = theta.cluster_sizes();
    s.sort_unstable_by(|a, b| b.cmp(a));
    (s.get(1).copied().unwrap_or(s[0]), *s.last().expect("k >= 1"))
}

/// Metrics of one evaluation (one time step, or an average over steps).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub relative_error: f64,
    pub accuracy: f64,
    pub macro_auc: f64,
    pub macro_f1: f64,
}

impl StepMetrics {
    pub fn is_finite(&self) -> bool {
        [self.relative_error, self.accuracy, self.macro_auc, self.macro_f1]
            .iter()
            .all(|x| x.is_finite())
    }
}

/// How accuracy was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccuracyMode {
    /// All nodes, after optimal relabelling (unsupervised methods).
    Matched,
    /// Held-out test nodes, labels compared as-is (supervised methods).
    Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub relative_error: f64,
    pub accuracy: f64,
    pub macro_auc: f64,
    pub macro_f1: f64,
    pub accuracy_mode: AccuracyMode,
    pub per_step: Option<Vec<StepMetrics>>,
}

impl EvalReport {
    /// Time-averaged report over the given steps.
    pub fn from_steps(steps: Vec<StepMetrics>, mode: AccuracyMode) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::param("per_step", "no steps"));
        }
        let avg = |f: fn(&StepMetrics) -> f64| steps.iter().map(f).sum::<f64>() / steps.len() as f64;
        Ok(Self {
            relative_error: avg(|s| s.relative_error),
            accuracy: avg(|s| s.accuracy),
            macro_auc: avg(|s| s.macro_auc),
            macro_f1: avg(|s| s.macro_f1),
            accuracy_mode: mode,
            per_step: Some(steps),
        })
    }

    pub fn is_finite(&self) -> bool {
        [self.relative_error, self.accuracy, self.macro_auc, self.macro_f1]
            .iter()
            .all(|x| x.is_finite())
            && self.per_step.iter().flatten().all(StepMetrics::is_finite)
    }
}

/// Unsupervised evaluation over all nodes: matched accuracy, relative
/// error, macro F1, and AUC on scores whose columns are relabelled the
/// same way as the estimate.
pub fn evaluate_unsupervised(
    step: usize,
    theta_hat: &MembershipMatrix,
    scores: ArrayView2<'_, f64>,
    theta: &MembershipMatrix,
) -> Result<StepMetrics> {
    let perm = match_labels(theta_hat, theta)?;
    let aligned = crate::spectral::permute_columns(&scores.to_owned(), &perm);
    Ok(StepMetrics {
        step,
        relative_error: relative_error(theta_hat, theta)?,
        accuracy: accuracy(theta_hat, theta)?,
        macro_auc: macro_auc(aligned.view(), theta.labels())?.value,
        macro_f1: macro_f1(theta_hat, theta)?,
    })
}

/// Supervised evaluation on a node subset: labels compared as-is.
pub fn evaluate_split(
    step: usize,
    pred: &MembershipMatrix,
    scores: ArrayView2<'_, f64>,
    theta: &MembershipMatrix,
    nodes: &[usize],
) -> Result<StepMetrics> {
    let p = pred.subset(nodes);
    let t = theta.subset(nodes);
    let sub = scores.select(ndarray::Axis(0), nodes);
    let auc = match macro_auc(sub.view(), t.labels()) {
        Ok(a) => a.value,
        // a split with a single class has no ROC curve; count it as chance
        Err(Error::Domain(_)) => 0.5,
        Err(e) => return Err(e),
    };
    Ok(StepMetrics {
        step,
        relative_error: 2.0 * (1.0 - split_accuracy(p.labels(), t.labels())?),
        accuracy: split_accuracy(p.labels(), t.labels())?,
        macro_auc: auc,
        macro_f1: macro_f1_labels(p.labels(), t.labels(), t.k())?,
    })
}

/// Sample mean and standard error (`sd / √n`, `sd` with `n − 1`).
pub fn mean_and_standard_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Centred moving average over `2 * half + 1` points, truncated at the ends.
pub fn centered_moving_average(xs: &[f64], half: usize) -> Vec<f64> {
    (0..xs.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(xs.len() - 1);
            xs[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn m(labels: &[usize], k: usize) -> MembershipMatrix {
        MembershipMatrix::from_labels(labels.to_vec(), k).unwrap()
    }

    #[test]
    fn relative_error_basics() {
        let t = m(&[0, 0, 1, 1], 2);
        assert_eq!(relative_error(&t, &t).unwrap(), 0.0);
        assert_eq!(relative_error(&m(&[1, 1, 0, 0], 2), &t).unwrap(), 0.0);
        assert_eq!(relative_error(&m(&[0, 1, 1, 1], 2), &t).unwrap(), 0.5);
        assert_eq!(accuracy(&m(&[0, 1, 1, 1], 2), &t).unwrap(), 0.75);
        assert_eq!(accuracy(&t, &t).unwrap(), 1.0);
        assert!(relative_error(&m(&[0, 1, 1], 2), &t).is_err());
    }

    #[test]
    fn match_labels_cases() {
        let t = m(&[0, 0, 0, 1, 1], 2);
        assert_eq!(match_labels(&m(&[1, 1, 0, 0, 0], 2), &t).unwrap(), vec![1, 0]);
        assert_eq!(match_labels(&t, &t).unwrap(), vec![0, 1]);
        // all ties: identity is among the optima and comes first
        let c = Array2::<f64>::ones((3, 3));
        assert_eq!(match_labels_exhaustive(&c), vec![0, 1, 2]);
    }

    #[test]
    fn hungarian_small() {
        let w = array![[1.0, 5.0, 0.0], [4.0, 0.0, 0.0], [0.0, 0.0, 3.0]];
        assert_eq!(match_labels_assignment(&w), vec![1, 0, 2]);
        assert_eq!(match_labels_exhaustive(&w), vec![1, 0, 2]);
    }

    #[test]
    fn auc_cases() {
        let truth = [0, 0, 1, 1];
        let perfect = array![[0.9, 0.1], [0.8, 0.2], [0.3, 0.7], [0.1, 0.9]];
        assert_eq!(macro_auc(perfect.view(), &truth).unwrap().value, 1.0);
        let flat = Array2::from_elem((4, 2), 0.5);
        assert_eq!(macro_auc(flat.view(), &truth).unwrap().value, 0.5);

        let r = macro_auc(perfect.view(), &[0, 0, 0, 0]);
        assert!(matches!(r, Err(Error::Domain(_))));
        let three = array![[0.9, 0.1, 0.0], [0.1, 0.9, 0.0], [0.2, 0.8, 0.0]];
        let r = macro_auc(three.view(), &[0, 1, 1]).unwrap();
        assert_eq!(r.skipped, vec![2]);
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn f1_single_predicted_class() {
        let truth = m(&[0, 0, 1, 1], 2);
        let pred = m(&[0, 0, 0, 0], 2);
        assert_abs_diff_eq!(
            macro_f1_labels(pred.labels(), truth.labels(), 2).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(macro_f1(&pred, &truth).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(macro_f1(&truth, &truth).unwrap(), 1.0);
    }

    #[test]
    fn spectral_norm_cases() {
        assert_abs_diff_eq!(
            spectral_norm(array![[3.0, 0.0], [0.0, -4.0]].view()).unwrap(),
            4.0,
            epsilon = 1e-12
        );
        assert_eq!(spectral_norm(Array2::<f64>::zeros((5, 5)).view()).unwrap(), 0.0);
        // rank one: u vᵀ has norm |u||v|
        let a = array![[1.0, 2.0, 2.0], [2.0, 4.0, 4.0]];
        assert_abs_diff_eq!(spectral_norm(a.view()).unwrap(), 5.0f64.sqrt() * 3.0, epsilon = 1e-10);
        let p = array![[0.1, 0.2], [0.2, 0.1]];
        assert_eq!(concentration(p.view(), p.view()).unwrap(), 0.0);
        assert!(spectral_norm(array![[f64::INFINITY]].view()).is_err());
    }

    #[test]
    fn bound_homogeneity() {
        let mut b = BoundInputs {
            delta: 0.05,
            n_max2: 100.0,
            n_min: 100.0,
            k: 2,
            n: 200,
            alpha: 0.02,
            tau: 0.05,
            concentration: 0.0,
        };
        assert_eq!(error_bound(&b).unwrap(), 0.0);
        b.concentration = 1.5;
        let one = error_bound(&b).unwrap();
        b.concentration = 3.0;
        assert_abs_diff_eq!(error_bound(&b).unwrap(), 4.0 * one, epsilon = 1e-9 * one);
        b.n_min = 0.0;
        assert!(error_bound(&b).is_err());
    }

    #[test]
    fn stats_helpers() {
        let (mean, se) = mean_and_standard_error(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(mean, 2.5);
        assert_abs_diff_eq!(se, (5.0f64 / 3.0).sqrt() / 2.0, epsilon = 1e-15);
        assert_eq!(
            centered_moving_average(&[1.0, 2.0, 3.0, 4.0, 5.0], 2),
            vec![2.0, 2.5, 3.0, 3.5, 4.0]
        );
    }

    #[test]
    fn report_averages() {
        let s = |step, a| StepMetrics {
            step,
            relative_error: 2.0 * (1.0 - a),
            accuracy: a,
            macro_auc: a,
            macro_f1: a,
        };
        let r = EvalReport::from_steps(vec![s(1, 0.5), s(2, 1.0)], AccuracyMode::Matched).unwrap();
        assert_eq!(r.accuracy, 0.75);
        assert!(r.is_finite());
    }
}
