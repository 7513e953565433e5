//! Leading eigenpairs of symmetric matrices.
//!
//! Lanczos iteration with full reorthogonalisation. Convergence is judged
//! on the residual `‖M u − θ u‖` of the wanted Ritz pairs; when the Krylov
//! space becomes (nearly) invariant the iteration restarts from a fresh
//! random direction orthogonal to the basis, so repeated eigenvalues are
//! found with their multiplicity. Small problems go straight to a cyclic
//! Jacobi solve of the whole matrix.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubspaceOptions {
    /// Residual tolerance relative to the largest Ritz value magnitude.
    pub tol: f64,
    /// Cap on matrix-vector products.
    pub max_iter: usize,
    /// Seed for the random starting vector.
    pub seed: u64,
}

impl Default for SubspaceOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 5000,
            seed: 0x5EED,
        }
    }
}

/// Eigenpairs ordered by nonincreasing `|value|`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// `n × k`, orthonormal columns.
    pub vectors: Array2<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn check_finite(m: &ArrayView2<'_, f64>, context: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}

pub(crate) fn check_symmetric(m: &ArrayView2<'_, f64>, context: &'static str) -> Result<()> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::shape(context, "square matrix", m.dim()));
    }
    let scale = m.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[[i, j]] - m[[j, i]]).abs() > 1e-12 * scale.max(1.0) {
                return Err(Error::param(
                    "matrix",
                    format!("{context}: not symmetric at ({i}, {j})"),
                ));
            }
        }
    }
    Ok(())
}

/// Below this size the dense Jacobi solve is used directly.
const DIRECT_LIMIT: usize = 32;

/// The `k` eigenpairs of largest magnitude of a symmetric matrix.
///
/// `warm` holds approximate eigenvectors (for instance from a previous,
/// similar matrix); their sum is mixed into the starting vector.
pub fn top_eigenpairs(
    m: ArrayView2<'_, f64>,
    k: usize,
    opts: &SubspaceOptions,
    warm: Option<ArrayView2<'_, f64>>,
) -> Result<SymmetricEigen> {
    let n = m.nrows();
    check_symmetric(&m, "top_eigenpairs")?;
    check_finite(&m, "top_eigenpairs")?;
    if k == 0 || k > n {
        return Err(Error::param("k", format!("need 1 <= k <= n = {n}, got {k}")));
    }
    if n <= DIRECT_LIMIT {
        let (values, vectors) = jacobi_eigen(m);
        let order = magnitude_order(&values);
        return Ok(SymmetricEigen {
            values: order[..k].iter().map(|&i| values[i]).collect(),
            vectors: select_columns(&vectors, &order[..k]),
            iterations: 0,
            converged: true,
        });
    }

    let op = Operator::new(m);
    let mut r = rng::stream(opts.seed, 0);
    let mut basis: Vec<Array1<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    // beta[j] couples basis vectors j and j + 1; zero after a restart
    let mut beta: Vec<f64> = Vec::new();
    let mut norm_est = 0.0f64;

    let mut v = Array1::from_shape_fn(n, |_| r.gen::<f64>() - 0.5);
    if let Some(w) = warm.filter(|w| w.nrows() == n) {
        let scale = v.dot(&v).sqrt();
        for col in w.columns() {
            let c = col.dot(&col).sqrt();
            if c > 0.0 && c.is_finite() {
                v.scaled_add(4.0 * scale / c, &col);
            }
        }
    }
    let nv = v.dot(&v).sqrt();
    v /= nv;

    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut w = op.apply(&v);
        let a = v.dot(&w);
        w.scaled_add(-a, &v);
        if let (Some(prev), Some(&b)) = (basis.last(), beta.last()) {
            w.scaled_add(-b, prev);
        }
        basis.push(v);
        alpha.push(a);
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&w);
                w.scaled_add(-proj, q);
            }
        }
        let b = w.dot(&w).sqrt();
        norm_est = norm_est.max(a.abs() + b);
        let dim = basis.len();
        let stalled = b <= 1e-8 * norm_est;

        let exhausted = dim == n || iterations >= opts.max_iter;
        if (dim >= k && dim.is_multiple_of(3) && !stalled) || exhausted {
            let mut d = alpha.clone();
            let mut e = beta.clone();
            e.push(0.0);
            let mut last = vec![vec![0.0; dim]];
            last[0][dim - 1] = 1.0;
            tridiagonal_eigen(&mut d, &mut e, &mut last);
            let order = magnitude_order(&d);
            let scale = d.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
            let converged = order[..k].iter().all(|&i| b * last[0][i].abs() <= opts.tol * scale) || scale == 0.0;
            if converged || exhausted {
                return Ok(finish(&op, &basis, &alpha, &beta, k, opts.tol, iterations, converged));
            }
        }

        v = if stalled {
            beta.push(0.0);
            fresh_direction(&basis, &mut r)
        } else {
            beta.push(b);
            w / b
        };
    }
}

/// A random unit vector orthogonal to `basis`.
fn fresh_direction(basis: &[Array1<f64>], r: &mut impl Rng) -> Array1<f64> {
    let n = basis[0].len();
    for _ in 0..100 {
        let mut v = Array1::from_shape_fn(n, |_| r.gen::<f64>() - 0.5);
        let original = v.dot(&v).sqrt();
        for _ in 0..2 {
            for q in basis {
                let proj = q.dot(&v);
                v.scaled_add(-proj, q);
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-6 * original {
            return v / norm;
        }
    }
    panic!(
        "cannot extend an orthonormal basis of {} vectors in dimension {n}",
        basis.len()
    );
}

#[allow(clippy::too_many_arguments)]
fn finish(
    op: &Operator<'_>,
    basis: &[Array1<f64>],
    alpha: &[f64],
    beta: &[f64],
    k: usize,
    tol: f64,
    iterations: usize,
    estimated: bool,
) -> SymmetricEigen {
    let dim = basis.len();
    let n = basis[0].len();
    let mut d = alpha.to_vec();
    let mut e = beta[..dim - 1].to_vec();
    e.push(0.0);
    let mut z: Vec<Vec<f64>> = (0..dim)
        .map(|i| {
            let mut row = vec![0.0; dim];
            row[i] = 1.0;
            row
        })
        .collect();
    tridiagonal_eigen(&mut d, &mut e, &mut z);
    let order = magnitude_order(&d);
    let mut vectors = Array2::<f64>::zeros((n, k));
    for (c, &i) in order[..k].iter().enumerate() {
        let mut col = vectors.column_mut(c);
        for (j, q) in basis.iter().enumerate() {
            col.scaled_add(z[j][i], q);
        }
        let norm = col.dot(&col).sqrt();
        col /= norm;
    }
    let values: Vec<f64> = order[..k].iter().map(|&i| d[i]).collect();
    let scale = d.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let mv = op.apply_block(&vectors);
    let residual_ok = (0..k).all(|i| {
        let res = &mv.column(i) - &(&vectors.column(i) * values[i]);
        res.dot(&res).sqrt() <= 10.0 * tol * scale.max(f64::MIN_POSITIVE)
    });
    let converged = estimated || residual_ok;
    if !converged {
        log::warn!("Lanczos iteration stopped after {iterations} steps without converging");
    }
    SymmetricEigen {
        values,
        vectors,
        iterations,
        converged: converged && residual_ok,
    }
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `d` and
/// off-diagonal `e[..n-1]` (`e[n-1]` is scratch), by implicit QL. The
/// rotations are applied to every row of `rows`, so rows of the identity
/// come out as rows of the eigenvector matrix.
pub(crate) fn tridiagonal_eigen(d: &mut [f64], e: &mut [f64], rows: &mut [Vec<f64>]) {
    let n = d.len();
    if n == 0 {
        return;
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                log::warn!("tridiagonal QL did not converge");
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = (g * g + 1.0).sqrt();
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = (f * f + g * g).sqrt();
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for z in rows.iter_mut() {
                    let f = z[i + 1];
                    z[i + 1] = s * z[i] + c * f;
                    z[i] = c * z[i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
}

fn magnitude_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .abs()
            .partial_cmp(&values[a].abs())
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });
    order
}

fn select_columns(a: &Array2<f64>, cols: &[usize]) -> Array2<f64> {
    a.select(Axis(1), cols)
}

/// `M` as given, or in compressed rows when it is mostly zeros.
enum Operator<'a> {
    Dense(ArrayView2<'a, f64>),
    Sparse {
        starts: Vec<usize>,
        cols: Vec<usize>,
        vals: Vec<f64>,
    },
}

impl<'a> Operator<'a> {
    fn new(m: ArrayView2<'a, f64>) -> Self {
        let nnz = m.iter().filter(|&&x| x != 0.0).count();
        if nnz * 4 > m.len() {
            return Operator::Dense(m);
        }
        let mut starts = Vec::with_capacity(m.nrows() + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        starts.push(0);
        for row in m.rows() {
            for (j, &x) in row.iter().enumerate() {
                if x != 0.0 {
                    cols.push(j);
                    vals.push(x);
                }
            }
            starts.push(cols.len());
        }
        Operator::Sparse { starts, cols, vals }
    }

    fn apply(&self, v: &Array1<f64>) -> Array1<f64> {
        match self {
            Operator::Dense(m) => m.dot(v),
            Operator::Sparse { starts, cols, vals } => Array1::from_shape_fn(starts.len() - 1, |i| {
                (starts[i]..starts[i + 1]).map(|idx| vals[idx] * v[cols[idx]]).sum()
            }),
        }
    }

    fn apply_block(&self, q: &Array2<f64>) -> Array2<f64> {
        match self {
            Operator::Dense(m) => m.dot(q),
            Operator::Sparse { starts, cols, vals } => {
                let mut out = Array2::zeros((starts.len() - 1, q.ncols()));
                for (i, mut row) in out.rows_mut().into_iter().enumerate() {
                    for idx in starts[i]..starts[i + 1] {
                        row.scaled_add(vals[idx], &q.row(cols[idx]));
                    }
                }
                out
            }
        }
    }
}

/// Full eigendecomposition of a small symmetric matrix by cyclic Jacobi
/// rotations. Returns unsorted eigenvalues and the matching eigenvectors
/// as columns.
pub fn jacobi_eigen(a: ArrayView2<'_, f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut a: Vec<f64> = a.iter().copied().collect();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let total: f64 = a.iter().map(|x| x * x).sum();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off <= 1e-30 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                let (rp, rq) = (p * n, q * n);
                for k in 0..n {
                    let apk = a[rp + k];
                    let aqk = a[rq + k];
                    a[rp + k] = c * apk - s * aqk;
                    a[rq + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i * n + i]).collect();
    (values, Array2::from_shape_vec((n, n), v).expect("square"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn random_symmetric(n: usize, seed: u64) -> Array2<f64> {
        let mut r = rng::stream(seed, 0);
        let a = Array2::from_shape_fn((n, n), |_| r.gen::<f64>() * 2.0 - 1.0);
        &a + &a.t()
    }

    #[test]
    fn jacobi_reconstructs() {
        let a = random_symmetric(7, 1);
        let (vals, vecs) = jacobi_eigen(a.view());
        let d = Array2::from_diag(&Array1::from(vals));
        let rec = vecs.dot(&d).dot(&vecs.t());
        assert_abs_diff_eq!(rec, a, epsilon = 1e-12);
        assert_abs_diff_eq!(vecs.t().dot(&vecs), Array2::eye(7), epsilon = 1e-12);
    }

    #[test]
    fn diagonal_case() {
        let m = array![[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]];
        let e = top_eigenpairs(m.view(), 2, &SubspaceOptions::default(), None).unwrap();
        assert_abs_diff_eq!(e.values[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.values[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.vectors[[0, 0]].abs(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.vectors[[1, 1]].abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn block_iteration_residuals() {
        let m = random_symmetric(120, 4);
        let e = top_eigenpairs(m.view(), 3, &SubspaceOptions::default(), None).unwrap();
        assert!(e.converged);
        assert!(e.iterations > 0);
        let norm = e.values[0].abs();
        for i in 0..3 {
            let u = e.vectors.column(i);
            let res = &m.dot(&u) - &(&u * e.values[i]);
            assert!(res.dot(&res).sqrt() <= 1e-6 * norm);
        }
        assert_abs_diff_eq!(e.vectors.t().dot(&e.vectors), Array2::eye(3), epsilon = 1e-8);
        let (all, _) = jacobi_eigen(m.view());
        let mut mags: Vec<f64> = all.iter().map(|x| x.abs()).collect();
        mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for i in 0..3 {
            assert_abs_diff_eq!(e.values[i].abs(), mags[i], epsilon = 1e-8 * mags[0]);
        }
    }

    #[test]
    fn zero_and_identity_matrices() {
        let z = Array2::<f64>::zeros((60, 60));
        let e = top_eigenpairs(z.view(), 2, &SubspaceOptions::default(), None).unwrap();
        assert_eq!(e.values, vec![0.0, 0.0]);
        assert_abs_diff_eq!(e.vectors.t().dot(&e.vectors), Array2::eye(2), epsilon = 1e-10);

        let i = Array2::<f64>::eye(60);
        let e = top_eigenpairs(i.view(), 2, &SubspaceOptions::default(), None).unwrap();
        assert!(e.converged);
        assert_abs_diff_eq!(e.vectors.t().dot(&e.vectors), Array2::eye(2), epsilon = 1e-10);
    }

    #[test]
    fn rejects_bad_input() {
        let m = array![[1.0, 2.0], [0.0, 1.0]];
        assert!(top_eigenpairs(m.view(), 1, &SubspaceOptions::default(), None).is_err());
        let m = array![[1.0, f64::NAN], [f64::NAN, 1.0]];
        assert!(matches!(
            top_eigenpairs(m.view(), 1, &SubspaceOptions::default(), None),
            Err(Error::NonFinite(_))
        ));
        let m = Array2::<f64>::eye(2);
        assert!(top_eigenpairs(m.view(), 3, &SubspaceOptions::default(), None).is_err());
    }
}
