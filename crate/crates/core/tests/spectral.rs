mod common;

use common::kmeans_optimum;
use decay_cluster::dsbm::{generate_sequence, SbmParams};
use decay_cluster::metrics::{relative_error, spectral_norm};
use decay_cluster::rng;
use decay_cluster::spectral::kmeans::kmeans;
use decay_cluster::spectral::{leading_singular_vectors, spectral_cluster};
use decay_cluster::MembershipMatrix;
use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn random_symmetric(n: usize, g: &mut impl Rng) -> Array2<f64> {
    let a = Array2::from_shape_fn((n, n), |_| g.gen_range(-1.0..1.0));
    &a + &a.t()
}

fn dense_abs_eigenvalues(m: &Array2<f64>) -> Vec<f64> {
    let n = m.nrows();
    let e = nalgebra::SymmetricEigen::new(nalgebra::DMatrix::from_fn(n, n, |i, j| m[[i, j]]));
    let mut v: Vec<f64> = e.eigenvalues.iter().map(|x| x.abs()).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

#[test]
fn singular_values_match_dense_decomposition() {
    let mut g = rng::stream(21, 0);
    for _ in 0..20 {
        let m = random_symmetric(40, &mut g);
        let k = g.gen_range(1..=6);
        let want = dense_abs_eigenvalues(&m);
        let got = leading_singular_vectors(m.view(), k).unwrap();
        for (a, b) in got.singular_values.iter().zip(&want) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn sparse_matrices_match_dense_decomposition() {
    let mut g = rng::stream(24, 0);
    for _ in 0..20 {
        let n = g.gen_range(40..120);
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            for j in i + 1..n {
                if g.gen::<f64>() < 0.05 {
                    let w = g.gen_range(0.1..1.0);
                    m[[i, j]] = w;
                    m[[j, i]] = w;
                }
            }
        }
        let k = g.gen_range(1..=4);
        let want = dense_abs_eigenvalues(&m);
        let got = leading_singular_vectors(m.view(), k).unwrap();
        for (a, b) in got.singular_values.iter().zip(&want) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn embeddings_are_orthonormal_with_small_residuals() {
    let mut g = rng::stream(22, 0);
    for _ in 0..20 {
        let m = random_symmetric(30, &mut g);
        let k = g.gen_range(1..=5);
        let e = leading_singular_vectors(m.view(), k).unwrap();
        let gram = e.e_k.t().dot(&e.e_k);
        for ((i, j), &x) in gram.indexed_iter() {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((x - want).abs() < 1e-8);
        }
        let norm = spectral_norm(m.view()).unwrap();
        for (i, &lambda) in e.eigenvalues.iter().enumerate() {
            let v = e.e_k.column(i);
            let r = m.dot(&v) - &v * lambda;
            assert!(r.dot(&r).sqrt() <= 1e-6 * norm);
        }
    }
}

#[test]
fn kmeans_is_close_to_the_brute_force_optimum() {
    let mut g = rng::stream(23, 0);
    for _ in 0..40 {
        let n = g.gen_range(3..=10);
        let k = g.gen_range(2..=3);
        let pts = Array2::from_shape_fn((n, 2), |_| g.gen_range(-1.0..1.0));
        let best = kmeans_optimum(pts.view(), k);
        let got = kmeans(pts.view(), k, g.gen(), 10).unwrap();
        assert!(got.cost <= 1.05 * best + 1e-12, "{} vs {best}", got.cost);
    }
}

#[test]
fn easy_regime_is_recovered() {
    let mut total = 0.0;
    for seed in 0..20 {
        let p = SbmParams {
            n: 200,
            alpha: 0.5,
            tau: 0.02,
            steps: 1,
            ..SbmParams::reference(seed)
        };
        let g = generate_sequence(&p).unwrap();
        let a = g.snapshots[0].to_dense();
        let est = spectral_cluster(a.view(), 2, seed).unwrap();
        total += relative_error(&est, g.membership(0).unwrap()).unwrap();
    }
    assert!(total / 20.0 < 0.05, "{}", total / 20.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lloyd_cost_never_increases(seed in 0u64..100_000, n in 2usize..40, k in 1usize..5) {
        prop_assume!(k <= n);
        let mut g = rng::stream(seed, 1);
        let pts = Array2::from_shape_fn((n, 3), |_| g.gen_range(-1.0..1.0));
        let r = kmeans(pts.view(), k, seed, 3).unwrap();
        prop_assert!(r.cost_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", r.cost_trace);
    }

    #[test]
    fn relabelling_nodes_relabels_the_partition(seed in 0u64..100_000) {
        let mut g = rng::stream(seed, 2);
        let n = 40;
        let truth: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let a = Array2::from_shape_fn((n, n), |(i, j)| {
            if i == j { 0.0 } else if truth[i] == truth[j] { 0.8 } else { 0.05 }
        });
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut g);
        let permuted = a.select(Axis(0), &perm).select(Axis(1), &perm);
        let est = spectral_cluster(a.view(), 2, seed).unwrap();
        let est_p = spectral_cluster(permuted.view(), 2, seed).unwrap();
        let mapped: Vec<usize> = perm.iter().map(|&i| est.label(i)).collect();
        let mapped = MembershipMatrix::from_labels(mapped, 2).unwrap();
        prop_assert_eq!(relative_error(&est_p, &mapped).unwrap(), 0.0);
    }
}
