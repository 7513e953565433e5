mod common;

use common::{auc_by_pairs, dense_spectral_norm, relative_error_by_enumeration};
use decay_cluster::metrics::{
    accuracy, confusion, macro_auc, macro_f1, match_labels_assignment, match_labels_exhaustive,
    mean_and_standard_error, relative_error, spectral_norm,
};
use decay_cluster::rng;
use decay_cluster::MembershipMatrix;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

fn labels(n: usize, k: usize, g: &mut impl Rng) -> Vec<usize> {
    (0..n).map(|_| g.gen_range(0..k)).collect()
}

fn theta(l: Vec<usize>, k: usize) -> MembershipMatrix {
    MembershipMatrix::from_labels(l, k).unwrap()
}

/// F1 per class tabulated from raw counts, then averaged.
fn f1_by_tabulation(pred: &[usize], truth: &[usize], k: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..k {
        let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
        for (&p, &t) in pred.iter().zip(truth) {
            match (p == c, t == c) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fneg += 1.0,
                _ => {}
            }
        }
        if tp > 0.0 {
            total += 2.0 * tp / (2.0 * tp + fp + fneg);
        }
    }
    total / k as f64
}

#[test]
fn relative_error_matches_enumeration() {
    let mut g = rng::stream(1, 0);
    for _ in 0..200 {
        let k = g.gen_range(1..=5);
        let n = g.gen_range(1..=30);
        let (h, t) = (labels(n, k, &mut g), labels(n, k, &mut g));
        let expected = relative_error_by_enumeration(&h, &t, k);
        assert_eq!(relative_error(&theta(h, k), &theta(t, k)).unwrap(), expected);
    }
}

#[test]
fn assignment_matches_exhaustive_matching() {
    let mut g = rng::stream(2, 0);
    for _ in 0..200 {
        let k = g.gen_range(1..=5);
        let n = g.gen_range(1..=30);
        let c = confusion(&theta(labels(n, k, &mut g), k), &theta(labels(n, k, &mut g), k)).unwrap();
        let trace = |p: &[usize]| p.iter().enumerate().map(|(r, &c2)| c[[r, c2]]).sum::<f64>();
        assert_eq!(trace(&match_labels_assignment(&c)), trace(&match_labels_exhaustive(&c)));
    }
}

#[test]
fn auc_matches_pair_counting() {
    let mut g = rng::stream(3, 0);
    for _ in 0..100 {
        let k = g.gen_range(2..=4);
        let n = g.gen_range(4..=30);
        let t = labels(n, k, &mut g);
        // coarse scores so ties occur
        let scores = Array2::from_shape_fn((n, k), |_| f64::from(g.gen_range(0..5)) / 4.0);
        assert_eq!(
            macro_auc(scores.view(), &t).unwrap().value,
            auc_by_pairs(scores.view(), &t)
        );
    }
}

#[test]
fn f1_matches_tabulation() {
    let mut g = rng::stream(4, 0);
    for _ in 0..100 {
        let k = g.gen_range(2..=4);
        let (p, t) = (labels(30, k, &mut g), labels(30, k, &mut g));
        let got = macro_f1(&theta(p.clone(), k), &theta(t.clone(), k)).unwrap();
        let hat = theta(p, k);
        let truth = theta(t.clone(), k);
        let perm = decay_cluster::metrics::match_labels(&hat, &truth).unwrap();
        let relabelled: Vec<usize> = hat.labels().iter().map(|&c| perm[c]).collect();
        let want = f1_by_tabulation(&relabelled, &t, k);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn spectral_norm_matches_dense_decomposition() {
    let mut g = rng::stream(5, 0);
    for _ in 0..100 {
        let a = Array2::from_shape_fn((50, 50), |_| g.gen_range(-1.0..1.0));
        let m = &a + &a.t();
        let want = dense_spectral_norm(&m);
        let got = spectral_norm(m.view()).unwrap();
        assert!((got - want).abs() < 1e-8 * want.max(1.0), "{got} vs {want}");
    }
}

#[test]
fn random_guessing_is_half_accurate() {
    let mut g = rng::stream(6, 0);
    let n = 4000;
    let t = labels(n, 2, &mut g);
    let h = labels(n, 2, &mut g);
    let acc = accuracy(&theta(h, 2), &theta(t, 2)).unwrap();
    // matching picks the better of two ~Binomial(n, 1/2) agreements
    let sd = 0.5 / (n as f64).sqrt();
    assert!(acc >= 0.5 - 1e-12 && acc < 0.5 + 4.0 * sd, "{acc}");
}

#[test]
fn standard_error_by_hand() {
    let xs = [0.61, 0.7, 0.64, 0.72, 0.66, 0.59, 0.73, 0.68, 0.65, 0.7];
    let mean = xs.iter().sum::<f64>() / 10.0;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 9.0).sqrt();
    let (m, se) = mean_and_standard_error(&xs);
    assert!((m - mean).abs() < 1e-15);
    assert!((se - sd / 10f64.sqrt()).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn error_and_accuracy_identities(seed in 0u64..100_000, n in 1usize..40, k in 1usize..5) {
        let mut g = rng::stream(seed, 7);
        let (h, t) = (labels(n, k, &mut g), labels(n, k, &mut g));
        let (th, tt) = (theta(h.clone(), k), theta(t, k));
        let e = relative_error(&th, &tt).unwrap();
        let a = accuracy(&th, &tt).unwrap();
        prop_assert!((a + e / 2.0 - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=2.0).contains(&e));
        prop_assert_eq!(relative_error(&th, &th).unwrap(), 0.0);
        let mut perm: Vec<usize> = (0..k).collect();
        perm.rotate_left(1.min(k));
        let shuffled = theta(h.iter().map(|&c| perm[c]).collect(), k);
        prop_assert_eq!(relative_error(&shuffled, &tt).unwrap(), e);
        prop_assert_eq!(relative_error(&tt, &th).unwrap(), e);
    }

    #[test]
    fn auc_invariant_under_monotone_maps(seed in 0u64..100_000, n in 4usize..30) {
        let mut g = rng::stream(seed, 8);
        let t = labels(n, 3, &mut g);
        prop_assume!((0..3).all(|c| t.contains(&c)));
        let s = Array2::from_shape_fn((n, 3), |_| g.gen_range(-2.0..2.0));
        let a = macro_auc(s.view(), &t).unwrap().value;
        let b = macro_auc(s.mapv(|x: f64| x.exp() * 3.0 + 1.0).view(), &t).unwrap().value;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn spectral_norm_symmetries(seed in 0u64..100_000, n in 1usize..20, c in -3.0f64..3.0) {
        let mut g = rng::stream(seed, 9);
        let m = Array2::from_shape_fn((n, n), |_| g.gen_range(-1.0..1.0));
        let s = spectral_norm(m.view()).unwrap();
        prop_assert!((spectral_norm(m.t()).unwrap() - s).abs() < 1e-9 * s.max(1.0));
        let scaled = spectral_norm((&m * c).view()).unwrap();
        prop_assert!((scaled - c.abs() * s).abs() < 1e-9 * s.max(1.0));
    }
}
