mod common;

use common::random_graph;
use decay_cluster::graph_io::{
    format_features, format_labels, format_result_json, format_step_csv, format_temporal_graph, load_labels,
    load_results, load_temporal_graph, read_features, read_labels, read_temporal_graph, save_features, save_labels,
    save_results, save_temporal_graph, FeatureSet, LabelSet, ResultFile,
};
use decay_cluster::metrics::{AccuracyMode, EvalReport, StepMetrics};
use decay_cluster::rng;
use decay_cluster::{Error, MembershipMatrix};
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

fn report(steps: usize) -> EvalReport {
    let per_step = (1..=steps)
        .map(|t| StepMetrics {
            step: t,
            relative_error: 0.1 + t as f64 * 1e-3,
            accuracy: 0.95 - t as f64 * 5e-4,
            macro_auc: 0.9,
            macro_f1: 0.8,
        })
        .collect();
    EvalReport::from_steps(per_step, AccuracyMode::Matched).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn graphs_round_trip_byte_for_byte(seed in 0u64..100_000, n in 1usize..25, steps in 1usize..6) {
        let mut g = rng::stream(seed, 0);
        let graph = random_graph(n, steps, 0.3, &mut g);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        save_temporal_graph(&graph, &path).unwrap();
        let loaded = load_temporal_graph(&path).unwrap();
        prop_assert_eq!(&loaded, &graph);
        let first = std::fs::read_to_string(&path).unwrap();
        prop_assert_eq!(format_temporal_graph(&loaded), first);
    }

    #[test]
    fn labels_round_trip_byte_for_byte(seed in 0u64..100_000, n in 1usize..25, steps in 1usize..5, k in 1usize..4) {
        let mut g = rng::stream(seed, 1);
        let mut draw = || MembershipMatrix::from_labels((0..n).map(|_| g.gen_range(0..k)).collect(), k).unwrap();
        let set = if steps == 1 { LabelSet::fixed(draw()) } else { LabelSet::dynamic((0..steps).map(|_| draw()).collect()) };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.txt");
        save_labels(&set, &path).unwrap();
        let loaded = load_labels(&path).unwrap();
        prop_assert_eq!(&loaded, &set);
        prop_assert_eq!(format_labels(&loaded).unwrap(), std::fs::read_to_string(&path).unwrap());
    }

    #[test]
    fn features_round_trip_byte_for_byte(seed in 0u64..100_000, n in 1usize..12, d in 1usize..5, steps in 0usize..3) {
        let mut g = rng::stream(seed, 2);
        let mats = (0..steps.max(1)).map(|_| Array2::from_shape_fn((n, d), |_| g.gen_range(-1e3..1e3))).collect();
        let set = FeatureSet { is_static: steps == 0, steps: mats };
        let text = format_features(&set).unwrap();
        let loaded = read_features(text.as_bytes()).unwrap();
        prop_assert_eq!(&loaded, &set);
        prop_assert_eq!(format_features(&loaded).unwrap(), text);
    }
}

#[test]
fn saved_graph_reads_back_through_a_reader() {
    let mut g = rng::stream(3, 0);
    let graph = random_graph(12, 4, 0.25, &mut g);
    let text = format_temporal_graph(&graph);
    let (loaded, header) = read_temporal_graph(text.as_bytes()).unwrap();
    assert_eq!(loaded, graph);
    assert_eq!((header.n, header.steps), (12, 4));
}

#[test]
fn fifty_step_report_has_fifty_rows() {
    let r = ResultFile::new("cluster", "decayed-spectral", Some(0), report(50));
    let csv = format_step_csv(r.report.per_step.as_deref().unwrap()).unwrap();
    assert_eq!(csv.lines().count(), 51);
    assert!(csv.starts_with("step,relative_error,accuracy,macro_auc,macro_f1\n"));

    let dir = tempfile::tempdir().unwrap();
    save_results(&r, dir.path(), "x.result").unwrap();
    assert_eq!(load_results(dir.path().join("x.result.json")).unwrap(), r);
    let again = format_result_json(&load_results(dir.path().join("x.result.json")).unwrap()).unwrap();
    assert_eq!(
        again,
        std::fs::read_to_string(dir.path().join("x.result.json")).unwrap()
    );
}

#[test]
fn non_finite_values_are_refused() {
    let mut r = ResultFile::new("cluster", "static-spectral", None, report(3));
    r.report.per_step.as_mut().unwrap()[1].macro_auc = f64::NAN;
    let dir = tempfile::tempdir().unwrap();
    assert!(save_results(&r, dir.path(), "bad").is_err());

    let mut r = ResultFile::new("cluster", "static-spectral", None, report(3));
    r.decay = Some(vec![vec![f64::INFINITY]]);
    assert!(format_result_json(&r).is_err());

    let set = FeatureSet {
        is_static: true,
        steps: vec![Array2::from_elem((2, 2), f64::NAN)],
    };
    assert!(format_features(&set).is_err());
}

#[test]
fn missing_files_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("absent.txt");
    assert!(matches!(load_temporal_graph(&path), Err(Error::Io { .. })));
    assert!(matches!(load_labels(&path), Err(Error::Io { .. })));
    assert!(matches!(load_results(&path), Err(Error::Io { .. })));
    assert!(save_features(
        &FeatureSet {
            is_static: true,
            steps: vec![Array2::zeros((1, 1))]
        },
        dir.path().join("no/such/dir/f.txt")
    )
    .is_err());
}

#[test]
fn garbage_is_a_parse_error() {
    assert!(read_labels("DCLB 1 3 2 1\n0 0 0\n0 1 7\n".as_bytes()).is_err());
    assert!(read_temporal_graph("1 0 x\n".as_bytes()).is_err());
    assert!(read_features("DCFT 1 2 1 0\n0 0 1.0\n".as_bytes()).is_err());
}
