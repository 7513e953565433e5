use decay_cluster::dsbm::{connection_probability, generate_sequence, ConnectivityMatrix, SbmParams};
use decay_cluster::experiment::{grid_search, par_map, summarize, sweep_lambda, GridSpec, SweepSpec};
use decay_cluster::graph_io::ResultFile;
use decay_cluster::metrics::{spectral_norm, AccuracyMode, EvalReport, StepMetrics};
use decay_cluster::neural::TrainConfig;
use decay_cluster::spectral::SpectralOptions;

fn small(seed: u64) -> SbmParams {
    SbmParams {
        n: 60,
        alpha: 0.2,
        tau: 0.1,
        steps: 6,
        ..SbmParams::reference(seed)
    }
}

#[test]
fn par_map_keeps_order() {
    let xs: Vec<u64> = (0..100).collect();
    let serial = par_map(&xs, 1, |x| x * x);
    assert_eq!(par_map(&xs, 4, |x| x * x), serial);
    assert_eq!(serial[37], 37 * 37);
}

#[test]
fn parallel_grid_equals_serial_grid() {
    let graphs: Vec<_> = (0..3).map(|s| generate_sequence(&small(s)).unwrap()).collect();
    let spec = GridSpec {
        values: vec![0.2, 0.5, 0.8],
        ..GridSpec::default()
    };
    let opts = SpectralOptions::default();
    let a = grid_search(&graphs, 2, &spec, None, 7, &opts, 1).unwrap();
    let b = grid_search(&graphs, 2, &spec, None, 7, &opts, 4).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.cells.len(), 9);
    let best = a.best_cell().accuracy;
    assert!(a.cells.iter().all(|c| c.accuracy <= best));
}

#[test]
fn unit_lambda_norm_is_the_last_snapshot_error() {
    let base = small(3);
    let spec = SweepSpec {
        lambdas: vec![1.0],
        variants: vec![(base.n, base.alpha)],
        accuracy: false,
        gcn: false,
    };
    let curves = sweep_lambda(
        &base,
        &spec,
        &[3],
        &TrainConfig::default(),
        &SpectralOptions::default(),
        1,
    )
    .unwrap();
    let g = generate_sequence(&base).unwrap();
    let b = ConnectivityMatrix::degenerate(base.alpha, base.tau, base.k).unwrap();
    let p = connection_probability(g.membership(base.steps - 1).unwrap(), &b).unwrap();
    let want = spectral_norm((g.snapshots.last().unwrap().to_dense() - p).view()).unwrap();
    assert!((curves[0].points[0].norm - want).abs() < 1e-9);
    assert_eq!(curves[0].argmin_norm(), 1.0);
    assert_eq!(curves[0].argmax_accuracy(), None);
}

#[test]
fn summary_reports_mean_and_standard_error() {
    let accs = [0.6, 0.7, 0.8, 0.9];
    let results: Vec<ResultFile> = accs
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let step = StepMetrics {
                step: 1,
                relative_error: 2.0 * (1.0 - a),
                accuracy: a,
                macro_auc: 0.5,
                macro_f1: a,
            };
            let report = EvalReport::from_steps(vec![step], AccuracyMode::Matched).unwrap();
            ResultFile::new("cluster", "static-spectral", Some(i as u64), report)
        })
        .collect();
    let rows = summarize(&results).unwrap();
    assert_eq!(rows.len(), 1);
    let (mean, se) = rows[0].accuracy;
    let sd = (accs.iter().map(|a| (a - 0.75f64).powi(2)).sum::<f64>() / 3.0).sqrt();
    assert!((mean - 0.75).abs() < 1e-12);
    assert!((se - sd / 2.0).abs() < 1e-12);
    assert_eq!(rows[0].macro_auc, (0.5, 0.0));
}

#[test]
fn summary_refuses_mixed_accuracy_modes() {
    let step = StepMetrics {
        step: 1,
        relative_error: 0.2,
        accuracy: 0.9,
        macro_auc: 0.9,
        macro_f1: 0.9,
    };
    let results: Vec<ResultFile> = [AccuracyMode::Matched, AccuracyMode::Split]
        .into_iter()
        .map(|mode| {
            let report = EvalReport::from_steps(vec![step], mode).unwrap();
            ResultFile::new("train", "rnngcn", Some(0), report)
        })
        .collect();
    assert!(summarize(&results).is_err());
    assert!(summarize(&results[..1]).is_ok());
}
