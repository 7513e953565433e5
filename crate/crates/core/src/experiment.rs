//! Experiment runners: clustering over time, decay grid searches, λ
//! sweeps, neural training per step, and aggregation of saved results.
//!
//! Every job is deterministic given its seed. Independent jobs run on a
//! worker pool when the `parallel` feature is on; results are collected in
//! job order, so serial and parallel runs produce the same output.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dsbm::{connection_probability, generate_sequence, ConnectivityMatrix, DynamicGraph, SbmParams};
use crate::error::{Error, Result};
use crate::graph_io::{self, ResultFile};
use crate::metrics::{
    centered_moving_average, evaluate_split, evaluate_unsupervised, mean_and_standard_error, spectral_norm,
    AccuracyMode, EvalReport, StepMetrics,
};
use crate::neural::{self, ModelKind, Prepared, Split, Supervision, TrainConfig};
use crate::smoothing::{optimal_decay_matrix, optimal_decay_rate, smooth_sequence_scalar, DecayMatrix};
use crate::spectral::{decayed_spectral_cluster, Accumulation, Decay, SpectralOptions, WeightMode};

pub const CONFIG_VERSION: u32 = 1;

/// Runs `f` over `items`, on `jobs` threads when the `parallel` feature is
/// enabled (`0` means one per core). Output order follows `items`.
pub fn par_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if jobs != 1 && items.len() > 1 {
        use rayon::prelude::*;
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            return pool.install(|| items.par_iter().map(&f).collect());
        }
    }
    let _ = jobs;
    items.iter().map(f).collect()
}

fn collect<R>(results: Vec<Result<R>>) -> Result<Vec<R>> {
    results.into_iter().collect()
}

/// Where the decay rates of the "optimal" methods come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecaySource {
    /// The generating model's true parameters.
    #[default]
    Oracle,
    /// Parameters estimated from the training nodes' label history.
    Estimated,
}

impl DecaySource {
    pub fn label(self) -> &'static str {
        match self {
            DecaySource::Oracle => "ORACLE",
            DecaySource::Estimated => "ESTIMATED",
        }
    }
}

/// A spectral clustering method over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Method {
    /// Binary union of all snapshots so far.
    Static,
    /// Raw sum of all snapshots so far.
    StaticSum,
    Scalar {
        lambda: f64,
    },
    /// `min(1, √(nαε̄))` with `ε̄` the size-weighted mean change probability.
    OptimalScalar,
    /// Per-cluster optimal rates on the diagonal, 1 off it.
    OptimalMatrix {
        #[serde(default)]
        oracle_labels: bool,
    },
    Matrix {
        rows: Vec<Vec<f64>>,
        #[serde(default)]
        oracle_labels: bool,
    },
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Static => "spectral-static".into(),
            Method::StaticSum => "spectral-static-sum".into(),
            Method::Scalar { lambda } => format!("spectral-scalar-{lambda}"),
            Method::OptimalScalar => "spectral-optimal-scalar".into(),
            Method::OptimalMatrix { oracle_labels: false } => "spectral-optimal-matrix".into(),
            Method::OptimalMatrix { oracle_labels: true } => "spectral-optimal-matrix-oracle-labels".into(),
            Method::Matrix { oracle_labels, .. } => {
                format!("spectral-matrix{}", if *oracle_labels { "-oracle-labels" } else { "" })
            }
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    /// `static`, `static-sum`, `scalar=<λ>`, `optimal-scalar`,
    /// `optimal-matrix`, `optimal-matrix-oracle`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::param("method", format!("unknown method {s:?}"));
        Ok(match s {
            "static" => Method::Static,
            "static-sum" => Method::StaticSum,
            "optimal-scalar" => Method::OptimalScalar,
            "optimal-matrix" => Method::OptimalMatrix { oracle_labels: false },
            "optimal-matrix-oracle" => Method::OptimalMatrix { oracle_labels: true },
            _ => match s.strip_prefix("scalar=") {
                Some(v) => Method::Scalar {
                    lambda: v.parse().map_err(|_| bad())?,
                },
                None => return Err(bad()),
            },
        })
    }
}

/// Model parameters as seen by the decay formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayInputs {
    pub n: usize,
    pub alpha: f64,
    pub epsilon: Vec<f64>,
    pub cluster_weights: Vec<f64>,
    pub source: DecaySource,
}

/// Estimates `α` (within-cluster edge rate per step) and `ε_j` (per-step
/// exit frequency) from the label history of `nodes`.
pub fn estimate_parameters(graph: &DynamicGraph, nodes: &[usize], k: usize) -> Result<DecayInputs> {
    let mem = graph
        .memberships
        .as_ref()
        .ok_or_else(|| Error::param("graph", "estimation needs label history"))?;
    let mut in_set = vec![false; graph.n];
    for &i in nodes {
        in_set[i] = true;
    }
    let (mut edges, mut pairs) = (0.0, 0.0);
    for (t, snap) in graph.snapshots.iter().enumerate() {
        let sizes = nodes.iter().fold(vec![0usize; k], |mut acc, &i| {
            acc[mem[t].label(i)] += 1;
            acc
        });
        pairs += sizes.iter().map(|&s| (s * s.saturating_sub(1) / 2) as f64).sum::<f64>();
        edges += snap
            .edges()
            .iter()
            .filter(|&&(u, v)| in_set[u] && in_set[v] && mem[t].label(u) == mem[t].label(v))
            .count() as f64;
    }
    let (mut stay, mut leave) = (vec![0.0; k], vec![0.0; k]);
    for t in 1..mem.len() {
        for &i in nodes {
            let (a, b) = (mem[t - 1].label(i), mem[t].label(i));
            if a == b {
                stay[a] += 1.0;
            } else {
                leave[a] += 1.0;
            }
        }
    }
    let epsilon = (0..k)
        .map(|j| {
            let total = stay[j] + leave[j];
            if total > 0.0 {
                leave[j] / total
            } else {
                0.0
            }
        })
        .collect();
    let counts = nodes.iter().fold(vec![0.0; k], |mut acc, &i| {
        acc[mem[0].label(i)] += 1.0;
        acc
    });
    let total: f64 = counts.iter().sum();
    Ok(DecayInputs {
        n: graph.n,
        alpha: if pairs > 0.0 { edges / pairs } else { 0.0 },
        epsilon,
        cluster_weights: counts.iter().map(|c| c / total.max(1.0)).collect(),
        source: DecaySource::Estimated,
    })
}

pub fn oracle_parameters(graph: &DynamicGraph) -> Result<DecayInputs> {
    let p = graph
        .params
        .as_ref()
        .ok_or_else(|| Error::param("graph", "oracle decay needs the generating parameters"))?;
    Ok(DecayInputs {
        n: p.n,
        alpha: p.alpha,
        epsilon: p.epsilon.clone(),
        cluster_weights: p.p.clone(),
        source: DecaySource::Oracle,
    })
}

/// A method turned into a concrete decay, plus the rates it uses.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedMethod {
    pub name: String,
    pub decay: Decay,
    pub rates: Option<Array2<f64>>,
    pub source: Option<DecaySource>,
}

pub fn resolve_method(method: &Method, k: usize, inputs: Option<&DecayInputs>) -> Result<ResolvedMethod> {
    let need = || inputs.ok_or_else(|| Error::param("method", "optimal decay needs model parameters"));
    let mode = |oracle: bool| if oracle { WeightMode::Oracle } else { WeightMode::PlugIn };
    let (decay, rates, source) = match method {
        Method::Static => (Decay::None(Accumulation::Binary), None, None),
        Method::StaticSum => (Decay::None(Accumulation::Sum), None, None),
        Method::Scalar { lambda } => (Decay::Scalar(*lambda), Some(Array2::from_elem((1, 1), *lambda)), None),
        Method::OptimalScalar => {
            let d = need()?;
            let eps: f64 = d.epsilon.iter().zip(&d.cluster_weights).map(|(e, w)| e * w).sum();
            let l = optimal_decay_rate(d.n, d.alpha, eps)?;
            (Decay::Scalar(l), Some(Array2::from_elem((1, 1), l)), Some(d.source))
        }
        Method::OptimalMatrix { oracle_labels } => {
            let d = need()?;
            if d.epsilon.len() != k {
                return Err(Error::shape("optimal decay", k, d.epsilon.len()));
            }
            let m = optimal_decay_matrix(d.n, d.alpha, &d.epsilon)?;
            let rates = m.matrix().clone();
            (
                Decay::Matrix {
                    decay: m,
                    mode: mode(*oracle_labels),
                },
                Some(rates),
                Some(d.source),
            )
        }
        Method::Matrix { rows, oracle_labels } => {
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let m = Array2::from_shape_vec((rows.len(), rows.first().map_or(0, Vec::len)), flat)
                .map_err(|e| Error::param("decay rows", e.to_string()))?;
            let dm = DecayMatrix::new(m.clone())?;
            (
                Decay::Matrix {
                    decay: dm,
                    mode: mode(*oracle_labels),
                },
                Some(m),
                None,
            )
        }
    };
    Ok(ResolvedMethod {
        name: method.name(),
        decay,
        rates,
        source,
    })
}

/// Clusters every step and scores it against the ground truth.
pub fn run_cluster(
    graph: &DynamicGraph,
    decay: &Decay,
    k: usize,
    seed: u64,
    opts: &SpectralOptions,
) -> Result<EvalReport> {
    let truth = graph
        .memberships
        .as_ref()
        .ok_or_else(|| Error::param("graph", "evaluation needs ground-truth labels"))?;
    let fit = decayed_spectral_cluster(graph, decay, k, seed, opts)?;
    let steps = fit
        .estimates
        .iter()
        .zip(&fit.scores)
        .zip(truth)
        .enumerate()
        .map(|(t, ((est, sc), th))| evaluate_unsupervised(t + 1, est, sc.view(), th))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_steps(steps, AccuracyMode::Matched)
}

pub fn rates_to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Grid search settings: candidate diagonal values, fixed off-diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub values: Vec<f64>,
    pub off_diagonal: f64,
    pub oracle_labels: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            values: (1..=9).map(|i| f64::from(i) / 10.0).collect(),
            off_diagonal: 1.0,
            oracle_labels: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub diagonal: Vec<f64>,
    /// Time-averaged matched accuracy, mean over graphs.
    pub accuracy: f64,
    pub per_graph: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub k: usize,
    pub values: Vec<f64>,
    pub off_diagonal: f64,
    /// `true` for `K ≠ 2`: cells vary one diagonal entry at a time, the
    /// others held at their optimal values.
    pub marginal: bool,
    pub cells: Vec<GridCell>,
    /// Index of the highest-accuracy cell (first on ties).
    pub best: usize,
}

impl GridResult {
    pub fn best_cell(&self) -> &GridCell {
        &self.cells[self.best]
    }
}

/// Accuracy over a grid of decay-matrix diagonals, averaged over `graphs`.
/// `K = 2` enumerates all pairs (first entry outer); other `K` sweep each
/// diagonal entry separately around `base` (the optimal diagonal).
pub fn grid_search(
    graphs: &[DynamicGraph],
    k: usize,
    spec: &GridSpec,
    base: Option<&[f64]>,
    seed: u64,
    opts: &SpectralOptions,
    jobs: usize,
) -> Result<GridResult> {
    if spec.values.is_empty() || graphs.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let marginal = k != 2;
    let diagonals: Vec<Vec<f64>> = if marginal {
        let base = base.ok_or_else(|| Error::param("grid", "marginal sweeps need a base diagonal"))?;
        if base.len() != k {
            return Err(Error::shape("grid base", k, base.len()));
        }
        (0..k)
            .flat_map(|j| {
                spec.values.iter().map(move |&v| {
                    let mut d = base.to_vec();
                    d[j] = v;
                    d
                })
            })
            .collect()
    } else {
        spec.values
            .iter()
            .flat_map(|&a| spec.values.iter().map(move |&b| vec![a, b]))
            .collect()
    };
    let mode = if spec.oracle_labels {
        WeightMode::Oracle
    } else {
        WeightMode::PlugIn
    };
    let jobs_list: Vec<(usize, usize)> = (0..diagonals.len())
        .flat_map(|c| (0..graphs.len()).map(move |g| (c, g)))
        .collect();
    let accs = collect(par_map(&jobs_list, jobs, |&(c, g)| {
        let d = &diagonals[c];
        let m = Array2::from_shape_fn((k, k), |(i, j)| if i == j { d[i] } else { spec.off_diagonal });
        let decay = Decay::Matrix {
            decay: DecayMatrix::new(m)?,
            mode,
        };
        Ok(run_cluster(&graphs[g], &decay, k, seed, opts)?.accuracy)
    }))?;
    let cells: Vec<GridCell> = diagonals
        .into_iter()
        .enumerate()
        .map(|(c, diagonal)| {
            let per_graph = accs[c * graphs.len()..(c + 1) * graphs.len()].to_vec();
            GridCell {
                diagonal,
                accuracy: per_graph.iter().sum::<f64>() / per_graph.len() as f64,
                per_graph,
            }
        })
        .collect();
    let mut best = 0;
    for (i, c) in cells.iter().enumerate() {
        if c.accuracy > cells[best].accuracy {
            best = i;
        }
    }
    Ok(GridResult {
        k,
        values: spec.values.clone(),
        off_diagonal: spec.off_diagonal,
        marginal,
        cells,
        best,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda: f64,
    /// `‖Â_T − P_T‖₂`.
    pub norm: f64,
    /// Time-averaged matched spectral accuracy, when requested.
    pub accuracy: Option<f64>,
    /// Test accuracy of a GCN on the smoothed `Â_T`, when requested.
    pub gcn_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub n: usize,
    pub alpha: f64,
    pub seed: u64,
    pub points: Vec<SweepPoint>,
}

impl SweepCurve {
    /// λ of the smallest norm (first on ties).
    pub fn argmin_norm(&self) -> f64 {
        let mut best = &self.points[0];
        for p in &self.points {
            if p.norm < best.norm {
                best = p;
            }
        }
        best.lambda
    }

    /// λ of the highest spectral accuracy, if computed.
    pub fn argmax_accuracy(&self) -> Option<f64> {
        let mut best: Option<&SweepPoint> = None;
        for p in &self.points {
            let a = p.accuracy?;
            if best.is_none_or(|b| a > b.accuracy.unwrap_or(f64::NEG_INFINITY)) {
                best = Some(p);
            }
        }
        best.map(|p| p.lambda)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub lambdas: Vec<f64>,
    /// `(n, alpha)` variants of the base configuration.
    pub variants: Vec<(usize, f64)>,
    pub accuracy: bool,
    pub gcn: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            lambdas: (1..=20).map(|i| f64::from(i) / 20.0).collect(),
            variants: vec![(100, 0.02), (200, 0.02), (400, 0.02)],
            accuracy: true,
            gcn: false,
        }
    }
}

fn sweep_one(
    graph: &DynamicGraph,
    lambdas: &[f64],
    spec: &SweepSpec,
    train: &TrainConfig,
    opts: &SpectralOptions,
) -> Result<Vec<SweepPoint>> {
    let p = graph.params.as_ref().expect("generated graph");
    let b = ConnectivityMatrix::degenerate(p.alpha, p.tau, p.k)?;
    let last = graph.membership(graph.steps() - 1).expect("generated graph");
    let target = connection_probability(last, &b)?;
    let split = neural::split_nodes(graph.n, &train.split, train.seed)?;
    lambdas
        .iter()
        .map(|&l| {
            let smoothed = smooth_sequence_scalar(&graph.snapshots, l)?;
            let norm = spectral_norm((&smoothed.matrix - &target).view())?;
            let accuracy = if spec.accuracy {
                Some(run_cluster(graph, &Decay::Scalar(l), p.k, p.seed, opts)?.accuracy)
            } else {
                None
            };
            let gcn_accuracy = if spec.gcn {
                let prep = Prepared::fixed(graph, &smoothed.matrix)?;
                let sup = Supervision::new(last, split.train.clone());
                let mut model = neural::NeuralModel::new(ModelKind::StaticGcn, p.k, prep.input_dim(), train)?;
                model.fit(&prep, &sup, train.iterations)?;
                let pred = model.predict_prepared(&prep)?;
                Some(evaluate_split(graph.steps(), &pred.theta_hat, pred.scores.view(), last, &split.test)?.accuracy)
            } else {
                None
            };
            Ok(SweepPoint {
                lambda: l,
                norm,
                accuracy,
                gcn_accuracy,
            })
        })
        .collect()
}

/// For each variant and seed, generates a graph and evaluates every λ.
pub fn sweep_lambda(
    base: &SbmParams,
    spec: &SweepSpec,
    seeds: &[u64],
    train: &TrainConfig,
    opts: &SpectralOptions,
    jobs: usize,
) -> Result<Vec<SweepCurve>> {
    if spec.lambdas.is_empty() || spec.variants.is_empty() || seeds.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let work: Vec<((usize, f64), u64)> = spec
        .variants
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    collect(par_map(&work, jobs, |&((n, alpha), seed)| {
        let params = SbmParams {
            n,
            alpha,
            seed,
            ..base.clone()
        };
        let graph = generate_sequence(&params)?;
        let train = TrainConfig { seed, ..train.clone() };
        Ok(SweepCurve {
            n,
            alpha,
            seed,
            points: sweep_one(&graph, &spec.lambdas, spec, &train, opts)?,
        })
    }))
}

/// Test-split metrics of one neural model trained separately at each of
/// `steps` (1-based) on the graph truncated there, with that step's
/// labels.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralRun {
    pub report: EvalReport,
    /// Learned decay rates after training on the last evaluated step.
    pub final_decay: Option<Array2<f64>>,
}

pub fn run_neural(
    graph: &DynamicGraph,
    kind: ModelKind,
    config: &TrainConfig,
    split: &Split,
    steps: &[usize],
) -> Result<NeuralRun> {
    if steps.is_empty() {
        return Err(Error::param("steps", "nothing to evaluate"));
    }
    let mut per_step = Vec::with_capacity(steps.len());
    let mut final_decay = None;
    for &t in steps {
        if t == 0 || t > graph.steps() {
            return Err(Error::param("steps", format!("step {t} outside 1..={}", graph.steps())));
        }
        let theta = graph
            .membership(t - 1)
            .ok_or_else(|| Error::param("graph", "training needs ground-truth labels"))?;
        let sub = graph.truncated(t);
        let sup = Supervision::new(theta, split.train.clone());
        let prep = Prepared::new(&sub, kind, config.route)?;
        let mut model = neural::NeuralModel::new(kind, theta.k(), prep.input_dim(), config)?;
        model.fit(&prep, &sup, config.iterations)?;
        let pred = model.predict_prepared(&prep)?;
        per_step.push(evaluate_split(
            t,
            &pred.theta_hat,
            pred.scores.view(),
            theta,
            &split.test,
        )?);
        final_decay = model.decay_rates();
    }
    Ok(NeuralRun {
        report: EvalReport::from_steps(per_step, AccuracyMode::Split)?,
        final_decay,
    })
}

/// Aggregate of one method over several saved runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub accuracy_mode: AccuracyMode,
    pub runs: usize,
    pub accuracy: (f64, f64),
    pub macro_auc: (f64, f64),
    pub macro_f1: (f64, f64),
    pub relative_error: (f64, f64),
}

/// Mean and standard error per method, methods in name order.
pub fn summarize(results: &[ResultFile]) -> Result<Vec<SummaryRow>> {
    if let Some(r) = results.iter().find(|r| r.schema_version != results[0].schema_version) {
        return Err(Error::SchemaMismatch(format!(
            "mixed schema versions {} and {}",
            results[0].schema_version, r.schema_version
        )));
    }
    let mut groups: BTreeMap<&str, Vec<&ResultFile>> = BTreeMap::new();
    for r in results {
        groups.entry(r.method.as_str()).or_default().push(r);
    }
    for (method, rs) in &groups {
        if rs.iter().any(|r| r.report.accuracy_mode != rs[0].report.accuracy_mode) {
            return Err(Error::SchemaMismatch(format!(
                "{method}: runs use different accuracy modes"
            )));
        }
    }
    Ok(groups
        .into_iter()
        .map(|(method, rs)| {
            let stat = |f: fn(&EvalReport) -> f64| {
                let xs: Vec<f64> = rs.iter().map(|r| f(&r.report)).collect();
                mean_and_standard_error(&xs)
            };
            SummaryRow {
                method: method.to_string(),
                accuracy_mode: rs[0].report.accuracy_mode,
                runs: rs.len(),
                accuracy: stat(|r| r.accuracy),
                macro_auc: stat(|r| r.macro_auc),
                macro_f1: stat(|r| r.macro_f1),
                relative_error: stat(|r| r.relative_error),
            }
        })
        .collect())
}

/// Per-method mean accuracy at each step across runs, smoothed with a
/// centred 5-point average.
pub fn accuracy_series(results: &[ResultFile]) -> Vec<(String, Vec<(usize, f64)>)> {
    let mut groups: BTreeMap<&str, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in results {
        for s in r.report.per_step.iter().flatten() {
            groups
                .entry(r.method.as_str())
                .or_default()
                .entry(s.step)
                .or_default()
                .push(s.accuracy);
        }
    }
    groups
        .into_iter()
        .map(|(m, steps)| {
            let xs: Vec<usize> = steps.keys().copied().collect();
            let means: Vec<f64> = steps.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
            let smooth = centered_moving_average(&means, 2);
            (m.to_string(), xs.into_iter().zip(smooth).collect())
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "accuracy_mode",
        "runs",
        "accuracy_mean",
        "accuracy_se",
        "macro_auc_mean",
        "macro_auc_se",
        "macro_f1_mean",
        "macro_f1_se",
        "relative_error_mean",
        "relative_error_se",
    ])
    .map_err(|e| Error::Serialization(e.to_string()))?;
    for r in rows {
        let mode = match r.accuracy_mode {
            AccuracyMode::Matched => "matched",
            AccuracyMode::Split => "split",
        };
        let mut rec = vec![r.method.clone(), mode.to_string(), r.runs.to_string()];
        for (m, s) in [r.accuracy, r.macro_auc, r.macro_f1, r.relative_error] {
            if !m.is_finite() || !s.is_finite() {
                return Err(Error::Serialization(format!("non-finite summary for {}", r.method)));
            }
            rec.push(m.to_string());
            rec.push(s.to_string());
        }
        w.write_record(&rec).map_err(|e| Error::Serialization(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
}

/// Input files of a user-supplied dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataFiles {
    pub edges: PathBuf,
    pub labels: Option<PathBuf>,
    pub features: Option<PathBuf>,
}

pub fn load_dataset(files: &DataFiles) -> Result<DynamicGraph> {
    let mut graph = graph_io::load_temporal_graph(&files.edges)?;
    if let Some(l) = &files.labels {
        let labels = graph_io::load_labels(l)?;
        let steps = labels.expand(graph.steps())?;
        graph = graph.with_memberships(steps)?;
    }
    if let Some(f) = &files.features {
        let feats = graph_io::load_features(f)?;
        let last = feats.last().clone();
        if last.nrows() != graph.n {
            return Err(Error::shape("features", graph.n, last.nrows()));
        }
        graph.features = Some(last);
    }
    Ok(graph)
}

/// Mean of per-step metrics across runs with identical step lists.
pub fn average_steps(runs: &[Vec<StepMetrics>]) -> Result<Vec<StepMetrics>> {
    let first = runs.first().ok_or_else(|| Error::param("runs", "empty"))?;
    let m = runs.len() as f64;
    (0..first.len())
        .map(|i| {
            if runs
                .iter()
                .any(|r| r.len() != first.len() || r[i].step != first[i].step)
            {
                return Err(Error::param("runs", "step lists differ"));
            }
            let avg = |f: fn(&StepMetrics) -> f64| runs.iter().map(|r| f(&r[i])).sum::<f64>() / m;
            Ok(StepMetrics {
                step: first[i].step,
                relative_error: avg(|s| s.relative_error),
                accuracy: avg(|s| s.accuracy),
                macro_auc: avg(|s| s.macro_auc),
                macro_f1: avg(|s| s.macro_f1),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> DynamicGraph {
        let p = SbmParams {
            n: 40,
            steps: 6,
            alpha: 0.2,
            ..SbmParams::reference(seed)
        };
        generate_sequence(&p).unwrap()
    }

    #[test]
    fn method_names_parse() {
        assert_eq!("scalar=0.3".parse::<Method>().unwrap(), Method::Scalar { lambda: 0.3 });
        assert!("bogus".parse::<Method>().is_err());
    }

    #[test]
    fn one_by_one_grid() {
        let g = vec![small(1)];
        let spec = GridSpec {
            values: vec![0.5],
            ..GridSpec::default()
        };
        let r = grid_search(&g, 2, &spec, None, 0, &SpectralOptions::default(), 1).unwrap();
        assert_eq!(r.cells.len(), 1);
        assert_eq!(r.best, 0);
    }

    #[test]
    fn unit_cell_matches_per_snapshot_clustering() {
        let g = small(2);
        let spec = GridSpec {
            values: vec![1.0],
            ..GridSpec::default()
        };
        let opts = SpectralOptions::default();
        let r = grid_search(std::slice::from_ref(&g), 2, &spec, None, 3, &opts, 1).unwrap();
        let direct = run_cluster(&g, &Decay::Scalar(1.0), 2, 3, &opts).unwrap();
        assert_eq!(r.cells[0].accuracy, direct.accuracy);
    }

    #[test]
    fn empty_grid() {
        let g = vec![small(1)];
        let spec = GridSpec {
            values: vec![],
            ..GridSpec::default()
        };
        assert!(matches!(
            grid_search(&g, 2, &spec, None, 0, &SpectralOptions::default(), 1),
            Err(Error::EmptyGrid)
        ));
    }

    #[test]
    fn estimated_parameters_are_close() {
        let p = SbmParams {
            n: 400,
            steps: 40,
            ..SbmParams::reference(7)
        };
        let g = generate_sequence(&p).unwrap();
        let nodes: Vec<usize> = (0..400).collect();
        let d = estimate_parameters(&g, &nodes, 2).unwrap();
        assert!((d.alpha - 0.02).abs() < 0.003, "{}", d.alpha);
        assert!((d.epsilon[0] - 0.05).abs() < 0.02);
        assert!((d.epsilon[1] - 0.1).abs() < 0.03);
    }
}
