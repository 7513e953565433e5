//! WebAssembly bindings for the browser demo.
//!
//! Each exported function generates a two-cluster dynamic SBM from the
//! given parameters and returns its results as a JSON string. The pure
//! functions behind the exports are public so they can be tested natively.

use decay_cluster::dsbm::{generate_sequence, SbmParams};
use decay_cluster::experiment::{
    grid_search, oracle_parameters, resolve_method, run_cluster, sweep_lambda, GridSpec, Method, SweepSpec,
};
use decay_cluster::neural::TrainConfig;
use decay_cluster::smoothing::optimal_decay_matrix;
use decay_cluster::spectral::SpectralOptions;
use decay_cluster::Result;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Model settings shared by all demo operations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoParams {
    pub n: usize,
    pub alpha: f64,
    pub tau: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub steps: usize,
    pub seed: u64,
}

impl DemoParams {
    fn sbm(&self) -> SbmParams {
        SbmParams {
            n: self.n,
            alpha: self.alpha,
            tau: self.tau,
            epsilon: vec![self.eps1, self.eps2],
            steps: self.steps,
            ..SbmParams::reference(self.seed)
        }
    }
}

#[derive(Debug, Serialize)]
pub struct NormCurve {
    pub lambdas: Vec<f64>,
    pub norms: Vec<f64>,
    pub argmin: f64,
    /// Per-cluster optimal rates from the model parameters.
    pub optimal: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Heatmap {
    pub values: Vec<f64>,
    /// `accuracy[i][j]` for `Λ₁₁ = values[i]`, `Λ₂₂ = values[j]`.
    pub accuracy: Vec<Vec<f64>>,
    pub best: (f64, f64),
    pub optimal: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Series {
    pub method: String,
    pub accuracy: Vec<f64>,
    pub mean: f64,
}

fn optimal_diagonal(p: &DemoParams) -> Result<Vec<f64>> {
    let m = optimal_decay_matrix(p.n, p.alpha, &[p.eps1, p.eps2])?;
    Ok(m.matrix().diag().to_vec())
}

/// `‖Â_T − P_T‖₂` at `points` evenly spaced λ in `(0, 1]`.
pub fn norm_curve(p: &DemoParams, points: usize) -> Result<NormCurve> {
    let lambdas: Vec<f64> = (1..=points.max(2)).map(|i| i as f64 / points.max(2) as f64).collect();
    let spec = SweepSpec {
        lambdas: lambdas.clone(),
        variants: vec![(p.n, p.alpha)],
        accuracy: false,
        gcn: false,
    };
    let curves = sweep_lambda(
        &p.sbm(),
        &spec,
        &[p.seed],
        &TrainConfig::default(),
        &SpectralOptions::default(),
        1,
    )?;
    let curve = &curves[0];
    Ok(NormCurve {
        lambdas,
        norms: curve.points.iter().map(|q| q.norm).collect(),
        argmin: curve.argmin_norm(),
        optimal: optimal_diagonal(p)?,
    })
}

/// Time-averaged accuracy over a grid of decay-matrix diagonals, using
/// the true labels to weight the smoothing.
pub fn decay_heatmap(p: &DemoParams, values: &[f64]) -> Result<Heatmap> {
    let graph = generate_sequence(&p.sbm())?;
    let spec = GridSpec {
        values: values.to_vec(),
        ..GridSpec::default()
    };
    let grid = grid_search(&[graph], 2, &spec, None, p.seed, &SpectralOptions::default(), 1)?;
    let accuracy = grid
        .cells
        .chunks(values.len())
        .map(|row| row.iter().map(|c| c.accuracy).collect())
        .collect();
    let best = grid.best_cell();
    Ok(Heatmap {
        values: values.to_vec(),
        accuracy,
        best: (best.diagonal[0], best.diagonal[1]),
        optimal: optimal_diagonal(p)?,
    })
}

/// Matched accuracy at every step for static, scalar-optimal and
/// matrix-optimal clustering.
pub fn accuracy_over_time(p: &DemoParams) -> Result<Vec<Series>> {
    let graph = generate_sequence(&p.sbm())?;
    let inputs = oracle_parameters(&graph)?;
    let methods = [
        Method::Static,
        Method::OptimalScalar,
        Method::OptimalMatrix { oracle_labels: true },
        Method::OptimalMatrix { oracle_labels: false },
    ];
    methods
        .iter()
        .map(|m| {
            let r = resolve_method(m, 2, Some(&inputs))?;
            let report = run_cluster(&graph, &r.decay, 2, p.seed, &SpectralOptions::default())?;
            Ok(Series {
                method: r.name,
                accuracy: report.per_step.iter().flatten().map(|s| s.accuracy).collect(),
                mean: report.accuracy,
            })
        })
        .collect()
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[allow(clippy::too_many_arguments)]
fn params(n: u32, alpha: f64, tau: f64, eps1: f64, eps2: f64, steps: u32, seed: u32) -> DemoParams {
    DemoParams {
        n: n as usize,
        alpha,
        tau,
        eps1,
        eps2,
        steps: steps as usize,
        seed: u64::from(seed),
    }
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen(js_name = normCurve)]
pub fn norm_curve_js(
    n: u32,
    alpha: f64,
    tau: f64,
    eps1: f64,
    eps2: f64,
    steps: u32,
    seed: u32,
    points: u32,
) -> std::result::Result<String, JsError> {
    to_js(norm_curve(
        &params(n, alpha, tau, eps1, eps2, steps, seed),
        points as usize,
    ))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen(js_name = decayHeatmap)]
pub fn decay_heatmap_js(
    n: u32,
    alpha: f64,
    tau: f64,
    eps1: f64,
    eps2: f64,
    steps: u32,
    seed: u32,
    values: Vec<f64>,
) -> std::result::Result<String, JsError> {
    to_js(decay_heatmap(&params(n, alpha, tau, eps1, eps2, steps, seed), &values))
}

#[wasm_bindgen(js_name = accuracyOverTime)]
pub fn accuracy_over_time_js(
    n: u32,
    alpha: f64,
    tau: f64,
    eps1: f64,
    eps2: f64,
    steps: u32,
    seed: u32,
) -> std::result::Result<String, JsError> {
    to_js(accuracy_over_time(&params(n, alpha, tau, eps1, eps2, steps, seed)))
}
