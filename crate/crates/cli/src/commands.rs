use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use decay_cluster::dsbm::{generate_sequence, DynamicGraph};
use decay_cluster::experiment::{
    self, estimate_parameters, load_dataset, oracle_parameters, par_map, rates_to_rows, resolve_method, run_cluster,
    DecaySource, GridResult, Method, SweepCurve,
};
use decay_cluster::graph_io::{self, LabelSet, ResultFile};
use decay_cluster::metrics::{evaluate_split, AccuracyMode, EvalReport, StepMetrics};
use decay_cluster::neural::{self, Checkpoint, ModelKind, NeuralModel, Prepared, Supervision, TrainConfig};
use decay_cluster::spectral::SpectralOptions;
use decay_cluster::svg::{self, Series};
use decay_cluster::Error;
use log::info;
use serde::{Deserialize, Serialize};

use crate::config::{Evaluate, ExperimentConfig};
use crate::AppError;

type Result<T> = std::result::Result<T, AppError>;

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, source: std::io::Error) -> AppError {
    AppError::Core(Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn seed_dir(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    cfg.out.join(format!("seed-{seed}"))
}

/// Writes the resolved config next to the results and appends a line to
/// the run log, the only file that carries a timestamp.
fn record_run(cfg: &ExperimentConfig, command: &str) -> Result<()> {
    write_file(&cfg.out.join("config.toml"), &cfg.to_toml()?)?;
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let path = cfg.out.join("run.log");
    let mut log = std::fs::read_to_string(&path).unwrap_or_default();
    let _ = writeln!(log, "{now} {command} seeds={:?}", cfg.seeds);
    write_file(&path, &log)
}

fn graph_for(cfg: &ExperimentConfig, seed: u64) -> Result<DynamicGraph> {
    match &cfg.data {
        Some(files) => Ok(load_dataset(files)?),
        None => Ok(generate_sequence(&cfg.model.params(seed))?),
    }
}

fn cluster_count(cfg: &ExperimentConfig, graph: &DynamicGraph) -> usize {
    graph.k().unwrap_or(cfg.model.k)
}

fn collect<T>(items: Vec<Result<T>>) -> Result<Vec<T>> {
    items.into_iter().collect()
}

pub fn generate(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.data.is_some() {
        return Err(AppError::Usage("generate does not take input data".into()));
    }
    record_run(cfg, "generate")?;
    for &seed in &cfg.seeds {
        let graph = generate_sequence(&cfg.model.params(seed))?;
        let dir = seed_dir(cfg, seed);
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        graph_io::save_temporal_graph(&graph, dir.join("edges.txt"))?;
        let labels = LabelSet::dynamic(graph.memberships.clone().expect("generated graph"));
        graph_io::save_labels(&labels, dir.join("labels.txt"))?;
        println!(
            "seed {seed}: {} snapshots, {} edges, {} distinct pairs -> {}",
            graph.steps(),
            graph.snapshots.iter().map(|s| s.edge_count()).sum::<usize>(),
            graph.unique_edge_count(),
            dir.display()
        );
    }
    Ok(())
}

fn cluster_one(cfg: &ExperimentConfig, method: &Method, seed: u64) -> Result<ResultFile> {
    let graph = graph_for(cfg, seed)?;
    let k = cluster_count(cfg, &graph);
    let needs_inputs = matches!(method, Method::OptimalScalar | Method::OptimalMatrix { .. });
    let inputs = if !needs_inputs {
        None
    } else {
        Some(match cfg.decay.source {
            DecaySource::Oracle => oracle_parameters(&graph)?,
            DecaySource::Estimated => {
                let split = neural::split_nodes(graph.n, &cfg.train.split, seed)?;
                estimate_parameters(&graph, &split.train, k)?
            }
        })
    };
    let resolved = resolve_method(method, k, inputs.as_ref())?;
    info!("seed {seed}: clustering with {}", resolved.name);
    let report = run_cluster(&graph, &resolved.decay, k, seed, &SpectralOptions::default())?;
    let mut result = ResultFile::new("cluster", &resolved.name, Some(seed), report);
    result.decay = resolved.rates.as_ref().map(rates_to_rows);
    result.decay_source = resolved.source.map(|s| s.label().to_string());
    if matches!(
        method,
        Method::OptimalMatrix { oracle_labels: true }
            | Method::Matrix {
                oracle_labels: true,
                ..
            }
    ) {
        result
            .notes
            .push("pair decay rates use the true labels at each step".into());
    }
    if resolved.source == Some(DecaySource::Estimated) {
        result
            .notes
            .push("alpha and epsilon estimated from the training nodes' label history".into());
    }
    Ok(result)
}

pub fn cluster(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.method.model().is_some() {
        return Err(AppError::Usage("neural methods are run with `train`".into()));
    }
    let method = cfg.spectral_method()?;
    record_run(cfg, "cluster")?;
    let results = collect(par_map(&cfg.seeds, cfg.jobs, |&seed| cluster_one(cfg, &method, seed)))?;
    for (seed, r) in cfg.seeds.iter().zip(&results) {
        let dir = seed_dir(cfg, *seed);
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        graph_io::save_results(r, &dir, &format!("{}.result", r.method))?;
        println!(
            "seed {seed}: {} accuracy {:.4} relative error {:.4} auc {:.4} f1 {:.4}",
            r.method, r.report.accuracy, r.report.relative_error, r.report.macro_auc, r.report.macro_f1
        );
    }
    Ok(())
}

fn grid_csv(g: &GridResult) -> String {
    let mut s = String::new();
    let cols: Vec<String> = (1..=g.k).map(|i| format!("lambda_{i}{i}")).collect();
    let _ = writeln!(s, "{},accuracy", cols.join(","));
    for c in &g.cells {
        let d: Vec<String> = c.diagonal.iter().map(f64::to_string).collect();
        let _ = writeln!(s, "{},{}", d.join(","), c.accuracy);
    }
    s
}

fn grid_svg(g: &GridResult) -> String {
    let v = &g.values;
    if !g.marginal {
        let values: Vec<Vec<f64>> = v
            .iter()
            .enumerate()
            .map(|(r, _)| (0..v.len()).map(|c| g.cells[r * v.len() + c].accuracy).collect())
            .collect();
        return svg::heatmap("Accuracy over decay matrix diagonals", "Λ11", "Λ22", v, v, &values);
    }
    let series: Vec<Series> = (0..g.k)
        .map(|j| Series {
            name: format!("Λ{0}{0}", j + 1),
            points: v
                .iter()
                .enumerate()
                .map(|(i, &x)| (x, g.cells[j * v.len() + i].accuracy))
                .collect(),
        })
        .collect();
    svg::line_chart("Accuracy by diagonal entry", "decay rate", "accuracy", &series)
}

pub fn grid_search(cfg: &ExperimentConfig) -> Result<()> {
    record_run(cfg, "grid-search")?;
    let graphs = collect(cfg.seeds.iter().map(|&s| graph_for(cfg, s)).collect())?;
    let k = cluster_count(cfg, &graphs[0]);
    let base = if k == 2 {
        None
    } else {
        let inputs = oracle_parameters(&graphs[0])?;
        let m = decay_cluster::smoothing::optimal_decay_matrix(inputs.n, inputs.alpha, &inputs.epsilon)?;
        Some(m.matrix().diag().to_vec())
    };
    let result = experiment::grid_search(
        &graphs,
        k,
        &cfg.grid,
        base.as_deref(),
        cfg.seeds[0],
        &SpectralOptions::default(),
        cfg.jobs,
    )?;
    graph_io::write_json(&result, cfg.out.join("grid.json"))?;
    write_file(&cfg.out.join("grid.csv"), &grid_csv(&result))?;
    write_file(&cfg.out.join("grid.svg"), &grid_svg(&result))?;
    let best = result.best_cell();
    println!(
        "best diagonal {:?}: accuracy {:.4} over {} graph(s)",
        best.diagonal,
        best.accuracy,
        graphs.len()
    );
    Ok(())
}

fn sweep_csv(curves: &[SweepCurve]) -> String {
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
    let mut s = String::from("n,alpha,seed,lambda,norm,accuracy,gcn_accuracy\n");
    for c in curves {
        for p in &c.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                c.n,
                c.alpha,
                c.seed,
                p.lambda,
                p.norm,
                opt(p.accuracy),
                opt(p.gcn_accuracy)
            );
        }
    }
    s
}

/// One series per `(n, α)` variant, averaged over seeds.
fn sweep_series(curves: &[SweepCurve], value: fn(&experiment::SweepPoint) -> Option<f64>) -> Vec<Series> {
    type Runs = Vec<Vec<(f64, f64)>>;
    let mut out: Vec<(String, Runs)> = Vec::new();
    for c in curves {
        let name = format!("n={} α={}", c.n, c.alpha);
        let pts: Vec<(f64, f64)> = c.points.iter().filter_map(|p| Some((p.lambda, value(p)?))).collect();
        match out.iter_mut().find(|(n, _)| *n == name) {
            Some((_, runs)) => runs.push(pts),
            None => out.push((name, vec![pts])),
        }
    }
    out.into_iter()
        .map(|(name, runs)| Series {
            name,
            points: (0..runs[0].len())
                .map(|i| {
                    let y = runs.iter().map(|r| r[i].1).sum::<f64>() / runs.len() as f64;
                    (runs[0][i].0, y)
                })
                .collect(),
        })
        .collect()
}

pub fn sweep_lambda(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.data.is_some() {
        return Err(AppError::Usage("sweep-lambda runs on generated graphs only".into()));
    }
    record_run(cfg, "sweep-lambda")?;
    let curves = experiment::sweep_lambda(
        &cfg.model.params(0),
        &cfg.sweep,
        &cfg.seeds,
        &cfg.train,
        &SpectralOptions::default(),
        cfg.jobs,
    )?;
    graph_io::write_json(&curves, cfg.out.join("sweep.json"))?;
    write_file(&cfg.out.join("sweep.csv"), &sweep_csv(&curves))?;
    let norm = sweep_series(&curves, |p| Some(p.norm));
    write_file(
        &cfg.out.join("sweep-norm.svg"),
        &svg::line_chart("Spectral norm of the smoothing error", "λ", "‖Â_T − P_T‖", &norm),
    )?;
    if cfg.sweep.accuracy || cfg.sweep.gcn {
        let mut acc = sweep_series(&curves, |p| p.accuracy);
        for s in sweep_series(&curves, |p| p.gcn_accuracy) {
            acc.push(Series {
                name: format!("{} (GCN)", s.name),
                points: s.points,
            });
        }
        acc.retain(|s| !s.points.is_empty());
        write_file(
            &cfg.out.join("sweep-accuracy.svg"),
            &svg::line_chart("Accuracy against decay rate", "λ", "accuracy", &acc),
        )?;
    }
    for c in &curves {
        println!(
            "n={} alpha={} seed={}: norm minimised at λ={}",
            c.n,
            c.alpha,
            c.seed,
            c.argmin_norm()
        );
    }
    Ok(())
}

/// State of an interrupted `train` run for one seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Progress {
    kind: ModelKind,
    seed: u64,
    config: TrainConfig,
    steps: Vec<usize>,
    done: Vec<StepMetrics>,
    validation: Vec<f64>,
    /// Step being trained and its latest checkpoint.
    current: Option<(usize, Checkpoint)>,
    last: Option<Checkpoint>,
}

fn train_one(cfg: &ExperimentConfig, kind: ModelKind, seed: u64, resume: bool) -> Result<ResultFile> {
    let graph = graph_for(cfg, seed)?;
    let truth = graph
        .memberships
        .clone()
        .ok_or_else(|| AppError::Usage("training needs node labels".into()))?;
    let k = cluster_count(cfg, &graph);
    let config = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let split = neural::split_nodes(graph.n, &config.split, seed)?;
    let steps: Vec<usize> = match cfg.neural.evaluate {
        Evaluate::AllSteps => (1..=graph.steps()).collect(),
        Evaluate::LastStep => vec![graph.steps()],
    };
    let dir = seed_dir(cfg, seed);
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let progress_path = dir.join(format!("{}.progress.json", kind.name()));
    let fresh = Progress {
        kind,
        seed,
        config: config.clone(),
        steps: steps.clone(),
        done: Vec::new(),
        validation: Vec::new(),
        current: None,
        last: None,
    };
    let mut progress = if resume && progress_path.exists() {
        let p: Progress = graph_io::read_json(&progress_path)?;
        if p.kind != kind || p.seed != seed || p.config != config || p.steps != steps {
            return Err(AppError::Usage(format!(
                "{} was written by a different configuration",
                progress_path.display()
            )));
        }
        info!("seed {seed}: resuming after {} of {} steps", p.done.len(), steps.len());
        p
    } else {
        fresh
    };
    for &t in &steps[progress.done.len()..] {
        let theta = &truth[t - 1];
        let sub = graph.truncated(t);
        let sup = Supervision::new(theta, split.train.clone());
        let prep = Prepared::new(&sub, kind, config.route)?;
        let mut model = match progress.current.take() {
            Some((step, c)) if step == t => NeuralModel::from_checkpoint(c)?,
            _ => NeuralModel::new(kind, k, prep.input_dim(), &config)?,
        };
        while model.iteration < config.iterations {
            let next = (model.iteration + cfg.neural.checkpoint_every).min(config.iterations);
            model.fit(&prep, &sup, next)?;
            progress.current = Some((t, model.to_checkpoint()));
            graph_io::write_json(&progress, &progress_path)?;
        }
        let pred = model.predict_prepared(&prep)?;
        progress.done.push(evaluate_split(
            t,
            &pred.theta_hat,
            pred.scores.view(),
            theta,
            &split.test,
        )?);
        if !split.val.is_empty() {
            let v = evaluate_split(t, &pred.theta_hat, pred.scores.view(), theta, &split.val)?;
            progress.validation.push(v.accuracy);
        }
        progress.current = None;
        progress.last = Some(model.to_checkpoint());
        graph_io::write_json(&progress, &progress_path)?;
        info!("seed {seed}: step {t} done");
    }
    let last = progress.last.clone().expect("at least one step");
    let model = NeuralModel::from_checkpoint(last.clone())?;
    graph_io::write_json(&last, dir.join(format!("{}.checkpoint.json", kind.name())))?;
    let report = EvalReport::from_steps(progress.done.clone(), AccuracyMode::Split)?;
    let mut result = ResultFile::new("train", kind.name(), Some(seed), report);
    if let Some(d) = model.decay_rates() {
        result.decay = Some(rates_to_rows(&d));
        result.decay_source = Some("LEARNED".into());
    }
    result.notes.push(format!(
        "fixed {} iterations per step; validation nodes not used for model selection",
        config.iterations
    ));
    if !progress.validation.is_empty() {
        let v = progress.validation.iter().sum::<f64>() / progress.validation.len() as f64;
        result.notes.push(format!("time-averaged validation accuracy {v}"));
    }
    Ok(result)
}

pub fn train(cfg: &ExperimentConfig, resume: bool) -> Result<()> {
    let kind = cfg
        .method
        .model()
        .ok_or_else(|| AppError::Usage("train needs --method gcn-static, rnngcn or trnngcn".into()))?;
    record_run(cfg, "train")?;
    let results = collect(par_map(&cfg.seeds, cfg.jobs, |&seed| {
        train_one(cfg, kind, seed, resume)
    }))?;
    for (seed, r) in cfg.seeds.iter().zip(&results) {
        graph_io::save_results(r, seed_dir(cfg, *seed), &format!("{}.result", r.method))?;
        let decay = r
            .decay
            .as_ref()
            .map_or(String::new(), |d| format!(" learned decay {d:?}"));
        println!(
            "seed {seed}: {} test accuracy {:.4} auc {:.4} f1 {:.4}{decay}",
            r.method, r.report.accuracy, r.report.macro_auc, r.report.macro_f1
        );
    }
    Ok(())
}

fn find_results(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .map(|e| e.map(|e| e.path()).map_err(|err| io_err(dir, err)))
        .collect::<Result<_>>()?;
    paths.sort();
    for p in paths {
        if p.is_dir() {
            find_results(&p, out)?;
        } else if p.to_string_lossy().ends_with(".result.json") {
            out.push(p);
        }
    }
    Ok(())
}

fn series_csv(series: &[(String, Vec<(usize, f64)>)]) -> String {
    let mut s = String::from("method,step,accuracy\n");
    for (m, pts) in series {
        for (t, a) in pts {
            let _ = writeln!(s, "{m},{t},{a}");
        }
    }
    s
}

pub fn report(cfg: &ExperimentConfig, dirs: &[PathBuf]) -> Result<()> {
    let mut paths = Vec::new();
    for d in dirs {
        find_results(d, &mut paths)?;
    }
    if paths.is_empty() {
        return Err(AppError::Usage(format!("no *.result.json files under {dirs:?}")));
    }
    let results = collect(paths.iter().map(|p| Ok(graph_io::load_results(p)?)).collect())?;
    let rows = experiment::summarize(&results)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| io_err(&cfg.out, e))?;
    write_file(&cfg.out.join("summary.csv"), &experiment::summary_csv(&rows)?)?;
    graph_io::write_json(&rows, cfg.out.join("summary.json"))?;
    let series = experiment::accuracy_series(&results);
    write_file(&cfg.out.join("accuracy-over-time.csv"), &series_csv(&series))?;
    let lines: Vec<Series> = series
        .iter()
        .map(|(m, pts)| Series {
            name: m.clone(),
            points: pts.iter().map(|&(t, a)| (t as f64, a)).collect(),
        })
        .collect();
    write_file(
        &cfg.out.join("accuracy-over-time.svg"),
        &svg::line_chart("Accuracy over time (5-step average)", "time step", "accuracy", &lines),
    )?;
    let bars: Vec<(String, Vec<(f64, f64)>)> = rows
        .iter()
        .map(|r| (r.method.clone(), vec![r.accuracy, r.macro_auc, r.macro_f1]))
        .collect();
    write_file(
        &cfg.out.join("comparison.svg"),
        &svg::bar_chart("Comparison of methods", &["accuracy", "AUC", "F1"], &bars),
    )?;
    println!(
        "{:<40} {:>4} {:>16} {:>16} {:>16}",
        "method", "runs", "accuracy", "auc", "f1"
    );
    for r in &rows {
        let f = |(m, s): (f64, f64)| format!("{m:.4} ± {s:.4}");
        println!(
            "{:<40} {:>4} {:>16} {:>16} {:>16}",
            r.method,
            r.runs,
            f(r.accuracy),
            f(r.macro_auc),
            f(r.macro_f1)
        );
    }
    Ok(())
}
