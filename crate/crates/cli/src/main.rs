//! `decay-cluster`: experiment runner for decay-based clustering of
//! dynamic graphs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use decay_cluster::experiment::{DataFiles, DecaySource};
use decay_cluster::neural::SmoothingRoute;

use config::{DecaySpec, Evaluate, ExperimentConfig, MethodKind, PairLabels};

#[derive(Debug)]
pub enum AppError {
    Usage(String),
    Core(decay_cluster::Error),
}

impl From<decay_cluster::Error> for AppError {
    fn from(e: decay_cluster::Error) -> Self {
        AppError::Core(e)
    }
}

impl AppError {
    fn exit_code(&self) -> u8 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Core(e) if e.is_numeric() => 3,
            AppError::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Usage(m) => write!(f, "{m}"),
            AppError::Core(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "decay-cluster", version, about = "Decay-based clustering of dynamic graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Debug, Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seeds: a list (`1,2,3`) or a half-open range (`0..10`).
    #[arg(long, global = true, value_delimiter = ',')]
    seed: Vec<String>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    /// static-spectral, decayed-spectral, gcn-static, rnngcn or trnngcn.
    #[arg(long, global = true)]
    method: Option<MethodKind>,
    /// none, sum, optimal, optimal-scalar, scalar=<λ> or matrix=<file>.
    #[arg(long, global = true)]
    decay: Option<String>,
    /// Use ground-truth labels for the decay pair weights.
    #[arg(long, global = true)]
    oracle_labels: bool,
    /// Estimate α and ε from training-node labels instead of using the
    /// generating model's values.
    #[arg(long, global = true)]
    estimated: bool,

    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    tau: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',')]
    epsilon: Option<Vec<f64>>,
    #[arg(long, global = true)]
    steps: Option<usize>,

    /// Temporal edge list to use instead of generated graphs.
    #[arg(long, global = true)]
    edges: Option<PathBuf>,
    #[arg(long, global = true, requires = "edges")]
    labels: Option<PathBuf>,
    #[arg(long, global = true, requires = "edges")]
    features: Option<PathBuf>,

    #[arg(long, global = true)]
    iterations: Option<usize>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    dropout: Option<f64>,
    /// Differentiate the smoothing step by step instead of in closed form.
    #[arg(long, global = true)]
    unrolled: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate dynamic SBM instances, one directory per seed.
    Generate,
    /// Spectral clustering at every step, scored against the truth.
    Cluster,
    /// Accuracy over a grid of decay-matrix diagonals.
    GridSearch {
        /// Candidate diagonal values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        off_diagonal: Option<f64>,
        /// Weight pairs with the previous estimate instead of the truth.
        #[arg(long)]
        plug_in: bool,
    },
    /// Spectral norm and accuracy against a scalar decay rate.
    SweepLambda {
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        /// Node counts to sweep (at the configured α).
        #[arg(long, value_delimiter = ',')]
        n_values: Option<Vec<usize>>,
        /// Edge probabilities to sweep (at the configured n).
        #[arg(long, value_delimiter = ',')]
        alpha_values: Option<Vec<f64>>,
        /// Also train a GCN on each smoothed graph.
        #[arg(long)]
        gcn: bool,
        /// Skip the clustering accuracy curve.
        #[arg(long)]
        no_accuracy: bool,
    },
    /// Train a neural classifier per step on the 70/20/10 split.
    Train {
        /// Score only the last step.
        #[arg(long)]
        last_step: bool,
        #[arg(long)]
        checkpoint_every: Option<usize>,
        /// Continue from the progress file left by an earlier run.
        #[arg(long)]
        resume: bool,
    },
    /// Aggregate saved results into tables and figures.
    Report {
        /// Directories searched recursively for `*.result.json`
        /// (default: the output directory).
        dirs: Vec<PathBuf>,
    },
}

fn parse_seeds(items: &[String]) -> Result<Vec<u64>, AppError> {
    let bad = |s: &str| AppError::Usage(format!("bad seed {s:?}"));
    let mut out = Vec::new();
    for s in items {
        if let Some((a, b)) = s.split_once("..") {
            let a: u64 = a.parse().map_err(|_| bad(s))?;
            let b: u64 = b.parse().map_err(|_| bad(s))?;
            if a >= b {
                return Err(bad(s));
            }
            out.extend(a..b);
        } else {
            out.push(s.parse().map_err(|_| bad(s))?);
        }
    }
    Ok(out)
}

/// Defaults, then the config file, then explicit flags.
fn resolve(cli: &Cli) -> Result<ExperimentConfig, AppError> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if !c.seed.is_empty() {
        cfg.seeds = parse_seeds(&c.seed)?;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    if let Some(j) = c.jobs {
        cfg.jobs = j;
    }
    if let Some(m) = c.method {
        cfg.method = m;
        if c.decay.is_none() && !matches!(m, MethodKind::DecayedSpectral) {
            cfg.decay = DecaySpec::default();
        }
    }
    if let Some(d) = &c.decay {
        cfg.decay.parse_shorthand(d)?;
    }
    if c.oracle_labels {
        cfg.decay.labels = PairLabels::Oracle;
    }
    if c.estimated {
        cfg.decay.source = DecaySource::Estimated;
    }
    let m = &mut cfg.model;
    if let Some(v) = c.n {
        m.n = v;
    }
    if let Some(v) = c.k {
        m.k = v;
        if m.p.as_ref().is_some_and(|p| p.len() != v) {
            m.p = None;
        }
    }
    if let Some(v) = c.alpha {
        m.alpha = v;
    }
    if let Some(v) = c.tau {
        m.tau = v;
    }
    if let Some(v) = &c.epsilon {
        m.epsilon = v.clone();
    }
    if let Some(v) = c.steps {
        m.steps = v;
    }
    if let Some(e) = &c.edges {
        cfg.data = Some(DataFiles {
            edges: e.clone(),
            labels: c.labels.clone(),
            features: c.features.clone(),
        });
    }
    let t = &mut cfg.train;
    if let Some(v) = c.iterations {
        t.iterations = v;
    }
    if let Some(v) = c.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = c.dropout {
        t.dropout = v;
    }
    if c.unrolled {
        t.route = SmoothingRoute::Unrolled;
    }
    match &cli.command {
        Command::GridSearch {
            values,
            off_diagonal,
            plug_in,
        } => {
            if let Some(v) = values {
                cfg.grid.values = v.clone();
            }
            if let Some(v) = off_diagonal {
                cfg.grid.off_diagonal = *v;
            }
            if *plug_in {
                cfg.grid.oracle_labels = false;
            }
        }
        Command::SweepLambda {
            lambdas,
            n_values,
            alpha_values,
            gcn,
            no_accuracy,
        } => {
            if let Some(v) = lambdas {
                cfg.sweep.lambdas = v.clone();
            }
            let ns = n_values.clone().unwrap_or_else(|| vec![cfg.model.n]);
            let alphas = alpha_values.clone().unwrap_or_else(|| vec![cfg.model.alpha]);
            if n_values.is_some() || alpha_values.is_some() {
                cfg.sweep.variants = ns.iter().flat_map(|&n| alphas.iter().map(move |&a| (n, a))).collect();
            }
            cfg.sweep.gcn |= *gcn;
            if *no_accuracy {
                cfg.sweep.accuracy = false;
            }
        }
        Command::Train {
            last_step,
            checkpoint_every,
            ..
        } => {
            if *last_step {
                cfg.neural.evaluate = Evaluate::LastStep;
            }
            if let Some(v) = checkpoint_every {
                cfg.neural.checkpoint_every = *v;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), AppError> {
    let cfg = resolve(cli)?;
    match &cli.command {
        Command::Generate => commands::generate(&cfg),
        Command::Cluster => commands::cluster(&cfg),
        Command::GridSearch { .. } => commands::grid_search(&cfg),
        Command::SweepLambda { .. } => commands::sweep_lambda(&cfg),
        Command::Train { resume, .. } => commands::train(&cfg, *resume),
        Command::Report { dirs } => {
            let dirs = if dirs.is_empty() {
                vec![cfg.out.clone()]
            } else {
                dirs.clone()
            };
            commands::report(&cfg, &dirs)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = if cli.common.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
