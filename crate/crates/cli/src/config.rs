//! Experiment configuration: a versioned TOML file, overridden field by
//! field from the command line.

use std::path::{Path, PathBuf};

use decay_cluster::dsbm::SbmParams;
use decay_cluster::experiment::{DataFiles, DecaySource, GridSpec, Method, SweepSpec, CONFIG_VERSION};
use decay_cluster::neural::{ModelKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::AppError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    StaticSpectral,
    DecayedSpectral,
    GcnStatic,
    Rnngcn,
    Trnngcn,
}

impl MethodKind {
    pub fn model(self) -> Option<ModelKind> {
        match self {
            MethodKind::GcnStatic => Some(ModelKind::StaticGcn),
            MethodKind::Rnngcn => Some(ModelKind::Rnngcn),
            MethodKind::Trnngcn => Some(ModelKind::Trnngcn),
            _ => None,
        }
    }
}

impl std::str::FromStr for MethodKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "static-spectral" => MethodKind::StaticSpectral,
            "decayed-spectral" => MethodKind::DecayedSpectral,
            "gcn-static" => MethodKind::GcnStatic,
            "rnngcn" => MethodKind::Rnngcn,
            "trnngcn" => MethodKind::Trnngcn,
            _ => {
                return Err(format!(
                    "unknown method {s:?} (static-spectral, decayed-spectral, gcn-static, rnngcn, trnngcn)"
                ))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayKind {
    #[default]
    None,
    Scalar,
    Matrix,
    Optimal,
    OptimalScalar,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairLabels {
    /// Previous step's estimate.
    #[default]
    PlugIn,
    /// Ground truth at the current step.
    Oracle,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecaySpec {
    pub kind: DecayKind,
    pub lambda: Option<f64>,
    /// Whitespace-separated `K × K` matrix, one row per line.
    pub matrix_file: Option<PathBuf>,
    pub labels: PairLabels,
    pub source: DecaySource,
    /// Raw sums instead of a binary union for the static baseline.
    pub sum: bool,
}

impl DecaySpec {
    /// Parses the command-line shorthand: `none`, `sum`, `optimal`,
    /// `optimal-scalar`, `scalar=<λ>`, `matrix=<file>`.
    pub fn parse_shorthand(&mut self, s: &str) -> Result<(), AppError> {
        match s {
            "none" => self.kind = DecayKind::None,
            "sum" => {
                self.kind = DecayKind::None;
                self.sum = true;
            }
            "optimal" => self.kind = DecayKind::Optimal,
            "optimal-scalar" => self.kind = DecayKind::OptimalScalar,
            _ => {
                if let Some(v) = s.strip_prefix("scalar=") {
                    self.kind = DecayKind::Scalar;
                    self.lambda = Some(
                        v.parse()
                            .map_err(|_| AppError::Usage(format!("bad decay rate in {s:?}")))?,
                    );
                } else if let Some(f) = s.strip_prefix("matrix=") {
                    self.kind = DecayKind::Matrix;
                    self.matrix_file = Some(PathBuf::from(f));
                } else {
                    return Err(AppError::Usage(format!("unknown decay {s:?}")));
                }
            }
        }
        Ok(())
    }
}

/// The generating model; `p` defaults to uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub n: usize,
    pub k: usize,
    pub p: Option<Vec<f64>>,
    pub alpha: f64,
    pub tau: f64,
    pub epsilon: Vec<f64>,
    pub steps: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let r = SbmParams::reference(0);
        Self {
            n: r.n,
            k: r.k,
            p: None,
            alpha: r.alpha,
            tau: r.tau,
            epsilon: r.epsilon,
            steps: r.steps,
        }
    }
}

impl ModelSection {
    pub fn params(&self, seed: u64) -> SbmParams {
        SbmParams {
            n: self.n,
            k: self.k,
            p: self
                .p
                .clone()
                .unwrap_or_else(|| vec![1.0 / self.k.max(1) as f64; self.k]),
            alpha: self.alpha,
            tau: self.tau,
            epsilon: self.epsilon.clone(),
            steps: self.steps,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Evaluate {
    /// Train and score separately at every step.
    #[default]
    AllSteps,
    LastStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuralSection {
    pub evaluate: Evaluate,
    /// Iterations between checkpoint writes.
    pub checkpoint_every: usize,
}

impl Default for NeuralSection {
    fn default() -> Self {
        Self {
            evaluate: Evaluate::AllSteps,
            checkpoint_every: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub method: MethodKind,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub decay: DecaySpec,
    pub model: ModelSection,
    /// Load a dataset instead of generating one per seed.
    pub data: Option<DataFiles>,
    pub train: TrainConfig,
    pub neural: NeuralSection,
    pub grid: GridSpec,
    pub sweep: SweepSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            method: MethodKind::DecayedSpectral,
            seeds: vec![0],
            out: PathBuf::from("results"),
            jobs: 0,
            decay: DecaySpec {
                kind: DecayKind::Optimal,
                ..DecaySpec::default()
            },
            model: ModelSection::default(),
            data: None,
            train: TrainConfig::default(),
            neural: NeuralSection::default(),
            grid: GridSpec::default(),
            sweep: SweepSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| AppError::Usage(format!("{}: {e}", path.display())))?;
        if cfg.version != CONFIG_VERSION {
            return Err(AppError::Usage(format!(
                "{}: config version {} (supported: {CONFIG_VERSION})",
                path.display(),
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, AppError> {
        toml::to_string(self).map_err(|e| AppError::Usage(format!("cannot serialise config: {e}")))
    }

    /// Checks what can be checked before any data is touched.
    pub fn validate(&self) -> Result<(), AppError> {
        let usage = |e: decay_cluster::Error| AppError::Usage(e.to_string());
        if self.seeds.is_empty() {
            return Err(AppError::Usage("no seeds given".into()));
        }
        if self.data.is_none() {
            self.model.params(0).validate().map_err(usage)?;
        }
        self.train.validate().map_err(usage)?;
        if self.train.iterations == 0 {
            return Err(AppError::Usage("train.iterations must be positive".into()));
        }
        if self.neural.checkpoint_every == 0 {
            return Err(AppError::Usage("neural.checkpoint_every must be positive".into()));
        }
        let d = &self.decay;
        match self.method {
            MethodKind::StaticSpectral if d.kind != DecayKind::None => Err(AppError::Usage(
                "static-spectral takes no decay (use decayed-spectral)".into(),
            )),
            MethodKind::DecayedSpectral if d.kind == DecayKind::None => Err(AppError::Usage(
                "decayed-spectral needs a decay (scalar, matrix, optimal or optimal-scalar)".into(),
            )),
            MethodKind::GcnStatic | MethodKind::Rnngcn | MethodKind::Trnngcn if d.kind != DecayKind::None => Err(
                AppError::Usage("neural methods learn their decay; set decay kind = \"none\"".into()),
            ),
            _ => match d.kind {
                DecayKind::Scalar => match d.lambda {
                    Some(l) if (0.0..=1.0).contains(&l) => Ok(()),
                    Some(l) => Err(AppError::Usage(format!("decay rate {l} outside [0, 1]"))),
                    None => Err(AppError::Usage("scalar decay needs `lambda`".into())),
                },
                DecayKind::Matrix if d.matrix_file.is_none() => {
                    Err(AppError::Usage("matrix decay needs `matrix_file`".into()))
                }
                _ => Ok(()),
            },
        }
    }

    /// The spectral method selected by `method` and `decay`.
    pub fn spectral_method(&self) -> Result<Method, AppError> {
        let oracle_labels = self.decay.labels == PairLabels::Oracle;
        Ok(match self.decay.kind {
            DecayKind::None if self.decay.sum => Method::StaticSum,
            DecayKind::None => Method::Static,
            DecayKind::Scalar => Method::Scalar {
                lambda: self.decay.lambda.unwrap_or(1.0),
            },
            DecayKind::OptimalScalar => Method::OptimalScalar,
            DecayKind::Optimal => Method::OptimalMatrix { oracle_labels },
            DecayKind::Matrix => {
                let path = self.decay.matrix_file.as_ref().expect("validated");
                Method::Matrix {
                    rows: read_matrix(path)?,
                    oracle_labels,
                }
            }
        })
    }
}

fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>, AppError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        AppError::Core(decay_cluster::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| {
                AppError::Core(decay_cluster::Error::Parse {
                    line: i + 1,
                    message: format!("{}: {e}", path.display()),
                })
            })?;
        rows.push(row);
    }
    Ok(rows)
}
