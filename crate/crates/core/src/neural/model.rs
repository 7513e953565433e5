use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::gcn::{argmax_rows, gcn_layers, GcnParams, LayerVars};
use super::tape::{sigmoid, softmax_rows, Tape, Var};
use crate::dsbm::DynamicGraph;
use crate::error::{Error, Result};
use crate::membership::MembershipMatrix;
use crate::rng::{self, StreamRng};
use crate::smoothing::EdgeHistory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Two-layer GCN on the binary union of all snapshots.
    StaticGcn,
    /// Learned scalar decay.
    Rnngcn,
    /// Learned `K × K` decay applied through the previous prediction.
    Trnngcn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::StaticGcn => "gcn-static",
            ModelKind::Rnngcn => "rnngcn",
            ModelKind::Trnngcn => "trnngcn",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn-static" | "gcn" | "static-gcn" => Ok(ModelKind::StaticGcn),
            "rnngcn" => Ok(ModelKind::Rnngcn),
            "trnngcn" => Ok(ModelKind::Trnngcn),
            _ => Err(Error::param("model", format!("unknown model {s:?}"))),
        }
    }
}

/// How the smoothing recursion is differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmoothingRoute {
    /// Per-pair closed form over the observed edge times.
    #[default]
    ClosedForm,
    /// Dense step-by-step recursion recorded on the tape.
    Unrolled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.2,
            test: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub dropout: f64,
    pub split: SplitFractions,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub route: SmoothingRoute,
    /// Adds per-layer bias rows to the GCN.
    pub bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            learning_rate: adam.learning_rate,
            iterations: 500,
            dropout: 0.5,
            split: SplitFractions::default(),
            seed: 0,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            route: SmoothingRoute::ClosedForm,
            bias: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.split;
        if [s.train, s.val, s.test].iter().any(|&f| !(0.0..=1.0).contains(&f))
            || (s.train + s.val + s.test - 1.0).abs() > 1e-9
        {
            return Err(Error::param("split", "fractions must lie in [0, 1] and sum to 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::param("dropout", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Node index sets of a train/validation/test split, each sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Random split of `0..n`; sizes are `round(train·n)`, `round(val·n)` and
/// the remainder.
pub fn split_nodes(n: usize, fractions: &SplitFractions, seed: u64) -> Result<Split> {
    let n_train = (fractions.train * n as f64).round() as usize;
    let n_val = ((fractions.val * n as f64).round() as usize).min(n - n_train.min(n));
    if n_train == 0 || n_train > n {
        return Err(Error::param("split", format!("no training nodes for n = {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, 0));
    let part = |range: std::ops::Range<usize>| {
        let mut v = order[range].to_vec();
        v.sort_unstable();
        v
    };
    Ok(Split {
        train: part(0..n_train),
        val: part(n_train..n_train + n_val),
        test: part(n_train + n_val..n),
    })
}

/// Labels known for training: `labels` covers every node, only the
/// `train` entries are used.
#[derive(Debug, Clone)]
pub struct Supervision {
    pub labels: Vec<usize>,
    pub train: Vec<usize>,
    pub k: usize,
}

impl Supervision {
    pub fn new(theta: &MembershipMatrix, train: Vec<usize>) -> Self {
        Self {
            labels: theta.labels().to_vec(),
            train,
            k: theta.k(),
        }
    }
}

/// Unconstrained decay parameters; the effective rates are their sigmoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayParams {
    /// `1 × 1` for a scalar rate, `K × K` for a matrix.
    pub raw: Array2<f64>,
}

impl DecayParams {
    pub fn squashed(&self) -> Array2<f64> {
        self.raw.mapv(sigmoid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// Decimal string; JSON numbers cannot hold 128 bits.
    pub word_pos: String,
}

impl RngState {
    fn capture(g: &StreamRng) -> Self {
        Self {
            seed: g.get_seed(),
            stream: g.get_stream(),
            word_pos: g.get_word_pos().to_string(),
        }
    }

    fn restore(&self) -> Result<StreamRng> {
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| Error::Serialization(format!("bad rng word position {:?}", self.word_pos)))?;
        let mut g = StreamRng::from_seed(self.seed);
        g.set_stream(self.stream);
        g.set_word_pos(pos);
        Ok(g)
    }
}

/// Parameters, optimiser state and training position of one model.
#[derive(Debug, Clone)]
pub struct NeuralModel {
    pub kind: ModelKind,
    pub k: usize,
    pub gcn: GcnParams,
    pub decay: Option<DecayParams>,
    /// TRNNGCN: prediction of the previous iteration, used for the next
    /// smoothing pass. `None` before the first iteration.
    pub previous_labels: Option<Vec<usize>>,
    pub adam: Vec<AdamState>,
    pub iteration: usize,
    pub config: TrainConfig,
    pub losses: Vec<f64>,
    rng: StreamRng,
}

/// Per-graph inputs shared by every iteration.
pub struct Prepared {
    n: usize,
    history: Arc<EdgeHistory>,
    dense: Vec<Array2<f64>>,
    static_adj: Option<Array2<f64>>,
    h0: Option<Array2<f64>>,
}

impl Prepared {
    pub fn new(graph: &DynamicGraph, kind: ModelKind, route: SmoothingRoute) -> Result<Self> {
        if graph.steps() == 0 {
            return Err(Error::param("graph", "no snapshots"));
        }
        let static_adj = match kind {
            ModelKind::StaticGcn => Some(super::gcn::normalize_adjacency(
                graph.cumulative_binary(graph.steps()).view(),
            )?),
            _ => None,
        };
        let dense = if kind != ModelKind::StaticGcn && route == SmoothingRoute::Unrolled {
            graph.snapshots.iter().map(|s| s.to_dense()).collect()
        } else {
            Vec::new()
        };
        if let Some(f) = &graph.features {
            if f.nrows() != graph.n {
                return Err(Error::shape("features", graph.n, f.nrows()));
            }
        }
        Ok(Self {
            n: graph.n,
            history: Arc::new(EdgeHistory::from_snapshots(graph.n, &graph.snapshots)),
            dense,
            static_adj,
            h0: graph.features.clone(),
        })
    }

    /// A GCN input with a fixed adjacency (normalised here); train with
    /// [`ModelKind::StaticGcn`].
    pub fn fixed(graph: &DynamicGraph, adjacency: &Array2<f64>) -> Result<Self> {
        if adjacency.dim() != (graph.n, graph.n) {
            return Err(Error::shape("fixed adjacency", (graph.n, graph.n), adjacency.dim()));
        }
        Ok(Self {
            n: graph.n,
            history: Arc::new(EdgeHistory::from_snapshots(graph.n, &[])),
            dense: Vec::new(),
            static_adj: Some(super::gcn::normalize_adjacency(adjacency.view())?),
            h0: graph.features.clone(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.h0.as_ref().map_or(self.n, |h| h.ncols())
    }
}

struct Recorded {
    tape: Tape,
    logits: Var,
    layer: LayerVars,
    decay: Option<Var>,
}

impl NeuralModel {
    pub fn new(kind: ModelKind, k: usize, input_dim: usize, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        if k == 0 {
            return Err(Error::param("k", "must be positive"));
        }
        let mut init = rng::stream(config.seed, 0);
        let mut gcn = GcnParams::glorot(input_dim, k, k, config.dropout, &mut init)?;
        if config.bias {
            gcn = gcn.with_bias();
        }
        let decay = match kind {
            ModelKind::StaticGcn => None,
            ModelKind::Rnngcn => Some(DecayParams {
                raw: Array2::zeros((1, 1)),
            }),
            ModelKind::Trnngcn => Some(DecayParams {
                raw: Array2::zeros((k, k)),
            }),
        };
        let mut adam: Vec<AdamState> = [Some(&gcn.w1), Some(&gcn.w2), gcn.b1.as_ref(), gcn.b2.as_ref()]
            .into_iter()
            .flatten()
            .map(|p| AdamState::zeros(p.dim()))
            .collect();
        if let Some(d) = &decay {
            adam.push(AdamState::zeros(d.raw.dim()));
        }
        Ok(Self {
            kind,
            k,
            gcn,
            decay,
            previous_labels: None,
            adam,
            iteration: 0,
            config: config.clone(),
            losses: Vec::new(),
            rng: rng::stream(config.seed, 1),
        })
    }

    /// Effective decay rates, if the model has any.
    pub fn decay_rates(&self) -> Option<Array2<f64>> {
        self.decay.as_ref().map(DecayParams::squashed)
    }

    fn smoothing_labels(&self, n: usize) -> Vec<usize> {
        match (self.kind, &self.previous_labels) {
            (ModelKind::Trnngcn, Some(l)) => l.clone(),
            _ => vec![0; n],
        }
    }

    fn record(&self, prep: &Prepared, train_rng: Option<&mut StreamRng>) -> Result<Recorded> {
        let mut tape = Tape::new();
        let mut decay_var = None;
        let adj = match &prep.static_adj {
            Some(a) => tape.constant(a.clone()),
            None => {
                let d = self
                    .decay
                    .as_ref()
                    .ok_or_else(|| Error::param("model", "missing decay parameters"))?;
                let raw = tape.leaf(d.raw.clone());
                decay_var = Some(raw);
                let lam = tape.sigmoid(raw);
                let labels = Arc::new(self.smoothing_labels(prep.n));
                // scalar decay lives at [0, 0] with every node in group 0
                let smoothed = match self.config.route {
                    SmoothingRoute::ClosedForm => tape.smooth_history(lam, labels, prep.history.clone())?,
                    SmoothingRoute::Unrolled => {
                        let weight = if tape.value(lam).dim() == (1, 1) {
                            lam
                        } else {
                            tape.expand_pair_weights(lam, labels)?
                        };
                        let mut acc = tape.constant(prep.dense[0].clone());
                        for a in &prep.dense[1..] {
                            let snap = tape.constant(a.clone());
                            acc = tape.smooth_step(acc, snap, weight)?;
                        }
                        acc
                    }
                };
                tape.normalize_adjacency(smoothed)?
            }
        };
        let h0 = prep.h0.as_ref().map(|h| tape.constant(h.clone()));
        let layer = LayerVars::record(&mut tape, &self.gcn);
        let dropout = train_rng.map(|g| (self.gcn.dropout_rate, g));
        let logits = gcn_layers(&mut tape, adj, h0, &layer, dropout)?;
        Ok(Recorded {
            tape,
            logits,
            layer,
            decay: decay_var,
        })
    }

    /// Every trainable tensor: `w1, w2`, biases if any, then the decay.
    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut v = self.gcn.tensors_mut();
        v.extend(self.decay.as_mut().map(|d| &mut d.raw));
        v
    }

    /// Loss and gradients (ordered as [`Self::tensors_mut`]) at the current parameters
    /// for the given dropout generator; parameters are left unchanged.
    pub fn loss_and_gradients(
        &self,
        prep: &Prepared,
        sup: &Supervision,
        train_rng: Option<&mut StreamRng>,
    ) -> Result<(f64, Vec<usize>, Vec<Array2<f64>>)> {
        let Recorded {
            mut tape,
            logits,
            layer,
            decay,
        } = self.record(prep, train_rng)?;
        let predicted = argmax_rows(tape.value(logits));
        let labels = Arc::new(sup.labels.clone());
        let mask = Arc::new(sup.train.clone());
        let loss_var = tape.softmax_cross_entropy(logits, labels, mask)?;
        let loss = tape.value(loss_var)[[0, 0]];
        let grads = tape.backward(loss_var)?;
        let out = layer
            .vars()
            .into_iter()
            .chain(decay)
            .map(|v| grads.get_or_zero(v))
            .collect();
        Ok((loss, predicted, out))
    }

    /// One training iteration: forward in train mode, backward, Adam.
    pub fn step(&mut self, prep: &Prepared, sup: &Supervision) -> Result<f64> {
        check_supervision(prep.n, self.k, sup)?;
        let mut g = self.rng.clone();
        let (loss, predicted, grads) = self.loss_and_gradients(prep, sup, Some(&mut g))?;
        self.rng = g;
        let iteration = self.iteration + 1;
        if !loss.is_finite() || grads.iter().any(|a| a.iter().any(|x| !x.is_finite())) {
            return Err(Error::Divergence { iteration, loss });
        }
        let cfg = self.config.adam();
        let mut states = std::mem::take(&mut self.adam);
        for ((p, g), s) in self.tensors_mut().into_iter().zip(&grads).zip(&mut states) {
            adam_step(p, g, s, &cfg)?;
        }
        self.adam = states;
        if self.kind == ModelKind::Trnngcn {
            self.previous_labels = Some(predicted);
        }
        self.iteration = iteration;
        self.losses.push(loss);
        Ok(loss)
    }

    /// Trains until `until` iterations have been run in total.
    pub fn fit(&mut self, prep: &Prepared, sup: &Supervision, until: usize) -> Result<()> {
        while self.iteration < until {
            self.step(prep, sup)?;
        }
        Ok(())
    }

    /// Eval-mode forward: argmax labels (lowest index on ties) and softmax
    /// scores.
    pub fn predict_prepared(&self, prep: &Prepared) -> Result<Prediction> {
        if self.gcn.w1.nrows() != prep.input_dim() {
            return Err(Error::shape("predict", self.gcn.w1.nrows(), prep.input_dim()));
        }
        let rec = self.record(prep, None)?;
        let logits = rec.tape.value(rec.logits);
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("prediction logits"));
        }
        Ok(Prediction {
            theta_hat: MembershipMatrix::from_labels(argmax_rows(logits), self.k)?,
            scores: softmax_rows(logits),
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            kind: self.kind,
            k: self.k,
            gcn: self.gcn.clone(),
            decay: self.decay.clone(),
            previous_labels: self.previous_labels.clone(),
            adam: self.adam.clone(),
            iteration: self.iteration,
            config: self.config.clone(),
            losses: self.losses.clone(),
            rng: RngState::capture(&self.rng),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        if c.format != CHECKPOINT_FORMAT {
            return Err(Error::SchemaMismatch(format!("not a model checkpoint: {:?}", c.format)));
        }
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::SchemaMismatch(format!(
                "checkpoint version {} (supported: {CHECKPOINT_VERSION})",
                c.version
            )));
        }
        let expected =
            2 + usize::from(c.gcn.b1.is_some()) + usize::from(c.gcn.b2.is_some()) + usize::from(c.decay.is_some());
        if c.adam.len() != expected {
            return Err(Error::shape("checkpoint optimiser state", expected, c.adam.len()));
        }
        Ok(Self {
            kind: c.kind,
            k: c.k,
            gcn: c.gcn,
            decay: c.decay,
            previous_labels: c.previous_labels,
            adam: c.adam,
            iteration: c.iteration,
            config: c.config,
            losses: c.losses,
            rng: c.rng.restore()?,
        })
    }
}

fn check_supervision(n: usize, k: usize, sup: &Supervision) -> Result<()> {
    if sup.labels.len() != n {
        return Err(Error::shape("supervision labels", n, sup.labels.len()));
    }
    if sup.train.is_empty() {
        return Err(Error::EmptyMask);
    }
    if sup.train.iter().any(|&i| i >= n) || sup.labels.iter().any(|&c| c >= k) {
        return Err(Error::param("supervision", "node or label out of range"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub theta_hat: MembershipMatrix,
    /// Row-stochastic `n × K` softmax output.
    pub scores: Array2<f64>,
}

pub const CHECKPOINT_FORMAT: &str = "decay-cluster-model";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk form of a [`NeuralModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub k: usize,
    pub gcn: GcnParams,
    pub decay: Option<DecayParams>,
    pub previous_labels: Option<Vec<usize>>,
    pub adam: Vec<AdamState>,
    pub iteration: usize,
    pub config: TrainConfig,
    pub losses: Vec<f64>,
    pub rng: RngState,
}

fn train(
    kind: ModelKind,
    graph: &DynamicGraph,
    sup: &Supervision,
    config: &TrainConfig,
) -> Result<(NeuralModel, MembershipMatrix)> {
    let prep = Prepared::new(graph, kind, config.route)?;
    let mut model = NeuralModel::new(kind, sup.k, prep.input_dim(), config)?;
    model.fit(&prep, sup, config.iterations)?;
    let pred = model.predict_prepared(&prep)?;
    Ok((model, pred.theta_hat))
}

pub fn train_rnngcn(
    graph: &DynamicGraph,
    sup: &Supervision,
    config: &TrainConfig,
) -> Result<(NeuralModel, MembershipMatrix)> {
    train(ModelKind::Rnngcn, graph, sup, config)
}

pub fn train_trnngcn(
    graph: &DynamicGraph,
    sup: &Supervision,
    config: &TrainConfig,
) -> Result<(NeuralModel, MembershipMatrix)> {
    train(ModelKind::Trnngcn, graph, sup, config)
}

pub fn train_static_gcn(
    graph: &DynamicGraph,
    sup: &Supervision,
    config: &TrainConfig,
) -> Result<(NeuralModel, MembershipMatrix)> {
    train(ModelKind::StaticGcn, graph, sup, config)
}

pub fn train_model(
    kind: ModelKind,
    graph: &DynamicGraph,
    sup: &Supervision,
    config: &TrainConfig,
) -> Result<(NeuralModel, MembershipMatrix)> {
    train(kind, graph, sup, config)
}

pub fn predict(model: &NeuralModel, graph: &DynamicGraph) -> Result<Prediction> {
    let prep = Prepared::new(graph, model.kind, model.config.route)?;
    model.predict_prepared(&prep)
}
