//! Toy-scale graph neural networks with learned decay: a two-layer GCN,
//! RNNGCN (scalar decay learned through the smoothing recursion) and
//! TRNNGCN (a `K × K` decay matrix applied through the previous
//! iteration's prediction). Full-batch, single-threaded, deterministic.

pub mod adam;
pub mod gcn;
pub mod model;
pub mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gcn::{argmax_rows, gcn_forward, normalize_adjacency, GcnForward, GcnParams, Mode};
pub use model::{
    predict, split_nodes, train_model, train_rnngcn, train_static_gcn, train_trnngcn, Checkpoint, DecayParams,
    ModelKind, NeuralModel, Prediction, Prepared, SmoothingRoute, Split, SplitFractions, Supervision, TrainConfig,
};
pub use tape::{sigmoid, softmax_rows, Gradients, Tape, Var};

use std::sync::Arc;

use ndarray::Array2;

use crate::error::Result;

/// Mean cross-entropy of `labels` over the `mask` rows of `logits`,
/// recorded on a fresh tape.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize], mask: &[usize]) -> Result<(f64, Tape, Var, Var)> {
    let mut tape = Tape::new();
    let z = tape.leaf(logits.clone());
    let loss = tape.softmax_cross_entropy(z, Arc::new(labels.to_vec()), Arc::new(mask.to_vec()))?;
    Ok((tape.value(loss)[[0, 0]], tape, z, loss))
}
