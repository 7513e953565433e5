use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Weights of the two-layer GCN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnParams {
    /// `D₀ × D₁`.
    pub w1: Array2<f64>,
    /// `D₁ × K`.
    pub w2: Array2<f64>,
    /// Optional `1 × D₁` and `1 × K` layer biases.
    #[serde(default)]
    pub b1: Option<Array2<f64>>,
    #[serde(default)]
    pub b2: Option<Array2<f64>>,
    pub dropout_rate: f64,
}

impl GcnParams {
    /// Glorot-uniform initialisation.
    pub fn glorot<R: Rng + ?Sized>(d0: usize, d1: usize, k: usize, dropout_rate: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::param(
                "dropout_rate",
                format!("must lie in [0, 1), got {dropout_rate}"),
            ));
        }
        if d0 == 0 || d1 == 0 || k == 0 {
            return Err(Error::param("layer sizes", "must be positive"));
        }
        let mut init = |rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit))
        };
        let w1 = init(d0, d1);
        let w2 = init(d1, k);
        Ok(Self {
            w1,
            w2,
            b1: None,
            b2: None,
            dropout_rate,
        })
    }

    /// Adds zero-initialised biases to both layers.
    pub fn with_bias(mut self) -> Self {
        self.b1 = Some(Array2::zeros((1, self.w1.ncols())));
        self.b2 = Some(Array2::zeros((1, self.w2.ncols())));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` outside any tape.
pub fn normalize_adjacency(a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let mut tape = Tape::new();
    let v = tape.constant(a.to_owned());
    let out = tape.normalize_adjacency(v)?;
    Ok(tape.value(out).clone())
}

/// Inverted-dropout mask: entries are `0` with probability `rate`, else
/// `1 / (1 − rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(shape: (usize, usize), rate: f64, rng: &mut R) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_fn(shape, |_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
}

/// Trainable inputs of one recorded GCN pass.
#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    pub w1: Var,
    pub w2: Var,
    pub b1: Option<Var>,
    pub b2: Option<Var>,
}

impl LayerVars {
    pub fn record(tape: &mut Tape, params: &GcnParams) -> Self {
        Self {
            w1: tape.leaf(params.w1.clone()),
            w2: tape.leaf(params.w2.clone()),
            b1: params.b1.as_ref().map(|b| tape.leaf(b.clone())),
            b2: params.b2.as_ref().map(|b| tape.leaf(b.clone())),
        }
    }

    /// In the order of [`GcnParams::tensors_mut`].
    pub fn vars(&self) -> Vec<Var> {
        let mut v = vec![self.w1, self.w2];
        v.extend(self.b1);
        v.extend(self.b2);
        v
    }
}

impl GcnParams {
    /// `w1, w2`, then the biases when present.
    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut v = vec![&mut self.w1, &mut self.w2];
        v.extend(self.b1.as_mut());
        v.extend(self.b2.as_mut());
        v
    }
}

/// Records `Â · drop(relu(Â · H⁽⁰⁾ · W⁽¹⁾ + b₁)) · W⁽²⁾ + b₂` on `tape` and
/// returns the logits. `h0 = None` stands for the identity.
pub fn gcn_layers<R: Rng + ?Sized>(
    tape: &mut Tape,
    adj: Var,
    h0: Option<Var>,
    layer: &LayerVars,
    dropout: Option<(f64, &mut R)>,
) -> Result<Var> {
    let LayerVars { w1, w2, b1, b2 } = *layer;
    let n = tape.value(adj).nrows();
    let x = match h0 {
        Some(h) => tape.matmul(h, w1)?,
        None => {
            if tape.value(w1).nrows() != n {
                return Err(Error::shape("gcn input layer", n, tape.value(w1).nrows()));
            }
            w1
        }
    };
    let mut z1 = tape.matmul(adj, x)?;
    if let Some(b) = b1 {
        z1 = tape.add_row(z1, b)?;
    }
    let mut h1 = tape.relu(z1);
    if let Some((rate, rng)) = dropout {
        if rate > 0.0 {
            let mask = dropout_mask(tape.value(h1).dim(), rate, rng);
            h1 = tape.mask(h1, mask)?;
        }
    }
    let z2 = tape.matmul(h1, w2)?;
    let logits = tape.matmul(adj, z2)?;
    match b2 {
        Some(b) => tape.add_row(logits, b),
        None => Ok(logits),
    }
}

/// A recorded forward pass of the two-layer GCN.
pub struct GcnForward {
    pub tape: Tape,
    pub logits: Var,
    pub layer: LayerVars,
}

impl GcnForward {
    pub fn logits(&self) -> &Array2<f64> {
        self.tape.value(self.logits)
    }
}

/// Two-layer GCN on a normalised adjacency. Dropout sits between the
/// layers in train mode only.
pub fn gcn_forward<R: Rng + ?Sized>(
    a_norm: ArrayView2<'_, f64>,
    h0: Option<ArrayView2<'_, f64>>,
    params: &GcnParams,
    mode: Mode,
    rng: &mut R,
) -> Result<GcnForward> {
    let mut tape = Tape::new();
    let adj = tape.constant(a_norm.to_owned());
    let h0 = h0.map(|h| tape.constant(h.to_owned()));
    let layer = LayerVars::record(&mut tape, params);
    let dropout = match mode {
        Mode::Train => Some((params.dropout_rate, rng)),
        Mode::Eval => None,
    };
    let logits = gcn_layers(&mut tape, adj, h0, &layer, dropout)?;
    if tape.value(logits).iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("gcn logits"));
    }
    Ok(GcnForward { tape, logits, layer })
}

/// Row-wise argmax, lowest index on ties.
pub fn argmax_rows(m: &Array2<f64>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::tape::softmax_rows;
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn normalize_examples() {
        let z = normalize_adjacency(Array2::zeros((2, 2)).view()).unwrap();
        assert_abs_diff_eq!(z, Array2::eye(2), epsilon = 1e-15);
        let c = normalize_adjacency(array![[0.0, 1.0], [1.0, 0.0]].view()).unwrap();
        assert_abs_diff_eq!(c, Array2::from_elem((2, 2), 0.5), epsilon = 1e-15);
    }

    #[test]
    fn zero_weights_give_uniform_softmax() {
        let mut g = rng::stream(0, 0);
        let params = GcnParams {
            w1: Array2::zeros((4, 3)),
            w2: Array2::zeros((3, 3)),
            b1: None,
            b2: None,
            dropout_rate: 0.5,
        };
        let f = gcn_forward(Array2::eye(4).view(), None, &params, Mode::Eval, &mut g).unwrap();
        let p = softmax_rows(f.logits());
        assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn eval_is_deterministic() {
        let mut g = rng::stream(1, 0);
        let params = GcnParams::glorot(5, 2, 2, 0.5, &mut g).unwrap();
        let a = normalize_adjacency(Array2::from_elem((5, 5), 0.3).view()).unwrap();
        let f1 = gcn_forward(a.view(), None, &params, Mode::Eval, &mut g).unwrap();
        let f2 = gcn_forward(a.view(), None, &params, Mode::Eval, &mut g).unwrap();
        assert_eq!(f1.logits(), f2.logits());
        let p = softmax_rows(f1.logits());
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_ties_take_lowest() {
        assert_eq!(argmax_rows(&array![[1.0, 1.0], [0.0, 2.0]]), vec![0, 1]);
    }

    #[test]
    fn invalid_dropout() {
        let mut g = rng::stream(1, 0);
        assert!(GcnParams::glorot(2, 2, 2, 1.0, &mut g).is_err());
    }
}
