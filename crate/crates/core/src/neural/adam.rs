use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.0025,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Array2<f64>,
    pub v: Array2<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn zeros(shape: (usize, usize)) -> Self {
        Self {
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of `param` in place.
pub fn adam_step(
    param: &mut Array2<f64>,
    grad: &Array2<f64>,
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<()> {
    if param.dim() != grad.dim() || param.dim() != state.m.dim() {
        return Err(Error::shape("adam_step", param.dim(), grad.dim()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    ndarray::Zip::from(param)
        .and(grad)
        .and(&mut state.m)
        .and(&mut state.v)
        .for_each(|p, &g, m, v| {
            *m = config.beta1 * *m + (1.0 - config.beta1) * g;
            *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = array![[1.0, -2.0]];
        let mut s = AdamState::zeros((1, 2));
        adam_step(&mut p, &Array2::zeros((1, 2)), &mut s, &AdamConfig::default()).unwrap();
        assert_eq!(p, array![[1.0, -2.0]]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig::default();
        let mut p = array![[0.0, 0.0]];
        let mut s = AdamState::zeros((1, 2));
        adam_step(&mut p, &array![[3.0, -0.2]], &mut s, &cfg).unwrap();
        assert!((p[[0, 0]] + cfg.learning_rate).abs() < 1e-9);
        assert!((p[[0, 1]] - cfg.learning_rate).abs() < 1e-7);
    }
}
