//! Adam with bias correction and optional AMSGrad.

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Hyperparameters. The default is `{lr: 0.001, beta_1: 0.9, beta_2: 0.999,
/// epsilon: 1e-7, amsgrad: false, decay: 0.0}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta_1: f64,
    pub beta_2: f64,
    pub epsilon: f64,
    pub amsgrad: bool,
    /// Time-based decay: the step size at step `t` is `lr / (1 + decay·t)`.
    pub decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta_1: 0.9,
            beta_2: 0.999,
            epsilon: 1e-7,
            amsgrad: false,
            decay: 0.0,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Default::default()
        }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: Tensor,
    pub second_moment: Tensor,
    /// Running maximum of the second moment; only touched with `amsgrad`.
    pub max_second_moment: Tensor,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(shape: &[usize], config: AdamConfig) -> Self {
        AdamState {
            step_count: 0,
            first_moment: Tensor::zeros(shape),
            second_moment: Tensor::zeros(shape),
            max_second_moment: Tensor::zeros(shape),
            config,
        }
    }

    pub fn for_param(param: &Tensor, config: AdamConfig) -> Self {
        Self::new(param.shape(), config)
    }
}

/// One in-place Adam update of `params` given `grads`.
pub fn adam_step(params: &mut Tensor, grads: &Tensor, state: &mut AdamState) -> Result<()> {
    if params.shape() != grads.shape() || params.shape() != state.first_moment.shape() {
        return Err(Error::validation(format!(
            "adam shapes disagree: params {:?}, grads {:?}, state {:?}",
            params.shape(),
            grads.shape(),
            state.first_moment.shape()
        )));
    }
    let c = state.config;
    let lr = c.learning_rate / (1.0 + c.decay * state.step_count as f64);
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - c.beta_1.powi(t);
    let bc2 = 1.0 - c.beta_2.powi(t);
    let m = state.first_moment.data_mut();
    let v = state.second_moment.data_mut();
    let vmax = state.max_second_moment.data_mut();
    for (i, (p, g)) in params.data_mut().iter_mut().zip(grads.data()).enumerate() {
        m[i] = c.beta_1 * m[i] + (1.0 - c.beta_1) * g;
        v[i] = c.beta_2 * v[i] + (1.0 - c.beta_2) * g * g;
        let v_used = if c.amsgrad {
            vmax[i] = vmax[i].max(v[i]);
            vmax[i]
        } else {
            v[i]
        };
        let m_hat = m[i] / bc1;
        let v_hat = v_used / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + c.epsilon);
    }
    Ok(())
}
