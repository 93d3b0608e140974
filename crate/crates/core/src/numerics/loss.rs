//! Losses and metrics.

use crate::error::{Error, Result};

/// Floor applied to the true-class probability before taking its log.
pub const PROB_FLOOR: f64 = 1e-12;

const DISTRIBUTION_TOL: f64 = 1e-6;

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|v| v / sum).collect()
}

/// `-ln(max(p[label], 1e-12))` for a probability vector `p`.
pub fn cross_entropy(predicted: &[f64], label: usize) -> Result<f64> {
    if label >= predicted.len() {
        return Err(Error::Index {
            index: label,
            len: predicted.len(),
        });
    }
    if predicted.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::validation("probabilities must lie in [0, 1]"));
    }
    let total: f64 = predicted.iter().sum();
    if (total - 1.0).abs() > DISTRIBUTION_TOL {
        return Err(Error::validation(format!(
            "probabilities sum to {total}, not 1"
        )));
    }
    Ok(-predicted[label].max(PROB_FLOOR).ln())
}

/// Cross-entropy of `softmax(logits)` plus its gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    let p = softmax(logits);
    let loss = cross_entropy(&p, label)?;
    let mut grad = p;
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Squared error and its derivative w.r.t. the prediction.
pub fn squared_error(predicted: f64, target: f64) -> (f64, f64) {
    let diff = predicted - target;
    (diff * diff, 2.0 * diff)
}

/// Mean absolute difference between predicted and reference bone ages.
pub fn mae_in_months(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.is_empty() || actual.is_empty() {
        return Err(Error::validation("mae_in_months needs at least one pair"));
    }
    if predicted.len() != actual.len() {
        return Err(Error::validation(format!(
            "{} predictions for {} references",
            predicted.len(),
            actual.len()
        )));
    }
    let total: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum();
    Ok(total / predicted.len() as f64)
}
