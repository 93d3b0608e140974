//! Central finite-difference gradient checking.

use crate::numerics::tensor::Tensor;

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for the relative error, so entries whose true gradient
/// is ~0 are judged on absolute error instead.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Flat index of the worst entry.
    pub worst_index: usize,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central-difference derivative of `loss` at every entry of `params`.
pub fn numerical_gradient(loss: impl Fn(&Tensor) -> f64, params: &Tensor) -> Tensor {
    let mut probe = params.clone();
    let mut grad = Tensor::zeros(params.shape());
    for i in 0..params.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + FD_STEP;
        let up = loss(&probe);
        probe.data_mut()[i] = orig - FD_STEP;
        let down = loss(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * FD_STEP);
    }
    grad
}

/// Compares `analytic` against central differences of `loss` around `params`.
pub fn numerical_gradient_check(
    loss: impl Fn(&Tensor) -> f64,
    params: &Tensor,
    analytic: &Tensor,
    tolerance: f64,
) -> GradCheckReport {
    let numeric = numerical_gradient(loss, params);
    let mut worst = (0.0f64, 0usize);
    for (i, (a, n)) in analytic.data().iter().zip(numeric.data()).enumerate() {
        let e = relative_error(*a, *n);
        if e > worst.0 || e.is_nan() {
            worst = (e, i);
        }
    }
    let shapes_agree = analytic.shape() == params.shape();
    GradCheckReport {
        max_rel_error: worst.0,
        worst_index: worst.1,
        checked: params.len(),
        tolerance,
        passed: shapes_agree && worst.0 < tolerance,
    }
}
