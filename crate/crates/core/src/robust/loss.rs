//! Exponential squared loss `Q(zeta) = sum_i w_i exp(-r_i^2 / theta)` and
//! its coordinate-wise derivatives.

use crate::data::WorkingDesign;
use crate::error::{GxeError, Result};

/// Robustness and penalty tuning pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustTuning {
    pub theta: f64,
    pub lambda: f64,
}

impl RobustTuning {
    pub fn new(theta: f64, lambda: f64) -> Result<Self> {
        check_theta(theta)?;
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(GxeError::Parameter(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(RobustTuning { theta, lambda })
    }
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(GxeError::Parameter(format!("theta must be > 0, got {theta}")))
    }
}

pub(crate) fn loss_from_residuals(residuals: &[f64], weights: &[f64], theta: f64) -> f64 {
    let inv = 1.0 / theta;
    residuals
        .iter()
        .zip(weights)
        .map(|(&r, &w)| w * (-r * r * inv).exp())
        .sum()
}

/// `(Q_k, Q_kk^MM)` for column `col` at the given residuals.
///
/// The curvature is `-2/theta sum w u^2 exp(-r^2/theta)`. Since `exp(-s/theta)`
/// is convex in `s = r^2`, the quadratic with this curvature touching `Q` at
/// the current point minorizes `Q` along the whole coordinate line.
#[inline]
pub(crate) fn coordinate_derivatives(col: &[f64], residuals: &[f64], weights: &[f64], theta: f64) -> (f64, f64) {
    let inv = 1.0 / theta;
    let mut g = 0.0;
    let mut h = 0.0;
    for ((&u, &r), &w) in col.iter().zip(residuals).zip(weights) {
        let we = w * (-r * r * inv).exp();
        g += we * u * r;
        h += we * u * u;
    }
    (2.0 * inv * g, -2.0 * inv * h)
}

/// Exponential squared loss at `zeta`.
pub fn exp_sq_loss(zeta: &[f64], design: &WorkingDesign, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    check_len(zeta, design)?;
    let r = design.residuals(zeta);
    Ok(loss_from_residuals(&r, design.weights_slice(), theta))
}

/// `Q(zeta) - lambda * ||zeta||_1` over the active coordinates.
pub fn penalized_objective(zeta: &[f64], design: &WorkingDesign, tuning: RobustTuning) -> Result<f64> {
    let q = exp_sq_loss(zeta, design, tuning.theta)?;
    Ok(q - tuning.lambda * l1_active(zeta, &design.active))
}

pub(crate) fn l1_active(zeta: &[f64], active: &[bool]) -> f64 {
    zeta.iter()
        .zip(active)
        .filter(|(_, &a)| a)
        .map(|(b, _)| b.abs())
        .sum()
}

/// Weighted least-squares loss `sum_i w_i r_i^2`.
pub fn weighted_ls_loss(zeta: &[f64], design: &WorkingDesign) -> f64 {
    design
        .residuals(zeta)
        .iter()
        .zip(design.weights_slice())
        .map(|(r, w)| w * r * r)
        .sum()
}

/// Gradient `Q_k` and MM curvature `Q_kk^MM` for coordinate `k`.
pub fn grad_and_mm_curvature(zeta: &[f64], k: usize, design: &WorkingDesign, theta: f64) -> Result<(f64, f64)> {
    check_theta(theta)?;
    check_len(zeta, design)?;
    if k >= design.dim() {
        return Err(GxeError::Dimension(format!("coordinate {k} out of range")));
    }
    let r = design.residuals(zeta);
    Ok(coordinate_derivatives(design.column(k), &r, design.weights_slice(), theta))
}

fn check_len(zeta: &[f64], design: &WorkingDesign) -> Result<()> {
    if zeta.len() != design.dim() {
        return Err(GxeError::Dimension(format!(
            "coefficient vector has {} entries, design has {} columns",
            zeta.len(),
            design.dim()
        )));
    }
    Ok(())
}
