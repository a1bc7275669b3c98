use super::loss::{coordinate_derivatives, l1_active, loss_from_residuals, RobustTuning};
use crate::data::WorkingDesign;
use crate::error::{GxeError, Result};

/// Stopping rules for the coordinate descent MM solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Per-coordinate inner loop stops once a step moves less than this.
    pub inner_tol: f64,
    /// Outer loop stops once a sweep moves zeta less than this (Euclidean).
    pub outer_tol: f64,
    pub max_sweeps: usize,
    pub max_inner: usize,
    /// A fit only counts as converged when its KKT residual is below `kkt_tol * n`.
    pub kkt_tol: f64,
    /// Record the objective after every coordinate update (slow; for tests).
    pub track_updates: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            inner_tol: 1e-3,
            outer_tol: 1e-3,
            max_sweeps: 500,
            max_inner: 1000,
            kkt_tol: 1e-3,
            track_updates: false,
        }
    }
}

/// Estimate for one marginal model at one tuning point.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalFit {
    pub gene: usize,
    /// Original-scale coefficients `(intercept, alpha_1..q, beta, gamma_1..q)`.
    pub zeta: Vec<f64>,
    pub zeta_normalized: Vec<f64>,
    pub lambda: f64,
    /// `None` for the least-squares and quantile comparators.
    pub theta: Option<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
    /// Penalized objective after each sweep, starting with the initial value.
    pub sweep_objectives: Vec<f64>,
    /// Smallest change of the penalized objective over single coordinate
    /// updates; only populated with `track_updates`.
    pub worst_update: Option<f64>,
}

impl MarginalFit {
    pub fn tuning(&self) -> Option<RobustTuning> {
        self.theta.map(|theta| RobustTuning {
            theta,
            lambda: self.lambda,
        })
    }

    /// Number of nonzero normalized coefficients.
    pub fn nonzeros(&self) -> usize {
        self.zeta_normalized.iter().filter(|&&b| b != 0.0).count()
    }
}

#[inline]
pub(crate) fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

pub(crate) fn original_scale(design: &WorkingDesign, zeta_normalized: &[f64]) -> Vec<f64> {
    match &design.norm {
        Some(norm) => norm.to_original(zeta_normalized),
        None => zeta_normalized.to_vec(),
    }
}

/// Maximizes `Q_theta(zeta) - lambda ||zeta||_1` by cyclic coordinate MM steps.
///
/// Each step maximizes the quadratic minorizer plus the l1 term exactly:
/// a Newton-MM step followed by soft-thresholding at `lambda / |Q_kk^MM|`.
pub fn cd_mm_fit(
    design: &WorkingDesign,
    tuning: RobustTuning,
    init: &[f64],
    options: &SolverOptions,
) -> Result<MarginalFit> {
    cd_mm_fit_masked(design, tuning, init, &design.active, options)
}

/// [`cd_mm_fit`] restricted to the coordinates flagged in `mask`; the rest stay at `init`.
pub fn cd_mm_fit_masked(
    design: &WorkingDesign,
    tuning: RobustTuning,
    init: &[f64],
    mask: &[bool],
    options: &SolverOptions,
) -> Result<MarginalFit> {
    let tuning = RobustTuning::new(tuning.theta, tuning.lambda)?;
    let d = design.dim();
    if init.len() != d || mask.len() != d {
        return Err(GxeError::Dimension(format!(
            "init has {} entries and mask {}, design has {d} columns",
            init.len(),
            mask.len()
        )));
    }
    let theta = tuning.theta;
    let lambda = tuning.lambda;
    let weights = design.weights_slice();
    let mut zeta = init.to_vec();
    let mut residuals = design.residuals(&zeta);
    let objective_at = |r: &[f64], z: &[f64]| loss_from_residuals(r, weights, theta) - lambda * l1_active(z, mask);

    let mut current = objective_at(&residuals, &zeta);
    let mut sweep_objectives = vec![current];
    let mut worst_update: Option<f64> = None;
    let kkt_limit = options.kkt_tol * design.nominal_n as f64;
    let mut converged = false;
    let mut kkt = f64::INFINITY;
    let mut sweeps = 0;

    while sweeps < options.max_sweeps {
        sweeps += 1;
        let previous = zeta.clone();
        for k in (0..d).filter(|&k| mask[k]) {
            let col = design.column(k);
            for _ in 0..options.max_inner {
                let (g, h) = coordinate_derivatives(col, &residuals, weights, theta);
                if !(h < 0.0) {
                    break;
                }
                let old = zeta[k];
                let curvature = -h;
                let new = soft_threshold(old + g / curvature, lambda / curvature);
                let step = new - old;
                if step != 0.0 {
                    zeta[k] = new;
                    for (r, &u) in residuals.iter_mut().zip(col) {
                        *r -= u * step;
                    }
                    if options.track_updates {
                        let value = objective_at(&residuals, &zeta);
                        let gain = value - current;
                        worst_update = Some(worst_update.map_or(gain, |w: f64| w.min(gain)));
                        current = value;
                    }
                }
                if step.abs() <= options.inner_tol {
                    break;
                }
            }
        }
        current = objective_at(&residuals, &zeta);
        if !current.is_finite() || zeta.iter().any(|b| !b.is_finite()) {
            return Err(GxeError::Diverged {
                iterations: sweeps,
                summary: format!(
                    "objective {current} after sweep {sweeps}; first objectives {:?}",
                    &sweep_objectives[..sweep_objectives.len().min(5)]
                ),
            });
        }
        sweep_objectives.push(current);
        let moved = zeta
            .iter()
            .zip(&previous)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if moved <= options.outer_tol {
            kkt = kkt_from_residuals(design, &zeta, &residuals, tuning, mask);
            if kkt <= kkt_limit {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        kkt = kkt_from_residuals(design, &zeta, &residuals, tuning, mask);
    }
    Ok(MarginalFit {
        gene: design.gene,
        zeta: original_scale(design, &zeta),
        zeta_normalized: zeta,
        lambda,
        theta: Some(theta),
        objective: current,
        iterations: sweeps,
        converged,
        kkt_residual: kkt,
        sweep_objectives,
        worst_update,
    })
}

fn kkt_from_residuals(
    design: &WorkingDesign,
    zeta: &[f64],
    residuals: &[f64],
    tuning: RobustTuning,
    mask: &[bool],
) -> f64 {
    let weights = design.weights_slice();
    (0..design.dim())
        .filter(|&k| mask[k])
        .map(|k| {
            let (g, _) = coordinate_derivatives(design.column(k), residuals, weights, tuning.theta);
            subgradient_violation(g, zeta[k], tuning.lambda)
        })
        .fold(0.0, f64::max)
}

/// Violation of `g = lambda sign(b)` (b != 0) or `|g| <= lambda` (b = 0).
#[inline]
pub(crate) fn subgradient_violation(gradient: f64, coef: f64, lambda: f64) -> f64 {
    if coef != 0.0 {
        (gradient - lambda * coef.signum()).abs()
    } else {
        (gradient.abs() - lambda).max(0.0)
    }
}

/// Largest KKT violation of a robust fit, over the design's active coordinates.
pub fn kkt_check(fit: &MarginalFit, design: &WorkingDesign) -> f64 {
    let theta = fit.theta.expect("kkt_check needs a robust fit");
    let residuals = design.residuals(&fit.zeta_normalized);
    kkt_from_residuals(
        design,
        &fit.zeta_normalized,
        &residuals,
        RobustTuning {
            theta,
            lambda: fit.lambda,
        },
        &design.active,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robust::loss::{grad_and_mm_curvature, penalized_objective};
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normalized_instance(rng: &mut ChaCha8Rng, n: usize, d: usize, noise: f64) -> WorkingDesign {
        let u = Array2::from_shape_fn((n, d), |_| StandardNormal.sample(rng));
        let beta: Vec<f64> = (0..d).map(|k| if k % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let y = Array1::from_shape_fn(n, |i| {
            (0..d).map(|k| u[[i, k]] * beta[k]).sum::<f64>() + noise * rng.sample::<f64, _>(StandardNormal)
        });
        let w = Array1::from_elem(n, 1.0 / n as f64);
        WorkingDesign::from_columns(y, u, w).unwrap()
    }

    #[test]
    fn soft_threshold_branches() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
    }

    #[test]
    fn objective_never_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let options = SolverOptions {
            track_updates: true,
            ..SolverOptions::default()
        };
        for case in 0..20 {
            let d = normalized_instance(&mut rng, 60, 5, 1.0);
            let theta = [0.3, 1.0, 4.0, 30.0][case % 4];
            let fit = cd_mm_fit(&d, RobustTuning::new(theta, 0.05).unwrap(), &[0.0; 5], &options).unwrap();
            assert!(fit.worst_update.unwrap_or(0.0) >= -1e-10);
            for pair in fit.sweep_objectives.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-10);
            }
        }
    }

    #[test]
    fn zero_at_origin_when_lambda_dominates_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let d = normalized_instance(&mut rng, 40, 4, 0.5);
        let theta = 2.0;
        let max_grad = (0..4)
            .map(|k| grad_and_mm_curvature(&[0.0; 4], k, &d, theta).unwrap().0.abs())
            .fold(0.0, f64::max);
        let fit = cd_mm_fit(&d, RobustTuning::new(theta, max_grad).unwrap(), &[0.0; 4], &SolverOptions::default())
            .unwrap();
        assert!(fit.zeta_normalized.iter().all(|&b| b == 0.0));
        assert_eq!(kkt_check(&fit, &d), 0.0);
        assert!(fit.converged);
    }

    #[test]
    fn perturbing_a_converged_fit_raises_the_violation() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let d = normalized_instance(&mut rng, 80, 4, 0.5);
        let tuning = RobustTuning::new(3.0, 0.01).unwrap();
        let strict = SolverOptions {
            inner_tol: 1e-9,
            outer_tol: 1e-9,
            ..SolverOptions::default()
        };
        let fit = cd_mm_fit(&d, tuning, &[0.0; 4], &strict).unwrap();
        assert!(fit.converged);
        let base = kkt_check(&fit, &d);
        let k = fit.zeta_normalized.iter().position(|&b| b != 0.0).unwrap();
        let mut moved = fit.clone();
        moved.zeta_normalized[k] += 0.05;
        assert!(kkt_check(&moved, &d) > base);
    }

    #[test]
    fn masked_coordinates_are_left_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let d = normalized_instance(&mut rng, 50, 4, 0.5);
        let init = [0.0, 0.7, 0.0, 0.0];
        let mask = [true, false, true, false];
        let fit = cd_mm_fit_masked(&d, RobustTuning::new(2.0, 0.0).unwrap(), &init, &mask, &SolverOptions::default())
            .unwrap();
        assert_eq!(fit.zeta_normalized[1], 0.7);
        assert_eq!(fit.zeta_normalized[3], 0.0);
        assert!(fit.zeta_normalized[0] != 0.0);
    }

    #[test]
    fn final_objective_matches_public_evaluator() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let d = normalized_instance(&mut rng, 50, 3, 1.0);
        let tuning = RobustTuning::new(1.5, 0.02).unwrap();
        let fit = cd_mm_fit(&d, tuning, &[0.0; 3], &SolverOptions::default()).unwrap();
        let direct = penalized_objective(&fit.zeta_normalized, &d, tuning).unwrap();
        assert!((direct - fit.objective).abs() < 1e-12);
    }
}
