use log::warn;

use super::loss::grad_and_mm_curvature;
use crate::data::{SurvivalDataset, WorkingDesign};
use crate::error::{GxeError, Result};

/// Inflation applied to `max_j ||U_j' W y||_inf` for the robust loss.
pub const ROBUST_LAMBDA_INFLATION: f64 = 20.0;
/// `lambda_min = lambda_max / LAMBDA_RATIO`.
pub const LAMBDA_RATIO: f64 = 1000.0;
pub const DEFAULT_N_LAMBDA: usize = 50;
pub const DEFAULT_N_THETA: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct GridProvenance {
    /// `max_j ||U_j' W y||_inf` before inflation.
    pub base_lambda: f64,
    /// `ROBUST_LAMBDA_INFLATION * base_lambda`.
    pub rule_lambda_max: f64,
    /// Largest lambda on the path; above the rule value when it was extended.
    pub lambda_max: f64,
    /// Lambdas prepended above the rule value so that every fit at the top
    /// of the path is zero.
    pub extended: usize,
    pub lambda_min: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub n_lambda: usize,
    pub n_theta: usize,
}

/// Decreasing lambdas crossed with increasing thetas.
///
/// Comparator paths without a robustness parameter use an empty `thetas`.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningGrid {
    pub lambdas: Vec<f64>,
    pub thetas: Vec<f64>,
    pub provenance: GridProvenance,
}

impl TuningGrid {
    /// Number of theta slices in a surface over this grid (at least one).
    pub fn n_slices(&self) -> usize {
        self.thetas.len().max(1)
    }
}

/// `n` log-spaced points from `start` to `end` inclusive.
pub fn log_space(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![(start * end).sqrt()],
        _ => {
            let (a, b) = (start.ln(), end.ln());
            let mut out: Vec<f64> = (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect();
            out[0] = start;
            out[n - 1] = end;
            out
        }
    }
}

/// `max_k |sum_i w_i u_ik y_i|` over active columns of one normalized design.
pub fn max_weighted_correlation(design: &WorkingDesign) -> f64 {
    let w = design.weights_slice();
    let y = design.y_slice();
    (0..design.dim())
        .filter(|&k| design.active[k])
        .map(|k| {
            design
                .column(k)
                .iter()
                .zip(w)
                .zip(y)
                .map(|((u, w), y)| u * w * y)
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max)
}

/// Decreasing log-spaced path from `lambda_max` to `lambda_max / 1000`.
pub fn lambda_path(lambda_max: f64, n_lambda: usize) -> Vec<f64> {
    log_space(lambda_max, lambda_max / LAMBDA_RATIO, n_lambda)
}

/// Theta bounds `(min y^2 / 100, max y^2 * 100)` on the weighted-centred response.
///
/// `location` is the removed weighted mean; responses within round-off of it
/// count as zero.
pub fn theta_bounds(centred_y: &[f64], location: f64) -> Result<(f64, f64)> {
    let floor = (1e-12 * (1.0 + location.abs())).powi(2);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for &v in centred_y {
        let sq = v * v;
        if sq > floor {
            lo = lo.min(sq);
        }
        hi = hi.max(sq);
    }
    if hi <= floor {
        return Err(GxeError::DegenerateData("all responses are zero after centring".into()));
    }
    Ok((lo / 100.0, hi * 100.0))
}

/// Grid built from already-normalized designs (one per gene).
pub fn grid_from_designs(designs: &[WorkingDesign], n_lambda: usize, n_theta: usize) -> Result<TuningGrid> {
    if n_lambda < 2 || n_theta < 1 {
        return Err(GxeError::Parameter(format!(
            "need n_lambda >= 2 and n_theta >= 1, got {n_lambda} and {n_theta}"
        )));
    }
    let first = designs
        .first()
        .ok_or_else(|| GxeError::DegenerateData("no genes".into()))?;
    let location = first.norm.as_ref().map_or(0.0, |n| n.y_mean);
    let (theta_min, theta_max) = theta_bounds(first.y_slice(), location)?;
    let base_lambda = designs.iter().map(max_weighted_correlation).fold(0.0, f64::max);
    if !(base_lambda > 0.0) {
        return Err(GxeError::DegenerateData("no column correlates with the response".into()));
    }
    let rule_lambda_max = ROBUST_LAMBDA_INFLATION * base_lambda;
    let thetas = log_space(theta_min, theta_max, n_theta);
    let mut lambdas = lambda_path(rule_lambda_max, n_lambda);

    // At small theta the robust gradient at zero can exceed the rule value;
    // extend the path upward with the same spacing until it no longer does.
    let needed = zero_gradient_bound(designs, &thetas)?;
    let ratio = lambdas[0] / lambdas[1];
    let mut extended = 0;
    while lambdas[0] < needed {
        lambdas.insert(0, lambdas[0] * ratio);
        extended += 1;
    }
    if extended > 0 {
        warn!(
            "lambda_max rule {rule_lambda_max:.4e} is below the largest robust gradient at zero {needed:.4e}; \
             extended the path by {extended} values"
        );
    }
    Ok(TuningGrid {
        provenance: GridProvenance {
            base_lambda,
            rule_lambda_max,
            lambda_max: lambdas[0],
            extended,
            lambda_min: *lambdas.last().unwrap(),
            theta_min,
            theta_max,
            n_lambda,
            n_theta,
        },
        lambdas,
        thetas,
    })
}

/// `max |dQ/dzeta_k|` at `zeta = 0` over genes, thetas and active columns:
/// any lambda at or above it keeps a zero start at zero.
pub fn zero_gradient_bound(designs: &[WorkingDesign], thetas: &[f64]) -> Result<f64> {
    let mut bound: f64 = 0.0;
    for design in designs {
        let zero = vec![0.0; design.dim()];
        for &theta in thetas {
            for k in (0..design.dim()).filter(|&k| design.active[k]) {
                bound = bound.max(grad_and_mm_curvature(&zero, k, design, theta)?.0.abs());
            }
        }
    }
    Ok(bound)
}

/// Robust tuning grid for a dataset.
pub fn grid_from_data(ds: &SurvivalDataset, n_lambda: usize, n_theta: usize) -> Result<TuningGrid> {
    let designs = (0..ds.p())
        .map(|j| ds.working_design(j))
        .collect::<Result<Vec<_>>>()?;
    grid_from_designs(&designs, n_lambda, n_theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sort_and_weight, RawObservations, ResponseScale};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn raw(seed: u64) -> RawObservations {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 50;
        RawObservations {
            y: (0..n).map(|_| rng.random_range(-3.0..3.0)).collect(),
            delta: (0..n).map(|i| i % 5 != 0).collect(),
            x: Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0)),
            z: Array2::from_shape_fn((n, 4), |_| rng.random_range(-1.0..1.0)),
        }
    }

    #[test]
    fn lambda_ratio_is_exact() {
        let ds = sort_and_weight(raw(1)).unwrap();
        let grid = grid_from_data(&ds, 50, 10).unwrap();
        assert_eq!(grid.lambdas.len(), 50);
        assert_eq!(grid.thetas.len(), 10);
        let ratio = grid.lambdas[0] / grid.lambdas[49];
        assert!((ratio - 1000.0).abs() < 1e-9);
        assert!(grid.lambdas.windows(2).all(|w| w[0] > w[1]));
        assert!(grid.thetas.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(grid.lambdas[0], 20.0 * grid.provenance.base_lambda);
    }

    fn centred_grid(raw: RawObservations) -> TuningGrid {
        let ds = sort_and_weight(raw).unwrap();
        let designs: Vec<_> = (0..ds.p())
            .map(|j| ds.working_design_with(j, ResponseScale::Centred).unwrap())
            .collect();
        grid_from_designs(&designs, 10, 3).unwrap()
    }

    #[test]
    fn scaling_response_scales_centred_grid() {
        let base = raw(2);
        let mut scaled = base.clone();
        scaled.y.iter_mut().for_each(|v| *v *= 10.0);
        let (g1, g2) = (centred_grid(base.clone()), centred_grid(scaled.clone()));
        assert!((g2.provenance.lambda_max / g1.provenance.lambda_max - 10.0).abs() < 1e-9);
        assert!((g2.provenance.theta_min / g1.provenance.theta_min - 100.0).abs() < 1e-9);
        assert!((g2.provenance.theta_max / g1.provenance.theta_max - 100.0).abs() < 1e-9);
        // on the unit-variance scale the grid does not move at all
        let u1 = grid_from_data(&sort_and_weight(base).unwrap(), 10, 3).unwrap();
        let u2 = grid_from_data(&sort_and_weight(scaled).unwrap(), 10, 3).unwrap();
        assert!((u2.provenance.lambda_max / u1.provenance.lambda_max - 1.0).abs() < 1e-9);
        assert!((u2.provenance.theta_max / u1.provenance.theta_max - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_response_is_degenerate() {
        let mut r = raw(3);
        r.y.iter_mut().for_each(|v| *v = 1.5);
        let ds = sort_and_weight(r).unwrap();
        assert!(matches!(grid_from_data(&ds, 10, 3), Err(GxeError::DegenerateData(_))));
        let ds = sort_and_weight(raw(3)).unwrap();
        assert!(grid_from_data(&ds, 1, 3).is_err());
    }
}
