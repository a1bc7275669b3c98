use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::data::{ColumnRole, SurvivalDataset, WorkingDesign};
use crate::error::{GxeError, Result};
use crate::robust::{original_scale, working_designs};

/// Unpenalized KM-weighted least squares with Wald p-values for the interactions.
#[derive(Debug, Clone, PartialEq)]
pub struct StuteFit {
    pub gene: usize,
    pub zeta: Vec<f64>,
    pub zeta_normalized: Vec<f64>,
    /// Two-sided p-values for `gamma_1..q`.
    pub p_values: Vec<f64>,
    /// Sandwich standard errors for `gamma_1..q`, original scale.
    pub standard_errors: Vec<f64>,
    /// Wald statistics `gamma / se`.
    pub wald: Vec<f64>,
}

fn active_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &a)| a).map(|(k, _)| k).collect()
}

fn gram(design: &WorkingDesign, cols: &[usize], row_weight: impl Fn(usize) -> f64) -> DMatrix<f64> {
    let m = cols.len();
    let mut g = DMatrix::zeros(m, m);
    for a in 0..m {
        let ca = design.column(cols[a]);
        for b in 0..=a {
            let cb = design.column(cols[b]);
            let v: f64 = (0..design.n()).map(|i| row_weight(i) * ca[i] * cb[i]).sum();
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    g
}

/// Closed-form weighted least squares over the masked columns (others zero).
pub fn weighted_least_squares(design: &WorkingDesign, mask: &[bool]) -> Result<Vec<f64>> {
    let cols = active_indices(mask);
    let w = design.weights_slice();
    let bread = gram(design, &cols, |i| w[i]);
    let rhs = DVector::from_iterator(
        cols.len(),
        cols.iter().map(|&k| {
            design
                .column(k)
                .iter()
                .zip(w)
                .zip(design.y_slice())
                .map(|((u, w), y)| u * w * y)
                .sum::<f64>()
        }),
    );
    let chol = bread
        .cholesky()
        .ok_or(GxeError::SingularDesign { gene: design.gene })?;
    let sol = chol.solve(&rhs);
    let mut zeta = vec![0.0; design.dim()];
    for (idx, &k) in cols.iter().enumerate() {
        zeta[k] = sol[idx];
    }
    Ok(zeta)
}

/// Two-sided normal p-value for a Wald statistic.
pub fn normal_p_value(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Stute's estimator with a heteroskedasticity-robust sandwich variance
/// (KM weights held fixed) and normal reference distribution.
pub fn stute_fit(design: &WorkingDesign) -> Result<StuteFit> {
    let cols = active_indices(&design.active);
    let positive = design.weights.iter().filter(|&&w| w > 0.0).count();
    if positive <= design.dim() {
        return Err(GxeError::SingularDesign { gene: design.gene });
    }
    let interaction_cols: Vec<(usize, usize)> = design
        .roles
        .iter()
        .enumerate()
        .filter_map(|(k, r)| match r {
            ColumnRole::Interaction(e) => Some((*e, k)),
            _ => None,
        })
        .collect();
    if interaction_cols.iter().any(|&(_, k)| !design.active[k]) {
        return Err(GxeError::SingularDesign { gene: design.gene });
    }
    let w = design.weights_slice();
    let bread = gram(design, &cols, |i| w[i]);
    let chol = bread
        .cholesky()
        .ok_or(GxeError::SingularDesign { gene: design.gene })?;
    let zeta_normalized = weighted_least_squares(design, &design.active)?;
    let residuals = design.residuals(&zeta_normalized);
    let meat = gram(design, &cols, |i| {
        let wr = w[i] * residuals[i];
        wr * wr
    });
    let inv = chol.inverse();
    let cov = &inv * meat * &inv;

    let q = interaction_cols.len();
    let mut p_values = vec![1.0; q];
    let mut standard_errors = vec![f64::NAN; q];
    let mut wald = vec![0.0; q];
    let scale = design.norm.as_ref().map(|n| n.col_scale.clone());
    for &(e, k) in &interaction_cols {
        let idx = cols.iter().position(|&c| c == k).expect("active interaction");
        let var = cov[(idx, idx)];
        if !(var > 0.0) {
            return Err(GxeError::SingularDesign { gene: design.gene });
        }
        let se = var.sqrt();
        let z = zeta_normalized[k] / se;
        wald[e] = z;
        p_values[e] = normal_p_value(z);
        standard_errors[e] = match &scale {
            Some(s) => se / s[k],
            None => se,
        };
    }
    Ok(StuteFit {
        gene: design.gene,
        zeta: original_scale(design, &zeta_normalized),
        zeta_normalized,
        p_values,
        standard_errors,
        wald,
    })
}

/// Stute fits for all genes; singular genes come back as errors in place.
pub fn stute_all(ds: &SurvivalDataset) -> Result<Vec<Result<StuteFit>>> {
    let designs = working_designs(ds)?;
    Ok(designs.par_iter().map(stute_fit).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sort_and_weight, RawObservations};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn uncensored(seed: u64, n: usize, gamma: f64) -> SurvivalDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 2), |_| StandardNormal.sample(&mut rng));
        let z = Array2::from_shape_fn((n, 1), |_| StandardNormal.sample(&mut rng));
        let y = (0..n)
            .map(|i| {
                0.5 * x[[i, 0]] + gamma * z[[i, 0]] * x[[i, 1]] + rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        sort_and_weight(RawObservations {
            y,
            delta: vec![true; n],
            x,
            z,
        })
        .unwrap()
    }

    #[test]
    fn constant_weights_reproduce_ordinary_least_squares() {
        let ds = uncensored(1, 50, 0.7);
        let design = ds.working_design(0).unwrap();
        let fit = stute_fit(&design).unwrap();
        // OLS on the raw (uncentred) design with intercept
        let raw = crate::data::build_design(&ds, 0).unwrap();
        let u = DMatrix::from_fn(50, 6, |i, k| raw.u[[i, k]]);
        let y = DVector::from_iterator(50, ds.y().iter().copied());
        let beta = (u.transpose() * &u).cholesky().unwrap().solve(&(u.transpose() * y));
        for k in 0..6 {
            assert!((beta[k] - fit.zeta[k]).abs() < 1e-9, "coef {k}: {} vs {}", beta[k], fit.zeta[k]);
        }
    }

    #[test]
    fn p_values_order_like_wald_statistics() {
        let ds = uncensored(2, 80, 0.3);
        let fit = stute_fit(&ds.working_design(0).unwrap()).unwrap();
        assert!(fit.p_values.iter().all(|p| (0.0..=1.0).contains(p)));
        let mut by_p: Vec<usize> = (0..2).collect();
        by_p.sort_by(|&a, &b| fit.p_values[a].total_cmp(&fit.p_values[b]));
        let mut by_z: Vec<usize> = (0..2).collect();
        by_z.sort_by(|&a, &b| fit.wald[b].abs().total_cmp(&fit.wald[a].abs()));
        assert_eq!(by_p, by_z);
    }

    #[test]
    fn too_few_rows_is_singular() {
        let ds = uncensored(3, 6, 0.0);
        assert!(matches!(
            stute_fit(&ds.working_design(0).unwrap()),
            Err(GxeError::SingularDesign { .. })
        ));
    }
}
