use rayon::prelude::*;

use crate::data::{SurvivalDataset, WorkingDesign};
use crate::error::{GxeError, Result};
use crate::robust::{
    lambda_path, max_weighted_correlation, original_scale, soft_threshold, subgradient_violation,
    working_designs, GridProvenance, MarginalFit, SolutionSurface, TuningGrid,
};

/// Stopping rules for the weighted least-squares Lasso.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WlsOptions {
    pub max_sweeps: usize,
    /// Converged once the KKT residual is below `kkt_tol * n`.
    pub kkt_tol: f64,
}

impl Default for WlsOptions {
    fn default() -> Self {
        WlsOptions {
            max_sweeps: 10_000,
            kkt_tol: 1e-12,
        }
    }
}

fn ls_gradient(col: &[f64], residuals: &[f64], weights: &[f64]) -> f64 {
    col.iter()
        .zip(residuals)
        .zip(weights)
        .map(|((u, r), w)| w * u * r)
        .sum()
}

fn ls_objective(residuals: &[f64], weights: &[f64], zeta: &[f64], active: &[bool], lambda: f64) -> f64 {
    let loss: f64 = residuals.iter().zip(weights).map(|(r, w)| w * r * r).sum();
    let l1: f64 = zeta
        .iter()
        .zip(active)
        .filter(|(_, &a)| a)
        .map(|(b, _)| b.abs())
        .sum();
    0.5 * loss + lambda * l1
}

/// Minimizes `1/2 sum w_i (y_i - u_i' zeta)^2 + lambda ||zeta||_1` by cyclic
/// coordinate descent with exact soft-threshold updates.
///
/// With the 1/2 factor the all-zero solution holds exactly for
/// `lambda >= ||U' W y||_inf`.
pub fn wls_lasso_fit(design: &WorkingDesign, lambda: f64, init: &[f64], options: &WlsOptions) -> Result<MarginalFit> {
    let d = design.dim();
    if init.len() != d {
        return Err(GxeError::Dimension(format!("init has {} entries, design {d}", init.len())));
    }
    if !(lambda >= 0.0) {
        return Err(GxeError::Parameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let weights = design.weights_slice();
    let active = &design.active;
    let curvature: Vec<f64> = (0..d)
        .map(|k| design.column(k).iter().zip(weights).map(|(u, w)| w * u * u).sum())
        .collect();
    let mut zeta = init.to_vec();
    let mut residuals = design.residuals(&zeta);
    let mut sweep_objectives = vec![ls_objective(&residuals, weights, &zeta, active, lambda)];
    let limit = options.kkt_tol * design.nominal_n as f64;
    let mut kkt = f64::INFINITY;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < options.max_sweeps {
        sweeps += 1;
        for k in (0..d).filter(|&k| active[k] && curvature[k] > 0.0) {
            let col = design.column(k);
            let g = ls_gradient(col, &residuals, weights);
            let new = soft_threshold(zeta[k] + g / curvature[k], lambda / curvature[k]);
            let step = new - zeta[k];
            if step != 0.0 {
                zeta[k] = new;
                residuals.iter_mut().zip(col).for_each(|(r, &u)| *r -= u * step);
            }
        }
        sweep_objectives.push(ls_objective(&residuals, weights, &zeta, active, lambda));
        kkt = (0..d)
            .filter(|&k| active[k])
            .map(|k| subgradient_violation(ls_gradient(design.column(k), &residuals, weights), zeta[k], lambda))
            .fold(0.0, f64::max);
        if kkt <= limit {
            converged = true;
            break;
        }
    }
    Ok(MarginalFit {
        gene: design.gene,
        zeta: original_scale(design, &zeta),
        zeta_normalized: zeta,
        lambda,
        theta: None,
        objective: *sweep_objectives.last().unwrap(),
        iterations: sweeps,
        converged,
        kkt_residual: kkt,
        sweep_objectives,
        worst_update: None,
    })
}

/// Unrobust Lasso path over `n_lambda` values from `max_j ||U_j' W y||_inf`
/// down by a factor of 1000, warm-started per gene.
pub fn wls_lasso_surface(ds: &SurvivalDataset, n_lambda: usize, options: &WlsOptions) -> Result<SolutionSurface> {
    let designs = working_designs(ds)?;
    wls_lasso_surface_designs(&designs, n_lambda, options)
}

pub fn wls_lasso_surface_designs(
    designs: &[WorkingDesign],
    n_lambda: usize,
    options: &WlsOptions,
) -> Result<SolutionSurface> {
    if n_lambda < 2 {
        return Err(GxeError::Parameter("need n_lambda >= 2".into()));
    }
    let roles = designs
        .first()
        .map(|d| d.roles.clone())
        .ok_or_else(|| GxeError::DegenerateData("no genes".into()))?;
    let lambda_max = designs.iter().map(max_weighted_correlation).fold(0.0, f64::max);
    if !(lambda_max > 0.0) {
        return Err(GxeError::DegenerateData("no column correlates with the response".into()));
    }
    let lambdas = lambda_path(lambda_max, n_lambda);
    let chains: Vec<Vec<Result<MarginalFit>>> = designs
        .par_iter()
        .map(|design| {
            let mut init = vec![0.0; design.dim()];
            lambdas
                .iter()
                .map(|&lambda| {
                    let fit = wls_lasso_fit(design, lambda, &init, options);
                    if let Ok(f) = &fit {
                        init.clone_from(&f.zeta_normalized);
                    }
                    fit
                })
                .collect()
        })
        .collect();
    let grid = TuningGrid {
        provenance: GridProvenance {
            base_lambda: lambda_max,
            rule_lambda_max: lambda_max,
            lambda_max,
            extended: 0,
            lambda_min: *lambdas.last().unwrap(),
            theta_min: f64::NAN,
            theta_max: f64::NAN,
            n_lambda,
            n_theta: 0,
        },
        lambdas,
        thetas: Vec::new(),
    };
    Ok(collect_chains(grid, designs.len(), roles, chains))
}

pub(crate) fn collect_chains(
    grid: TuningGrid,
    n_genes: usize,
    roles: Vec<crate::data::ColumnRole>,
    chains: Vec<Vec<Result<MarginalFit>>>,
) -> SolutionSurface {
    let mut fits = Vec::new();
    let mut failures = Vec::new();
    for (j, chain) in chains.into_iter().enumerate() {
        for (l, fit) in chain.into_iter().enumerate() {
            match fit {
                Ok(f) => fits.push(Some(f)),
                Err(e) => {
                    failures.push((j, l, 0, e.to_string()));
                    fits.push(None);
                }
            }
        }
    }
    SolutionSurface::from_parts(grid, n_genes, roles, fits, failures)
}
