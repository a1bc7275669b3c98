use super::loss::{exp_sq_loss, RobustTuning};
use super::solver::{cd_mm_fit_masked, original_scale, MarginalFit, SolverOptions};
use crate::data::{ColumnRole, WorkingDesign};
use crate::error::{GxeError, Result};

/// Unpenalized re-estimate on the hierarchy-respecting support.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyRefit {
    pub gene: usize,
    pub zeta: Vec<f64>,
    pub zeta_normalized: Vec<f64>,
    /// Exponential squared loss at the refit.
    pub objective: f64,
    /// Same loss at the penalized solution the refit started from.
    pub penalized_objective: f64,
    /// 0-based env indices of interactions selected by the penalized fit.
    pub selected: Vec<usize>,
    /// Selected interactions whose refit coefficient came out exactly zero.
    pub dropped_at_refit: Vec<usize>,
    pub converged: bool,
}

/// Re-maximizes the loss with no penalty over env main effects, the gene main
/// effect and exactly the interactions the penalized `fit` selected.
pub fn refit_hierarchy(fit: &MarginalFit, design: &WorkingDesign, options: &SolverOptions) -> Result<HierarchyRefit> {
    let theta = fit
        .theta
        .ok_or_else(|| GxeError::Parameter("hierarchy refit needs a robust fit".into()))?;
    if fit.zeta_normalized.len() != design.dim() {
        return Err(GxeError::Dimension("fit and design disagree on dimension".into()));
    }
    let mut mask = vec![false; design.dim()];
    let mut selected = Vec::new();
    for (k, role) in design.roles.iter().enumerate() {
        mask[k] = design.active[k]
            && match role {
                ColumnRole::Intercept => false,
                ColumnRole::Env(_) | ColumnRole::Gene => true,
                ColumnRole::Interaction(e) => {
                    let on = fit.zeta_normalized[k] != 0.0;
                    if on {
                        selected.push(*e);
                    }
                    on
                }
            };
    }
    let init: Vec<f64> = fit
        .zeta_normalized
        .iter()
        .zip(&mask)
        .map(|(&b, &m)| if m { b } else { 0.0 })
        .collect();
    let penalized_objective = exp_sq_loss(&fit.zeta_normalized, design, theta)?;
    let refit = cd_mm_fit_masked(design, RobustTuning::new(theta, 0.0)?, &init, &mask, options)?;
    let dropped_at_refit = selected
        .iter()
        .copied()
        .filter(|&e| {
            let k = design
                .roles
                .iter()
                .position(|r| *r == ColumnRole::Interaction(e))
                .expect("selected interaction has a column");
            refit.zeta_normalized[k] == 0.0
        })
        .collect();
    Ok(HierarchyRefit {
        gene: design.gene,
        zeta: original_scale(design, &refit.zeta_normalized),
        zeta_normalized: refit.zeta_normalized,
        objective: refit.objective,
        penalized_objective,
        selected,
        dropped_at_refit,
        converged: refit.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robust::grid::grid_from_data;
    use crate::sim::{gen_dataset, ScenarioConfig};

    #[test]
    fn refit_improves_loss_and_keeps_support() {
        let config = ScenarioConfig {
            n: 120,
            p: 10,
            seed: 3,
            ..ScenarioConfig::default()
        };
        let (ds, _) = gen_dataset(&config).unwrap();
        let grid = grid_from_data(&ds, 20, 3).unwrap();
        let options = SolverOptions::default();
        for gene in 0..10 {
            let design = ds.working_design(gene).unwrap();
            let tuning = RobustTuning::new(grid.thetas[1], grid.lambdas[10]).unwrap();
            let fit = super::super::solver::cd_mm_fit(&design, tuning, &vec![0.0; design.dim()], &options).unwrap();
            let refit = refit_hierarchy(&fit, &design, &options).unwrap();
            assert!(refit.objective >= refit.penalized_objective - 1e-10);
            for (k, role) in design.roles.iter().enumerate() {
                match role {
                    ColumnRole::Intercept => assert_eq!(refit.zeta_normalized[k], 0.0),
                    ColumnRole::Interaction(e) if !refit.selected.contains(e) => {
                        assert_eq!(refit.zeta_normalized[k], 0.0)
                    }
                    ColumnRole::Interaction(e) => {
                        assert!(refit.zeta_normalized[k] != 0.0 || refit.dropped_at_refit.contains(e))
                    }
                    _ => {}
                }
            }
        }
    }

    #[test]
    fn no_selected_interactions_gives_main_effects_model() {
        let config = ScenarioConfig {
            n: 100,
            p: 10,
            seed: 4,
            ..ScenarioConfig::default()
        };
        let (ds, _) = gen_dataset(&config).unwrap();
        let design = ds.working_design(0).unwrap();
        let grid = grid_from_data(&ds, 5, 3).unwrap();
        let options = SolverOptions::default();
        let tuning = RobustTuning::new(grid.thetas[1], grid.lambdas[0]).unwrap();
        let fit = super::super::solver::cd_mm_fit(&design, tuning, &vec![0.0; design.dim()], &options).unwrap();
        let refit = refit_hierarchy(&fit, &design, &options).unwrap();
        assert!(refit.selected.is_empty());
        let q = ds.q();
        assert!(refit.zeta_normalized[q + 2..].iter().all(|&b| b == 0.0));
        // direct main-effects-only fit agrees
        let mut mask = vec![false; design.dim()];
        mask[1..q + 2].iter_mut().for_each(|m| *m = true);
        let direct = cd_mm_fit_masked(
            &design,
            RobustTuning::new(tuning.theta, 0.0).unwrap(),
            &vec![0.0; design.dim()],
            &mask,
            &options,
        )
        .unwrap();
        for (a, b) in direct.zeta_normalized.iter().zip(&refit.zeta_normalized) {
            assert!((a - b).abs() < 1e-2);
        }
    }
}
