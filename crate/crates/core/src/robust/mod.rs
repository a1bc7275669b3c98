//! Penalized exponential squared loss: coordinate descent MM solver, tuning
//! grid, solution surfaces and the hierarchy refit.

mod grid;
mod loss;
mod refit;
mod solver;
mod surface;

pub use grid::{
    grid_from_data, grid_from_designs, lambda_path, log_space, max_weighted_correlation, theta_bounds,
    zero_gradient_bound, GridProvenance, TuningGrid, DEFAULT_N_LAMBDA, DEFAULT_N_THETA, LAMBDA_RATIO, ROBUST_LAMBDA_INFLATION,
};
pub use loss::{exp_sq_loss, grad_and_mm_curvature, penalized_objective, weighted_ls_loss, RobustTuning};
pub use refit::{refit_hierarchy, HierarchyRefit};
pub use solver::{cd_mm_fit, cd_mm_fit_masked, kkt_check, MarginalFit, SolverOptions};
pub use surface::{
    fit_surface, fit_surface_designs, surface_discrepancies, working_designs, working_designs_with,
    SolutionSurface,
};

pub(crate) use solver::{original_scale, soft_threshold, subgradient_violation};
