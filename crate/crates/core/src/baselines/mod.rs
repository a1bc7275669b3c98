//! Comparator estimators: unrobust weighted-LS Lasso, Stute's unpenalized
//! weighted LS with p-value ranking, and the quantile Lasso.

mod quantile;
mod stute;
mod wls;

pub use quantile::{
    check_loss, default_bandwidth, gene_bandwidth, quantile_lasso_fit, quantile_lasso_surface,
    quantile_lasso_surface_designs, quantile_objective, smoothed_check_loss, QuantileOptions, DEFAULT_TAU,
};
pub use stute::{normal_p_value, stute_all, stute_fit, weighted_least_squares, StuteFit};
pub use wls::{wls_lasso_fit, wls_lasso_surface, wls_lasso_surface_designs, WlsOptions};
