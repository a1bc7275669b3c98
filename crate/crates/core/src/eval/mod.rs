//! Interaction ranking, ROC/AUC scoring, the multi-method experiment runner,
//! fixed-count selection, leave-one-out stability and overlap tables.

mod experiment;
mod roc;
mod selection;

use std::fmt;
use std::str::FromStr;

pub use experiment::{
    reports_to_csv, reports_to_table, run_experiment, run_replicate, score_method, ExperimentOptions,
    ExperimentReport, MethodScore, MethodSummary,
};
pub use roc::{
    rank_interactions, rank_stute, roc_auc, roc_from_labels, InteractionPath, InteractionRanking, RankedPair,
    RocCurve, TIE_POLICY,
};
pub use selection::{
    cv_theta, overlap_table, select_fixed_count, stability_loo, MethodSelection, OverlapTable, SelectedInteraction,
    Selection, StabilityReport, CV_FOLDS,
};

use crate::error::{GxeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Robust,
    Unrobust,
    Stute,
    Quantile,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Robust, Method::Unrobust, Method::Stute, Method::Quantile];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Robust => "robust",
            Method::Unrobust => "unrobust",
            Method::Stute => "stute",
            Method::Quantile => "quantile",
        }
    }

    /// Comma-separated method names, e.g. `robust,stute`.
    pub fn parse_list(text: &str) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let m: Method = part.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(GxeError::Parameter("empty method list".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = GxeError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| GxeError::Parameter(format!("unknown method `{s}` (robust, unrobust, stute, quantile)")))
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = compensated_sum(values) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let squares: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    (mean, (compensated_sum(&squares) / (n - 1.0)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!(Method::parse_list("robust, stute,robust").unwrap(), vec![Method::Robust, Method::Stute]);
        assert!(Method::parse_list("lasso").is_err());
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let values = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(&values), 2.0);
        let (mean, sd) = mean_and_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(mean, 2.5);
        assert!((sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
