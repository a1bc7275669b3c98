use std::fmt::Write as _;

use log::warn;
use rayon::prelude::*;

use super::roc::{rank_interactions, rank_stute, roc_auc, InteractionPath, RocCurve};
use super::{mean_and_sd, Method};
use crate::baselines::{quantile_lasso_surface_designs, stute_fit, wls_lasso_surface_designs, QuantileOptions, WlsOptions};
use crate::data::{ResponseScale, WorkingDesign};
use crate::error::{GxeError, Result};
use crate::robust::{fit_surface_designs, grid_from_designs, working_designs_with, SolverOptions, DEFAULT_N_LAMBDA, DEFAULT_N_THETA};
use crate::sim::{gen_dataset, GroundTruth, ScenarioConfig};

/// Grid sizes and solver settings shared by every method in an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOptions {
    pub n_lambda: usize,
    pub n_theta: usize,
    pub solver: SolverOptions,
    pub wls: WlsOptions,
    pub quantile: QuantileOptions,
    pub response: ResponseScale,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            n_lambda: DEFAULT_N_LAMBDA,
            n_theta: DEFAULT_N_THETA,
            solver: SolverOptions::default(),
            wls: WlsOptions::default(),
            quantile: QuantileOptions::default(),
            response: ResponseScale::default(),
        }
    }
}

/// AUC of one method on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodScore {
    /// For the robust method, the best slice.
    pub auc: f64,
    /// Per-theta AUCs (one entry for the other methods).
    pub per_theta: Vec<f64>,
    pub roc: RocCurve,
    pub nonconverged: usize,
}

fn best_slice(path: &InteractionPath, method: Method, truth: &GroundTruth) -> Result<MethodScore> {
    let mut per_theta = Vec::with_capacity(path.n_slices);
    let mut best: Option<RocCurve> = None;
    for t in 0..path.n_slices {
        let roc = roc_auc(&rank_interactions(path, t, method.name())?, truth)?;
        per_theta.push(roc.auc);
        if best.as_ref().is_none_or(|b| roc.auc > b.auc) {
            best = Some(roc);
        }
    }
    let roc = best.ok_or_else(|| GxeError::Evaluation("surface has no theta slices".into()))?;
    Ok(MethodScore {
        auc: roc.auc,
        per_theta,
        roc,
        nonconverged: 0,
    })
}

/// Fits `method` to prebuilt designs and scores its interaction ranking.
pub fn score_method(
    designs: &[WorkingDesign],
    truth: &GroundTruth,
    method: Method,
    options: &ExperimentOptions,
) -> Result<MethodScore> {
    let surface = match method {
        Method::Robust => {
            let grid = grid_from_designs(designs, options.n_lambda, options.n_theta)?;
            fit_surface_designs(designs, &grid, &options.solver, true)?
        }
        Method::Unrobust => wls_lasso_surface_designs(designs, options.n_lambda, &options.wls)?,
        Method::Quantile => quantile_lasso_surface_designs(designs, options.n_lambda, &options.quantile)?,
        Method::Stute => {
            let fits: Vec<_> = designs.par_iter().map(stute_fit).collect();
            let q = designs.first().map_or(0, |d| d.dim().saturating_sub(2) / 2);
            let roc = roc_auc(&rank_stute(&fits, q)?, truth)?;
            return Ok(MethodScore {
                auc: roc.auc,
                per_theta: vec![roc.auc],
                roc,
                nonconverged: fits.iter().filter(|f| f.is_err()).count(),
            });
        }
    };
    let mut score = best_slice(&InteractionPath::from_surface(&surface), method, truth)?;
    score.nonconverged = surface.fits().filter(|f| !f.converged).count() + surface.failures.len();
    Ok(score)
}

/// One replicate: generate, then score each method.
pub fn run_replicate(config: &ScenarioConfig, methods: &[Method], options: &ExperimentOptions) -> Result<Vec<Result<MethodScore>>> {
    let (ds, truth) = gen_dataset(config)?;
    let designs = working_designs_with(&ds, options.response)?;
    Ok(methods
        .iter()
        .map(|&m| score_method(&designs, &truth, m, options))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub mean_auc: f64,
    pub sd_auc: f64,
    /// Successful replicates.
    pub replicates: usize,
    pub aucs: Vec<f64>,
    /// Mean AUC of each theta slice over replicates.
    pub per_theta_mean: Vec<f64>,
    /// Non-converged or failed fits summed over replicates.
    pub nonconverged: usize,
    /// ROC of the first successful replicate.
    pub first_roc: Option<RocCurve>,
}

/// Mean and sd of AUC per method for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub scenario: ScenarioConfig,
    pub label: String,
    pub requested_replicates: usize,
    pub methods: Vec<MethodSummary>,
    /// `(replicate, method, message)`, method `None` when generation failed.
    pub failures: Vec<(usize, Option<Method>, String)>,
}

/// Runs `replicates` independent datasets of `scenario` through each method.
///
/// Replicates failing for a method are dropped with a warning while they stay
/// under 10% of the total; more failures make the experiment an error.
pub fn run_experiment(
    scenario: &ScenarioConfig,
    methods: &[Method],
    replicates: usize,
    options: &ExperimentOptions,
) -> Result<ExperimentReport> {
    if replicates < 2 {
        return Err(GxeError::Parameter(format!("need at least 2 replicates, got {replicates}")));
    }
    if methods.is_empty() {
        return Err(GxeError::Parameter("no methods requested".into()));
    }
    scenario.validate()?;
    let outcomes: Vec<Result<Vec<Result<MethodScore>>>> = (0..replicates)
        .into_par_iter()
        .map(|r| run_replicate(&scenario.replicate(r as u64), methods, options))
        .collect();

    let mut failures = Vec::new();
    let mut per_method: Vec<Vec<MethodScore>> = vec![Vec::new(); methods.len()];
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Err(e) => failures.push((r, None, e.to_string())),
            Ok(scores) => {
                for (m, score) in scores.into_iter().enumerate() {
                    match score {
                        Ok(s) => per_method[m].push(s),
                        Err(e) => failures.push((r, Some(methods[m]), e.to_string())),
                    }
                }
            }
        }
    }

    let mut summaries = Vec::with_capacity(methods.len());
    for (m, scores) in per_method.into_iter().enumerate() {
        let method = methods[m];
        let failed = replicates - scores.len();
        if failed * 10 >= replicates {
            let first = failures
                .iter()
                .find(|f| f.1.is_none_or(|fm| fm == method))
                .map_or(String::new(), |f| format!("; first: replicate {}: {}", f.0, f.2));
            return Err(GxeError::Evaluation(format!(
                "{method}: {failed} of {replicates} replicates failed{first}"
            )));
        }
        if failed > 0 {
            warn!("{method}: excluding {failed} of {replicates} failed replicates");
        }
        let aucs: Vec<f64> = scores.iter().map(|s| s.auc).collect();
        let (mean_auc, sd_auc) = mean_and_sd(&aucs);
        let n_slices = scores.first().map_or(0, |s| s.per_theta.len());
        let per_theta_mean = (0..n_slices)
            .map(|t| mean_and_sd(&scores.iter().map(|s| s.per_theta[t]).collect::<Vec<_>>()).0)
            .collect();
        summaries.push(MethodSummary {
            method,
            mean_auc,
            sd_auc,
            replicates: scores.len(),
            aucs,
            per_theta_mean,
            nonconverged: scores.iter().map(|s| s.nonconverged).sum(),
            first_roc: scores.first().map(|s| s.roc.clone()),
        });
    }
    Ok(ExperimentReport {
        label: scenario.label(),
        scenario: scenario.clone(),
        requested_replicates: replicates,
        methods: summaries,
        failures,
    })
}

impl ExperimentReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }
}

/// `scenario,method,mean_auc,sd_auc,replicates` for all reports.
pub fn reports_to_csv(reports: &[ExperimentReport]) -> String {
    let mut out = String::from("scenario,method,mean_auc,sd_auc,replicates\n");
    for report in reports {
        for m in &report.methods {
            writeln!(
                out,
                "{},{},{:.16e},{:.16e},{}",
                report.label, m.method, m.mean_auc, m.sd_auc, m.replicates
            )
            .unwrap();
        }
    }
    out
}

/// Plain-text table of `AUC x 100 (sd)`, one row per scenario.
pub fn reports_to_table(reports: &[ExperimentReport]) -> String {
    let mut methods: Vec<Method> = Vec::new();
    for r in reports {
        for m in &r.methods {
            if !methods.contains(&m.method) {
                methods.push(m.method);
            }
        }
    }
    let width = reports.iter().map(|r| r.label.len()).max().unwrap_or(8).max(8);
    let mut out = format!("{:<width$}", "scenario");
    for m in &methods {
        write!(out, "  {:>12}", m.name()).unwrap();
    }
    out.push('\n');
    for r in reports {
        write!(out, "{:<width$}", r.label).unwrap();
        for m in &methods {
            let cell = r
                .summary(*m)
                .map_or("-".to_string(), |s| format!("{:.1} ({:.1})", 100.0 * s.mean_auc, 100.0 * s.sd_auc));
            write!(out, "  {cell:>12}").unwrap();
        }
        out.push('\n');
    }
    writeln!(
        out,
        "AUC x 100 (sd) over {} replicates",
        reports.first().map_or(0, |r| r.requested_replicates)
    )
    .unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ScenarioConfig {
        ScenarioConfig {
            n: 80,
            p: 12,
            seed: 21,
            ..ScenarioConfig::default()
        }
    }

    fn small_options() -> ExperimentOptions {
        ExperimentOptions {
            n_lambda: 12,
            n_theta: 3,
            ..ExperimentOptions::default()
        }
    }

    #[test]
    fn report_shape_and_bounds() {
        let report = run_experiment(&tiny(), &Method::ALL, 3, &small_options()).unwrap();
        assert_eq!(report.methods.len(), 4);
        for m in &report.methods {
            assert!((0.0..=1.0).contains(&m.mean_auc));
            assert!(m.sd_auc >= 0.0);
            assert_eq!(m.replicates, 3);
        }
        assert_eq!(report.summary(Method::Robust).unwrap().per_theta_mean.len(), 3);
        let csv = reports_to_csv(std::slice::from_ref(&report));
        assert_eq!(csv.lines().count(), 5);
        assert!(reports_to_table(&[report]).contains("robust"));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_experiment(&tiny(), &[Method::Robust, Method::Stute], 2, &small_options()).unwrap())
        };
        let (a, b) = (run(1), run(3));
        assert_eq!(reports_to_csv(&[a]), reports_to_csv(&[b]));
    }

    #[test]
    fn rejects_single_replicate() {
        assert!(run_experiment(&tiny(), &[Method::Stute], 1, &small_options()).is_err());
    }
}
