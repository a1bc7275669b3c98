use std::collections::BTreeSet;
use std::fmt::Write as _;

use log::debug;
use rayon::prelude::*;

use super::experiment::ExperimentOptions;
use super::roc::rank_stute;
use super::Method;
use crate::baselines::{gene_bandwidth, quantile_lasso_fit, stute_fit, wls_lasso_fit, QuantileOptions};
use crate::data::{build_design, sort_and_weight, ColumnRole, SurvivalDataset, WorkingDesign};
use crate::error::{GxeError, Result};
use crate::robust::{
    cd_mm_fit, grid_from_designs, max_weighted_correlation, refit_hierarchy, working_designs_with, MarginalFit,
    RobustTuning,
    ROBUST_LAMBDA_INFLATION,
};

pub const CV_FOLDS: usize = 5;
const BISECTION_STEPS: usize = 60;

/// One selected interaction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectedInteraction {
    pub gene: usize,
    pub env: usize,
    /// Original scale.
    pub coef: f64,
    /// Selection strength used for trimming (`|gamma|` normalized, or the Stute score).
    pub strength: f64,
}

/// Interactions chosen under the fixed-count rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub method: Method,
    pub k: usize,
    pub lambda: Option<f64>,
    pub theta: Option<f64>,
    pub interactions: Vec<SelectedInteraction>,
    /// False when no lambda gave exactly `k` and the nearest larger set was trimmed.
    pub exact: bool,
}

impl Selection {
    pub fn pairs(&self) -> BTreeSet<(usize, usize)> {
        self.interactions.iter().map(|s| (s.gene, s.env)).collect()
    }

    pub fn genes(&self) -> BTreeSet<usize> {
        self.interactions.iter().map(|s| s.gene).collect()
    }
}

fn interaction_columns(design: &WorkingDesign) -> Vec<(usize, usize)> {
    design
        .roles
        .iter()
        .enumerate()
        .filter_map(|(k, r)| match r {
            ColumnRole::Interaction(e) => Some((*e, k)),
            _ => None,
        })
        .collect()
}

/// Per-gene fitting at one lambda for a penalized method.
struct PenalizedFitter<'a> {
    designs: &'a [WorkingDesign],
    method: Method,
    theta: Option<f64>,
    options: &'a ExperimentOptions,
    bandwidths: Vec<f64>,
}

impl<'a> PenalizedFitter<'a> {
    fn new(designs: &'a [WorkingDesign], method: Method, theta: Option<f64>, options: &'a ExperimentOptions) -> Result<Self> {
        if method == Method::Robust && theta.is_none() {
            return Err(GxeError::Parameter("robust selection needs theta".into()));
        }
        let bandwidths = if method == Method::Quantile {
            designs.par_iter().map(|d| gene_bandwidth(d, &options.quantile)).collect()
        } else {
            Vec::new()
        };
        Ok(PenalizedFitter {
            designs,
            method,
            theta,
            options,
            bandwidths,
        })
    }

    /// A lambda at which every gene's fit is zero.
    fn upper_lambda(&self) -> f64 {
        let base = self.designs.iter().map(max_weighted_correlation).fold(0.0, f64::max);
        match self.method {
            Method::Unrobust => base,
            _ => ROBUST_LAMBDA_INFLATION * base,
        }
    }

    fn fit(&self, j: usize, lambda: f64) -> Result<MarginalFit> {
        let design = &self.designs[j];
        let zero = vec![0.0; design.dim()];
        match self.method {
            Method::Robust => cd_mm_fit(
                design,
                RobustTuning::new(self.theta.unwrap_or(1.0), lambda)?,
                &zero,
                &self.options.solver,
            ),
            Method::Unrobust => wls_lasso_fit(design, lambda, &zero, &self.options.wls),
            Method::Quantile => {
                let options = QuantileOptions {
                    bandwidth: Some(self.bandwidths[j]),
                    ..self.options.quantile
                };
                quantile_lasso_fit(design, lambda, &zero, &options)
            }
            Method::Stute => Err(GxeError::Parameter("stute is not penalized".into())),
        }
    }

    /// Nonzero interactions across genes at `lambda`; failed fits select nothing.
    fn select_at(&self, lambda: f64) -> Vec<SelectedInteraction> {
        let per_gene: Vec<Vec<SelectedInteraction>> = (0..self.designs.len())
            .into_par_iter()
            .map(|j| match self.fit(j, lambda) {
                Ok(fit) => interaction_columns(&self.designs[j])
                    .into_iter()
                    .filter(|&(_, k)| fit.zeta_normalized[k] != 0.0)
                    .map(|(e, k)| SelectedInteraction {
                        gene: j,
                        env: e,
                        coef: fit.zeta[k],
                        strength: fit.zeta_normalized[k].abs(),
                    })
                    .collect(),
                Err(e) => {
                    debug!("gene {} at lambda {lambda:.4e}: {e}", j + 1);
                    Vec::new()
                }
            })
            .collect();
        per_gene.into_iter().flatten().collect()
    }
}

fn trim(mut chosen: Vec<SelectedInteraction>, k: usize) -> Vec<SelectedInteraction> {
    chosen.sort_by(|a, b| b.strength.total_cmp(&a.strength).then((a.gene, a.env).cmp(&(b.gene, b.env))));
    chosen.truncate(k);
    chosen.sort_by_key(|s| (s.gene, s.env));
    chosen
}

/// Tunes lambda by bisection on the log scale until exactly `k` interactions
/// are selected across all genes.
///
/// When the count jumps over `k`, the smallest larger set found is trimmed
/// to `k` by coefficient size. Stute takes the `k` smallest p-values.
pub fn select_fixed_count(
    designs: &[WorkingDesign],
    method: Method,
    theta: Option<f64>,
    k: usize,
    options: &ExperimentOptions,
) -> Result<Selection> {
    if k == 0 {
        return Err(GxeError::Parameter("selection count k must be >= 1".into()));
    }
    if method == Method::Stute {
        let fits: Vec<_> = designs.par_iter().map(stute_fit).collect();
        let q = designs.first().map_or(0, |d| d.dim().saturating_sub(2) / 2);
        let ranking = rank_stute(&fits, q)?;
        let interactions = ranking
            .top(k)
            .iter()
            .map(|p| SelectedInteraction {
                gene: p.gene,
                env: p.env,
                coef: fits[p.gene].as_ref().map_or(0.0, |f| f.zeta[2 + q + p.env]),
                strength: p.score[0],
            })
            .collect();
        return Ok(Selection {
            method,
            k,
            lambda: None,
            theta: None,
            interactions: trim(interactions, k),
            exact: ranking.pairs.len() >= k,
        });
    }
    let fitter = PenalizedFitter::new(designs, method, theta, options)?;
    let upper = fitter.upper_lambda();
    if !(upper > 0.0) {
        return Err(GxeError::DegenerateData("no column correlates with the response".into()));
    }
    // hi selects fewer than k; find lo selecting at least k
    let mut hi = upper.ln();
    let mut lo = hi;
    let mut lo_set = Vec::new();
    for _ in 0..12 {
        let next = lo - 3.0 * std::f64::consts::LN_10;
        lo_set = fitter.select_at(next.exp());
        if lo_set.len() < k {
            hi = next;
        }
        lo = next;
        if lo_set.len() >= k {
            break;
        }
    }
    let done = |set: Vec<SelectedInteraction>, lambda: f64, exact| Selection {
        method,
        k,
        lambda: Some(lambda),
        theta,
        interactions: trim(set, k),
        exact,
    };
    if lo_set.len() < k {
        return Ok(done(lo_set, lo.exp(), false));
    }
    if lo_set.len() == k {
        return Ok(done(lo_set, lo.exp(), true));
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let set = fitter.select_at(mid.exp());
        match set.len().cmp(&k) {
            std::cmp::Ordering::Equal => return Ok(done(set, mid.exp(), true)),
            std::cmp::Ordering::Greater => {
                lo = mid;
                lo_set = set;
            }
            std::cmp::Ordering::Less => hi = mid,
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    Ok(done(lo_set, lo.exp(), false))
}

/// Picks theta from the robust grid by `CV_FOLDS`-fold cross-validation.
///
/// For each theta, lambda is tuned to select `k` interactions on the full
/// data. Each training fold is fitted at that lambda and refitted without
/// penalty on the selected support; the criterion is the KM-weighted
/// absolute prediction error of the refit on the held-out rows, averaged
/// over the genes carrying a selected interaction (all genes when none is
/// selected). Folds take every fifth row of the y-sorted data. Returns the
/// theta and the per-theta errors.
pub fn cv_theta(ds: &SurvivalDataset, k: usize, options: &ExperimentOptions) -> Result<(f64, Vec<(f64, f64)>)> {
    let designs = working_designs_with(ds, options.response)?;
    let grid = grid_from_designs(&designs, options.n_lambda, options.n_theta)?;
    let raw = ds.to_raw();
    let full_designs: Vec<_> = (0..ds.p()).map(|j| build_design(ds, j)).collect::<Result<_>>()?;
    let fold_designs: Vec<Vec<WorkingDesign>> = (0..CV_FOLDS)
        .map(|f| {
            let rows: Vec<usize> = (0..ds.n()).filter(|i| i % CV_FOLDS != f).collect();
            working_designs_with(&sort_and_weight(raw.select_rows(&rows))?, options.response)
        })
        .collect::<Result<_>>()?;
    let weights = ds.weights();
    let y = ds.y();
    let mut errors = Vec::with_capacity(grid.thetas.len());
    for &theta in &grid.thetas {
        let selection = select_fixed_count(&designs, Method::Robust, Some(theta), k, options)?;
        let lambda = selection.lambda.unwrap_or(grid.provenance.lambda_min);
        let mut genes: Vec<usize> = selection.genes().into_iter().collect();
        if genes.is_empty() {
            genes = (0..ds.p()).collect();
        }
        let mut total = 0.0;
        for (f, fd) in fold_designs.iter().enumerate() {
            let per_gene: Vec<f64> = genes
                .par_iter()
                .map(|&j| {
                    let zero = vec![0.0; fd[j].dim()];
                    let zeta = RobustTuning::new(theta, lambda)
                        .and_then(|t| cd_mm_fit(&fd[j], t, &zero, &options.solver))
                        .and_then(|fit| refit_hierarchy(&fit, &fd[j], &options.solver))
                        .map(|refit| refit.zeta)
                        .unwrap_or(zero);
                    let u = &full_designs[j].u;
                    (0..ds.n())
                        .filter(|i| i % CV_FOLDS == f)
                        .map(|i| {
                            let fitted: f64 = (0..zeta.len()).map(|c| u[[i, c]] * zeta[c]).sum();
                            weights[i] * (y[i] - fitted).abs()
                        })
                        .sum()
                })
                .collect();
            total += per_gene.iter().sum::<f64>();
        }
        errors.push((theta, total / genes.len() as f64));
    }
    let best = errors
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|e| e.0)
        .ok_or_else(|| GxeError::Evaluation("empty theta grid".into()))?;
    Ok((best, errors))
}

/// Leave-one-out selection frequencies of the interactions chosen on the full data.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub method: Method,
    pub k: usize,
    pub theta: Option<f64>,
    pub full: Selection,
    /// Same order as `full.interactions`.
    pub frequency: Vec<f64>,
    /// Reduced datasets whose selection errored, counted as selecting nothing.
    pub failures: usize,
    pub n: usize,
}

impl StabilityReport {
    /// `gene,env,coef,frequency`, 1-based.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("gene,env,coef,frequency\n");
        for (s, f) in self.full.interactions.iter().zip(&self.frequency) {
            writeln!(out, "{},{},{:.16e},{:.16e}", s.gene + 1, s.env + 1, s.coef, f).unwrap();
        }
        out
    }
}

/// Fixed-count selection on the full data and on each of the `n`
/// leave-one-out datasets. For the robust method theta comes from
/// [`cv_theta`] unless given, and stays fixed across the reduced fits.
pub fn stability_loo(
    ds: &SurvivalDataset,
    method: Method,
    k: usize,
    theta: Option<f64>,
    options: &ExperimentOptions,
) -> Result<StabilityReport> {
    if ds.n() < 3 {
        return Err(GxeError::TooFewObservations { min: 3, got: ds.n() });
    }
    let theta = match (method, theta) {
        (Method::Robust, None) => Some(cv_theta(ds, k, options)?.0),
        (Method::Robust, t) => t,
        _ => None,
    };
    let designs = working_designs_with(ds, options.response)?;
    let full = select_fixed_count(&designs, method, theta, k, options)?;
    let raw = ds.to_raw();
    let reduced: Vec<Option<BTreeSet<(usize, usize)>>> = (0..ds.n())
        .into_par_iter()
        .map(|i| {
            let selection = sort_and_weight(raw.without_row(i))
                .and_then(|d| working_designs_with(&d, options.response))
                .and_then(|d| select_fixed_count(&d, method, theta, k, options));
            match selection {
                Ok(s) => Some(s.pairs()),
                Err(e) => {
                    debug!("leave-one-out fit without row {}: {e}", i + 1);
                    None
                }
            }
        })
        .collect();
    let failures = reduced.iter().filter(|r| r.is_none()).count();
    let frequency = full
        .interactions
        .iter()
        .map(|s| {
            let hits = reduced
                .iter()
                .flatten()
                .filter(|set| set.contains(&(s.gene, s.env)))
                .count();
            hits as f64 / ds.n() as f64
        })
        .collect();
    Ok(StabilityReport {
        method,
        k,
        theta,
        full,
        frequency,
        failures,
        n: ds.n(),
    })
}

/// Identified genes and interactions of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSelection {
    pub method: String,
    pub genes: BTreeSet<usize>,
    pub interactions: BTreeSet<(usize, usize)>,
}

impl From<&Selection> for MethodSelection {
    fn from(s: &Selection) -> Self {
        MethodSelection {
            method: s.method.to_string(),
            genes: s.genes(),
            interactions: s.pairs(),
        }
    }
}

/// Pairwise overlap counts; diagonals are the set sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapTable {
    pub methods: Vec<String>,
    pub genes: Vec<Vec<usize>>,
    pub interactions: Vec<Vec<usize>>,
}

pub fn overlap_table(selections: &[MethodSelection]) -> Result<OverlapTable> {
    if selections.len() < 2 {
        return Err(GxeError::Parameter("overlap table needs at least 2 methods".into()));
    }
    let m = selections.len();
    let mut genes = vec![vec![0; m]; m];
    let mut interactions = vec![vec![0; m]; m];
    for a in 0..m {
        for b in 0..m {
            genes[a][b] = selections[a].genes.intersection(&selections[b].genes).count();
            interactions[a][b] = selections[a]
                .interactions
                .intersection(&selections[b].interactions)
                .count();
        }
    }
    Ok(OverlapTable {
        methods: selections.iter().map(|s| s.method.clone()).collect(),
        genes,
        interactions,
    })
}

impl OverlapTable {
    /// Cells read `genes (interactions)`.
    pub fn to_csv_string(&self) -> String {
        let mut out = format!("method,{}\n", self.methods.join(","));
        for (a, name) in self.methods.iter().enumerate() {
            out.push_str(name);
            for b in 0..self.methods.len() {
                write!(out, ",{} ({})", self.genes[a][b], self.interactions[a][b]).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn to_table(&self) -> String {
        let width = self.methods.iter().map(String::len).max().unwrap_or(6).max(6);
        let mut out = format!("{:<width$}", "");
        for name in &self.methods {
            write!(out, "  {name:>10}").unwrap();
        }
        out.push('\n');
        for (a, name) in self.methods.iter().enumerate() {
            write!(out, "{name:<width$}").unwrap();
            for b in 0..self.methods.len() {
                write!(out, "  {:>10}", format!("{} ({})", self.genes[a][b], self.interactions[a][b])).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robust::working_designs;
    use crate::sim::{gen_dataset, ScenarioConfig};

    fn selection(name: &str, pairs: &[(usize, usize)]) -> MethodSelection {
        MethodSelection {
            method: name.into(),
            genes: pairs.iter().map(|p| p.0).collect(),
            interactions: pairs.iter().copied().collect(),
        }
    }

    #[test]
    fn overlap_identical_and_disjoint() {
        let a = selection("a", &[(1, 0), (2, 1), (2, 2)]);
        let table = overlap_table(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(table.genes, vec![vec![2, 2], vec![2, 2]]);
        assert_eq!(table.interactions, vec![vec![3, 3], vec![3, 3]]);
        let b = selection("b", &[(5, 0)]);
        let table = overlap_table(&[a, b]).unwrap();
        assert_eq!((table.genes[0][1], table.interactions[0][1]), (0, 0));
        assert_eq!(table.genes[1][1], 1);
        assert!(table.to_csv_string().starts_with("method,a,b\na,2 (3),0 (0)\n"));
        assert!(overlap_table(&[selection("x", &[])]).is_err());
    }

    #[test]
    fn fixed_count_hits_k() {
        let config = ScenarioConfig {
            n: 120,
            p: 15,
            seed: 2,
            ..ScenarioConfig::default()
        };
        let (ds, _) = gen_dataset(&config).unwrap();
        let designs = working_designs(&ds).unwrap();
        let options = ExperimentOptions::default();
        let grid = grid_from_designs(&designs, 10, 5).unwrap();
        for method in [Method::Unrobust, Method::Quantile, Method::Stute] {
            let s = select_fixed_count(&designs, method, None, 6, &options).unwrap();
            assert_eq!(s.interactions.len(), 6, "{method}");
        }
        let s = select_fixed_count(&designs, Method::Robust, Some(grid.thetas[3]), 6, &options).unwrap();
        assert_eq!(s.interactions.len(), 6);
    }
}
