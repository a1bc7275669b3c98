use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::{debug, warn};
use rayon::prelude::*;

use super::grid::TuningGrid;
use super::loss::RobustTuning;
use super::solver::{cd_mm_fit, MarginalFit, SolverOptions};
use crate::data::{ColumnRole, ResponseScale, SurvivalDataset, WorkingDesign};
use crate::error::{GxeError, Result};

/// Fits for every gene over a (lambda, theta) grid.
///
/// Stored gene-major, then theta slice, then lambda (largest first).
#[derive(Debug, Clone)]
pub struct SolutionSurface {
    pub grid: TuningGrid,
    pub n_genes: usize,
    pub roles: Vec<ColumnRole>,
    fits: Vec<Option<MarginalFit>>,
    /// `(gene, lambda_idx, theta_idx, message)` for fits that errored.
    pub failures: Vec<(usize, usize, usize, String)>,
}

impl SolutionSurface {
    pub(crate) fn from_parts(
        grid: TuningGrid,
        n_genes: usize,
        roles: Vec<ColumnRole>,
        fits: Vec<Option<MarginalFit>>,
        failures: Vec<(usize, usize, usize, String)>,
    ) -> Self {
        debug_assert_eq!(fits.len(), n_genes * grid.n_slices() * grid.lambdas.len());
        SolutionSurface {
            grid,
            n_genes,
            roles,
            fits,
            failures,
        }
    }

    pub fn n_lambda(&self) -> usize {
        self.grid.lambdas.len()
    }

    pub fn n_slices(&self) -> usize {
        self.grid.n_slices()
    }

    fn index(&self, gene: usize, lambda_idx: usize, theta_idx: usize) -> usize {
        (gene * self.n_slices() + theta_idx) * self.n_lambda() + lambda_idx
    }

    /// The fit at a grid point, `None` if that fit failed.
    pub fn get(&self, gene: usize, lambda_idx: usize, theta_idx: usize) -> Option<&MarginalFit> {
        self.fits[self.index(gene, lambda_idx, theta_idx)].as_ref()
    }

    pub fn fits(&self) -> impl Iterator<Item = &MarginalFit> {
        self.fits.iter().flatten()
    }

    pub fn is_empty(&self) -> bool {
        self.fits.is_empty()
    }

    /// Writes the long format `gene,lambda_idx,theta_idx,coef_name,value,converged,kkt_residual`,
    /// with a leading `method` column when `method` is given. Genes are 1-based.
    pub fn write_csv(&self, path: impl AsRef<Path>, method: Option<&str>) -> Result<()> {
        let path = path.as_ref();
        let io_err = |source| GxeError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        let prefix = method.map(|m| format!("{m},")).unwrap_or_default();
        let header_prefix = if method.is_some() { "method," } else { "" };
        writeln!(
            out,
            "{header_prefix}gene,lambda_idx,theta_idx,coef_name,value,converged,kkt_residual"
        )
        .map_err(io_err)?;
        let names: Vec<String> = self.roles.iter().map(ColumnRole::name).collect();
        for gene in 0..self.n_genes {
            for t in 0..self.n_slices() {
                for l in 0..self.n_lambda() {
                    let Some(fit) = self.get(gene, l, t) else { continue };
                    for (name, value) in names.iter().zip(&fit.zeta) {
                        writeln!(
                            out,
                            "{prefix}{},{l},{t},{name},{:.16e},{},{:.16e}",
                            gene + 1,
                            value,
                            fit.converged,
                            fit.kkt_residual
                        )
                        .map_err(io_err)?;
                    }
                }
            }
        }
        out.flush().map_err(io_err)
    }
}

/// Normalized designs (zero-weight rows dropped) for all genes.
pub fn working_designs(ds: &SurvivalDataset) -> Result<Vec<WorkingDesign>> {
    working_designs_with(ds, ResponseScale::default())
}

pub fn working_designs_with(ds: &SurvivalDataset, scale: ResponseScale) -> Result<Vec<WorkingDesign>> {
    (0..ds.p())
        .into_par_iter()
        .map(|j| ds.working_design_with(j, scale).map(|d| d.positive_weight_rows()))
        .collect()
}

/// One warm-started lambda chain at a fixed theta.
pub(crate) fn fit_lambda_chain(
    design: &WorkingDesign,
    lambdas: &[f64],
    theta: f64,
    options: &SolverOptions,
) -> Vec<Result<MarginalFit>> {
    let mut init = vec![0.0; design.dim()];
    lambdas
        .iter()
        .map(|&lambda| {
            let fit = RobustTuning::new(theta, lambda).and_then(|t| cd_mm_fit(design, t, &init, options));
            if let Ok(f) = &fit {
                init.clone_from(&f.zeta_normalized);
            }
            fit
        })
        .collect()
}

/// Robust fits over the full grid, warm-starting along decreasing lambda
/// within each (gene, theta) task.
pub fn fit_surface(ds: &SurvivalDataset, grid: &TuningGrid, options: &SolverOptions) -> Result<SolutionSurface> {
    let designs = working_designs(ds)?;
    fit_surface_designs(&designs, grid, options, true)
}

/// [`fit_surface`] over prebuilt designs; `warm = false` cold-starts every fit from zero.
pub fn fit_surface_designs(
    designs: &[WorkingDesign],
    grid: &TuningGrid,
    options: &SolverOptions,
    warm: bool,
) -> Result<SolutionSurface> {
    if grid.thetas.is_empty() {
        return Err(GxeError::Parameter("robust surface needs at least one theta".into()));
    }
    let roles = designs
        .first()
        .map(|d| d.roles.clone())
        .ok_or_else(|| GxeError::DegenerateData("no genes".into()))?;
    let n_theta = grid.thetas.len();
    let tasks: Vec<(usize, usize)> = (0..designs.len())
        .flat_map(|j| (0..n_theta).map(move |t| (j, t)))
        .collect();
    let chains: Vec<Vec<Result<MarginalFit>>> = tasks
        .par_iter()
        .map(|&(j, t)| {
            let theta = grid.thetas[t];
            if warm {
                fit_lambda_chain(&designs[j], &grid.lambdas, theta, options)
            } else {
                grid.lambdas
                    .iter()
                    .map(|&lambda| {
                        let zero = vec![0.0; designs[j].dim()];
                        RobustTuning::new(theta, lambda).and_then(|tn| cd_mm_fit(&designs[j], tn, &zero, options))
                    })
                    .collect()
            }
        })
        .collect();

    let mut fits = Vec::with_capacity(tasks.len() * grid.lambdas.len());
    let mut failures = Vec::new();
    for (&(j, t), chain) in tasks.iter().zip(chains) {
        for (l, fit) in chain.into_iter().enumerate() {
            match fit {
                Ok(f) => {
                    if l == 0 && f.nonzeros() > 0 {
                        warn!(
                            "gene {} theta #{t}: {} nonzero coefficients at lambda_max; lambda grid should extend upward",
                            j + 1,
                            f.nonzeros()
                        );
                    }
                    if !f.converged {
                        debug!("gene {} lambda #{l} theta #{t}: not converged (kkt {:.3e})", j + 1, f.kkt_residual);
                    }
                    fits.push(Some(f));
                }
                Err(e) => {
                    failures.push((j, l, t, e.to_string()));
                    fits.push(None);
                }
            }
        }
    }
    Ok(SolutionSurface::from_parts(grid.clone(), designs.len(), roles, fits, failures))
}

/// Grid points where two surfaces differ by more than `tol` in any normalized coefficient.
pub fn surface_discrepancies(a: &SolutionSurface, b: &SolutionSurface, tol: f64) -> Vec<(usize, usize, usize, f64)> {
    let mut out = Vec::new();
    for gene in 0..a.n_genes {
        for t in 0..a.n_slices() {
            for l in 0..a.n_lambda() {
                if let (Some(fa), Some(fb)) = (a.get(gene, l, t), b.get(gene, l, t)) {
                    let gap = fa
                        .zeta_normalized
                        .iter()
                        .zip(&fb.zeta_normalized)
                        .map(|(x, y)| (x - y).abs())
                        .fold(0.0, f64::max);
                    if gap > tol {
                        out.push((gene, l, t, gap));
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robust::grid::grid_from_data;
    use crate::sim::{gen_dataset, ScenarioConfig};

    #[test]
    fn lambda_max_column_is_zero_and_csv_has_expected_rows() {
        let config = ScenarioConfig {
            n: 60,
            p: 10,
            ..ScenarioConfig::default()
        };
        let (ds, _) = gen_dataset(&config).unwrap();
        let grid = grid_from_data(&ds, 6, 3).unwrap();
        let surface = fit_surface(&ds, &grid, &SolverOptions::default()).unwrap();
        assert!(surface.failures.is_empty());
        for gene in 0..10 {
            for t in 0..3 {
                let fit = surface.get(gene, 0, t).unwrap();
                assert!(fit.zeta_normalized.iter().all(|&b| b == 0.0));
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("surface.csv");
        surface.write_csv(&path, None).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "gene,lambda_idx,theta_idx,coef_name,value,converged,kkt_residual");
        assert_eq!(lines.len(), 1 + 10 * 3 * 6 * 8);
        assert!(lines[1].starts_with("1,0,0,intercept,"));
    }
}
