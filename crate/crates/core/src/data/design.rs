use ndarray::{Array1, Array2, ArrayView1, ShapeBuilder};

use super::SurvivalDataset;
use crate::error::{GxeError, Result};

/// Role of a column in a marginal design `u_ij = (1, x_i', z_ij, z_ij x_i1, ..., z_ij x_iq)'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRole {
    Intercept,
    /// Environmental main effect, 0-based env index.
    Env(usize),
    Gene,
    /// Gene x environment interaction, 0-based env index.
    Interaction(usize),
}

impl ColumnRole {
    pub fn roles(q: usize) -> Vec<ColumnRole> {
        let mut roles = Vec::with_capacity(2 * q + 2);
        roles.push(ColumnRole::Intercept);
        roles.extend((0..q).map(ColumnRole::Env));
        roles.push(ColumnRole::Gene);
        roles.extend((0..q).map(ColumnRole::Interaction));
        roles
    }

    /// Coefficient name used in surface files: `intercept`, `e1`, `gene`, `gene:e1`.
    pub fn name(&self) -> String {
        match self {
            ColumnRole::Intercept => "intercept".to_string(),
            ColumnRole::Env(k) => format!("e{}", k + 1),
            ColumnRole::Gene => "gene".to_string(),
            ColumnRole::Interaction(k) => format!("gene:e{}", k + 1),
        }
    }
}

/// Column index of the interaction with env `k` (0-based) in a design with `q` envs.
pub fn interaction_column(q: usize, k: usize) -> usize {
    q + 2 + k
}

/// The n x (2q+2) design for one gene, on the original scale.
#[derive(Debug, Clone)]
pub struct MarginalDesign {
    pub gene: usize,
    /// Column-major, so coordinate updates read contiguous columns.
    pub u: Array2<f64>,
    pub roles: Vec<ColumnRole>,
}

/// Builds `U_j` for 0-based gene `gene`.
pub fn build_design(ds: &SurvivalDataset, gene: usize) -> Result<MarginalDesign> {
    let (n, p, q) = (ds.n(), ds.p(), ds.q());
    if gene >= p {
        return Err(GxeError::GeneIndex { index: gene, p });
    }
    let d = 2 * q + 2;
    let mut u = Array2::zeros((n, d).f());
    u.column_mut(0).fill(1.0);
    let zj = ds.z().column(gene);
    for k in 0..q {
        let xk = ds.x().column(k);
        u.column_mut(1 + k).assign(&xk);
        u.column_mut(interaction_column(q, k)).assign(&(&zj * &xk));
    }
    u.column_mut(q + 1).assign(&zj);
    Ok(MarginalDesign {
        gene,
        u,
        roles: ColumnRole::roles(q),
    })
}

/// How the response is scaled after weighted centring.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ResponseScale {
    /// Centring only; `y` keeps its original units.
    Centred,
    /// Centring, then division by the weighted standard deviation, so that
    /// `sum w y^2 = sum w`. The robust lambda and theta grids are then
    /// free of the response's units.
    #[default]
    UnitVariance,
}

impl std::fmt::Display for ResponseScale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ResponseScale::Centred => "centred",
            ResponseScale::UnitVariance => "unit",
        })
    }
}

impl std::str::FromStr for ResponseScale {
    type Err = GxeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "centred" | "centered" => Ok(ResponseScale::Centred),
            "unit" | "unit-variance" => Ok(ResponseScale::UnitVariance),
            other => Err(GxeError::Parameter(format!(
                "unknown response scale `{other}` (centred or unit)"
            ))),
        }
    }
}

/// Weighted centring and scaling applied to `y` and each column.
#[derive(Debug, Clone, PartialEq)]
pub struct NormRecord {
    pub y_mean: f64,
    /// Divisor applied to the centred response (1 when only centred).
    pub y_scale: f64,
    pub col_mean: Vec<f64>,
    /// Divisor applied after centring; 0 for the intercept and degenerate columns.
    pub col_scale: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl NormRecord {
    /// Maps normalized-scale coefficients back to the original design.
    pub fn to_original(&self, zeta_normalized: &[f64]) -> Vec<f64> {
        let mut zeta = vec![0.0; zeta_normalized.len()];
        let mut intercept = self.y_mean;
        for k in 1..zeta.len() {
            if self.col_scale[k] > 0.0 {
                zeta[k] = self.y_scale * zeta_normalized[k] / self.col_scale[k];
                intercept -= zeta[k] * self.col_mean[k];
            }
        }
        zeta[0] = intercept;
        zeta
    }
}

/// A response, design and weight triple ready for the coordinate solvers.
///
/// Produced by [`MarginalDesign::normalize`]; tests may also build one
/// directly from arbitrary columns.
#[derive(Debug, Clone)]
pub struct WorkingDesign {
    pub gene: usize,
    pub y: Array1<f64>,
    /// Column-major n x d.
    pub u: Array2<f64>,
    pub weights: Array1<f64>,
    /// Columns the solvers may update.
    pub active: Vec<bool>,
    pub roles: Vec<ColumnRole>,
    pub norm: Option<NormRecord>,
    /// Sample size the design was built from; tolerances scale with it even
    /// after zero-weight rows are dropped.
    pub nominal_n: usize,
}

impl WorkingDesign {
    /// Wraps raw columns with every column active and no normalization record.
    pub fn from_columns(y: Array1<f64>, u: Array2<f64>, weights: Array1<f64>) -> Result<Self> {
        let n = y.len();
        if u.nrows() != n || weights.len() != n {
            return Err(GxeError::Dimension(format!(
                "y has {n} rows, U {}, weights {}",
                u.nrows(),
                weights.len()
            )));
        }
        let d = u.ncols();
        let mut cm = Array2::zeros((n, d).f());
        cm.assign(&u);
        Ok(WorkingDesign {
            gene: 0,
            y,
            u: cm,
            weights,
            active: vec![true; d],
            roles: Vec::new(),
            norm: None,
            nominal_n: n,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.u.ncols()
    }

    pub fn column(&self, k: usize) -> &[f64] {
        self.u
            .column(k)
            .to_slice()
            .expect("working design is column-major")
    }

    pub fn weights_slice(&self) -> &[f64] {
        self.weights.as_slice().expect("contiguous weights")
    }

    pub fn y_slice(&self) -> &[f64] {
        self.y.as_slice().expect("contiguous y")
    }

    /// Residuals `y - U zeta`.
    pub fn residuals(&self, zeta: &[f64]) -> Vec<f64> {
        let mut r = self.y.to_vec();
        for (k, &b) in zeta.iter().enumerate() {
            if b != 0.0 {
                for (ri, &uik) in r.iter_mut().zip(self.column(k)) {
                    *ri -= uik * b;
                }
            }
        }
        r
    }

    pub fn fitted(&self, zeta: &[f64]) -> Array1<f64> {
        self.u.dot(&ArrayView1::from(zeta))
    }

    /// Same design restricted to `rows`, keeping the given weights.
    pub fn select_rows(&self, rows: &[usize], weights: Array1<f64>) -> WorkingDesign {
        let mut u = Array2::zeros((rows.len(), self.dim()).f());
        for (dst, &src) in rows.iter().enumerate() {
            u.row_mut(dst).assign(&self.u.row(src));
        }
        WorkingDesign {
            gene: self.gene,
            y: self.y.select(ndarray::Axis(0), rows),
            u,
            weights,
            active: self.active.clone(),
            roles: self.roles.clone(),
            norm: self.norm.clone(),
            nominal_n: self.nominal_n,
        }
    }

    /// Drops rows with zero weight; every loss in this crate ignores them.
    pub fn positive_weight_rows(&self) -> WorkingDesign {
        let rows: Vec<usize> = (0..self.n()).filter(|&i| self.weights[i] > 0.0).collect();
        let weights = self.weights.select(ndarray::Axis(0), &rows);
        self.select_rows(&rows, weights)
    }
}

fn weighted_mean(v: ArrayView1<f64>, w: ArrayView1<f64>, total: f64) -> f64 {
    v.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total
}

impl MarginalDesign {
    /// Weighted normalization: `sum w y = 0`, `sum w u_k = 0`, `sum w u_k^2 = n`
    /// for each non-intercept column, with the response scaled to unit
    /// weighted variance. The intercept column becomes zero and is excluded
    /// from updates; zero-variance columns are flagged degenerate.
    pub fn normalize(&self, y: &Array1<f64>, weights: &Array1<f64>) -> Result<WorkingDesign> {
        self.normalize_with(y, weights, ResponseScale::default())
    }

    pub fn normalize_with(&self, y: &Array1<f64>, weights: &Array1<f64>, scale: ResponseScale) -> Result<WorkingDesign> {
        let n = y.len();
        if self.u.nrows() != n || weights.len() != n {
            return Err(GxeError::Dimension("design, y and weights differ in length".into()));
        }
        let total: f64 = weights.sum();
        if !(total > 0.0) {
            return Err(GxeError::NoEvents);
        }
        let nf = n as f64;
        let d = self.u.ncols();
        let y_mean = weighted_mean(y.view(), weights.view(), total);
        let mut y_norm = y.mapv(|v| v - y_mean);
        let mut y_scale = 1.0;
        if scale == ResponseScale::UnitVariance {
            let var = y_norm.iter().zip(weights).map(|(v, w)| w * v * v).sum::<f64>() / total;
            let sd = var.sqrt();
            if sd > 1e-12 * (1.0 + y_mean.abs()) {
                y_scale = sd;
                y_norm.mapv_inplace(|v| v / sd);
            }
        }

        let mut u = Array2::zeros((n, d).f());
        let mut col_mean = vec![0.0; d];
        let mut col_scale = vec![0.0; d];
        let mut degenerate = vec![false; d];
        let mut active = vec![false; d];
        col_mean[0] = 1.0;
        for k in 1..d {
            let col = self.u.column(k);
            let m = weighted_mean(col, weights.view(), total);
            let ss: f64 = col
                .iter()
                .zip(weights)
                .map(|(&v, &w)| w * (v - m) * (v - m))
                .sum();
            col_mean[k] = m;
            let spread = (ss / total).sqrt();
            let magnitude = col.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            if spread <= 1e-10 * (1.0 + magnitude) {
                degenerate[k] = true;
                continue;
            }
            let s = (ss / nf).sqrt();
            col_scale[k] = s;
            active[k] = true;
            u.column_mut(k)
                .iter_mut()
                .zip(col)
                .for_each(|(dst, &v)| *dst = (v - m) / s);
        }
        Ok(WorkingDesign {
            gene: self.gene,
            y: y_norm,
            u,
            weights: weights.clone(),
            active,
            roles: self.roles.clone(),
            norm: Some(NormRecord {
                y_mean,
                y_scale,
                col_mean,
                col_scale,
                degenerate,
            }),
            nominal_n: n,
        })
    }
}

impl SurvivalDataset {
    /// Normalized working design for 0-based gene `gene`.
    pub fn working_design(&self, gene: usize) -> Result<WorkingDesign> {
        self.working_design_with(gene, ResponseScale::default())
    }

    pub fn working_design_with(&self, gene: usize, scale: ResponseScale) -> Result<WorkingDesign> {
        build_design(self, gene)?.normalize_with(self.y(), self.weights(), scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sort_and_weight, RawObservations};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(n: usize, p: usize, q: usize, seed: u64) -> SurvivalDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = RawObservations {
            y: (0..n).map(|_| rng.random_range(-2.0..3.0)).collect(),
            delta: (0..n).map(|i| i % 4 != 1).collect(),
            x: Array2::from_shape_fn((n, q), |_| rng.random_range(-1.0..1.0)),
            z: Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0)),
        };
        sort_and_weight(raw).unwrap()
    }

    #[test]
    fn single_row_substitution() {
        let raw = RawObservations {
            y: vec![1.0, 2.0],
            delta: vec![true, true],
            x: Array2::from_elem((2, 1), 2.0),
            z: Array2::from_elem((2, 1), 3.0),
        };
        let ds = sort_and_weight(raw).unwrap();
        let d = build_design(&ds, 0).unwrap();
        assert_eq!(d.u.row(0).to_vec(), vec![1.0, 2.0, 3.0, 6.0]);
    }

    #[test]
    fn column_order_for_three_envs() {
        let ds = dataset(6, 2, 3, 1);
        let d = build_design(&ds, 1).unwrap();
        assert_eq!(d.u.ncols(), 8);
        let names: Vec<String> = d.roles.iter().map(|r| r.name()).collect();
        assert_eq!(
            names,
            ["intercept", "e1", "e2", "e3", "gene", "gene:e1", "gene:e2", "gene:e3"]
        );
        for i in 0..6 {
            for k in 0..3 {
                assert_eq!(d.u[[i, 5 + k]], ds.z()[[i, 1]] * ds.x()[[i, k]]);
            }
        }
        assert!(matches!(build_design(&ds, 2), Err(GxeError::GeneIndex { .. })));
    }

    #[test]
    fn zero_gene_annihilates_gene_and_interactions() {
        let mut raw = dataset(8, 2, 2, 3).to_raw();
        raw.z.column_mut(0).fill(0.0);
        let ds = sort_and_weight(raw).unwrap();
        let d = build_design(&ds, 0).unwrap();
        for k in 3..6 {
            assert!(d.u.column(k).iter().all(|&v| v == 0.0));
        }
        let w = d.normalize(ds.y(), ds.weights()).unwrap();
        assert!(w.norm.as_ref().unwrap().degenerate[3]);
        assert!(!w.active[3] && !w.active[4] && !w.active[5]);
        assert!(w.active[1] && w.active[2]);
    }

    #[test]
    fn normalization_identities() {
        for seed in 0..10 {
            let ds = dataset(40, 3, 3, seed);
            let w = ds.working_design(seed as usize % 3).unwrap();
            let n = 40.0;
            let wy: f64 = w.y.iter().zip(&w.weights).map(|(a, b)| a * b).sum();
            assert!(wy.abs() < 1e-12);
            for k in 1..w.dim() {
                let col = w.column(k);
                let s1: f64 = col.iter().zip(&w.weights).map(|(a, b)| a * b).sum();
                let s2: f64 = col.iter().zip(&w.weights).map(|(a, b)| a * a * b).sum();
                assert!(s1.abs() < 1e-12, "mean {s1}");
                assert!((s2 - n).abs() / n < 1e-12, "scale {s2}");
            }
        }
    }

    #[test]
    fn normalization_is_idempotent() {
        let ds = dataset(30, 2, 2, 11);
        let once = ds.working_design(0).unwrap();
        let again = MarginalDesign {
            gene: 0,
            u: {
                let mut u = once.u.clone();
                u.column_mut(0).fill(1.0);
                u
            },
            roles: once.roles.clone(),
        }
        .normalize(&once.y, &once.weights)
        .unwrap();
        for (a, b) in once.y.iter().zip(&again.y) {
            assert!((a - b).abs() < 1e-12);
        }
        for k in 1..once.dim() {
            for (a, b) in once.column(k).iter().zip(again.column(k)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn back_transform_reproduces_fitted_values() {
        let ds = dataset(25, 2, 3, 5);
        let design = build_design(&ds, 1).unwrap();
        let w = design.normalize(ds.y(), ds.weights()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut zeta_n: Vec<f64> = (0..w.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        zeta_n[0] = 0.0;
        let zeta = w.norm.as_ref().unwrap().to_original(&zeta_n);
        let fitted_norm = w.fitted(&zeta_n);
        let fitted_orig = design.u.dot(&Array1::from(zeta));
        let norm = w.norm.as_ref().unwrap();
        assert!(norm.y_scale != 1.0);
        for (a, b) in fitted_norm.iter().zip(&fitted_orig) {
            assert!((a * norm.y_scale + norm.y_mean - b).abs() < 1e-12);
        }
    }

    #[test]
    fn response_scaling_modes() {
        let ds = dataset(40, 2, 2, 8);
        let total: f64 = ds.weights().sum();
        let unit = ds.working_design(0).unwrap();
        let ss: f64 = unit.y.iter().zip(&unit.weights).map(|(v, w)| w * v * v).sum();
        assert!((ss - total).abs() < 1e-12);
        let centred = ds.working_design_with(0, ResponseScale::Centred).unwrap();
        let s = unit.norm.as_ref().unwrap().y_scale;
        assert_eq!(centred.norm.as_ref().unwrap().y_scale, 1.0);
        for (a, b) in unit.y.iter().zip(&centred.y) {
            assert!((a * s - b).abs() < 1e-12);
        }
        assert_eq!("centered".parse::<ResponseScale>().unwrap(), ResponseScale::Centred);
        assert_eq!(ResponseScale::UnitVariance.to_string().parse::<ResponseScale>().unwrap(), ResponseScale::UnitVariance);
    }
}
