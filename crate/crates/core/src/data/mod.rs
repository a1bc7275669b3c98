//! Survival data ingestion: y-sorting, Kaplan-Meier weighting and the
//! per-gene marginal design matrices.

mod csv;
mod design;

pub use self::csv::{load_csv, write_csv, CsvSchema};
pub use self::design::{
    build_design, interaction_column, ColumnRole, MarginalDesign, NormRecord, ResponseScale, WorkingDesign,
};

use ndarray::{Array1, Array2, ShapeBuilder};

use crate::error::{GxeError, Result};

/// Unordered observations as read from disk or produced by a simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct RawObservations {
    /// Log observed times `min(T, C)`.
    pub y: Vec<f64>,
    /// Event indicators (`true` when the event time was observed).
    pub delta: Vec<bool>,
    /// Environmental / clinical covariates, n x q.
    pub x: Array2<f64>,
    /// Genetic covariates, n x p.
    pub z: Array2<f64>,
}

impl RawObservations {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Drops row `row`, used by leave-one-out resampling.
    pub fn without_row(&self, row: usize) -> RawObservations {
        let keep: Vec<usize> = (0..self.n()).filter(|&i| i != row).collect();
        self.select_rows(&keep)
    }

    pub fn select_rows(&self, rows: &[usize]) -> RawObservations {
        RawObservations {
            y: rows.iter().map(|&i| self.y[i]).collect(),
            delta: rows.iter().map(|&i| self.delta[i]).collect(),
            x: self.x.select(ndarray::Axis(0), rows),
            z: self.z.select(ndarray::Axis(0), rows),
        }
    }
}

/// Observations sorted by `y` with their Kaplan-Meier weights.
///
/// Immutable once built; every marginal fit borrows it read-only.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    y: Array1<f64>,
    delta: Vec<bool>,
    x: Array2<f64>,
    z: Array2<f64>,
    weights: Array1<f64>,
}

impl SurvivalDataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    pub fn q(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn delta(&self) -> &[bool] {
        &self.delta
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn z(&self) -> &Array2<f64> {
        &self.z
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn censoring_fraction(&self) -> f64 {
        self.delta.iter().filter(|&&d| !d).count() as f64 / self.n() as f64
    }

    /// The sorted data as raw observations (weights dropped).
    pub fn to_raw(&self) -> RawObservations {
        RawObservations {
            y: self.y.to_vec(),
            delta: self.delta.clone(),
            x: self.x.clone(),
            z: self.z.to_owned(),
        }
    }
}

/// Kaplan-Meier weights for event indicators already in sorted order.
///
/// `w_1 = d_1 / n`, `w_i = d_i / (n - i + 1) * prod_{j<i} ((n - j) / (n - j + 1))^{d_j}`.
pub fn kaplan_meier_weights(sorted_delta: &[bool]) -> Vec<f64> {
    let n = sorted_delta.len();
    let nf = n as f64;
    let mut weights = Vec::with_capacity(n);
    // running product over j < i, 1-based
    let mut carry = 1.0;
    for (idx, &event) in sorted_delta.iter().enumerate() {
        let i = idx as f64 + 1.0;
        let w = if event { carry / (nf - i + 1.0) } else { 0.0 };
        weights.push(w);
        if event {
            carry *= (nf - i) / (nf - i + 1.0);
        }
    }
    weights
}

/// Sorts observations by `y` (events before censorings at ties) and attaches
/// Kaplan-Meier weights.
pub fn sort_and_weight(raw: RawObservations) -> Result<SurvivalDataset> {
    let n = raw.y.len();
    if n < 2 {
        return Err(GxeError::TooFewObservations { min: 2, got: n });
    }
    if raw.delta.len() != n || raw.x.nrows() != n || raw.z.nrows() != n {
        return Err(GxeError::Dimension(format!(
            "y has {n} rows, delta {}, X {}, Z {}",
            raw.delta.len(),
            raw.x.nrows(),
            raw.z.nrows()
        )));
    }
    if raw.x.ncols() == 0 || raw.z.ncols() == 0 {
        return Err(GxeError::Dimension("need q >= 1 and p >= 1".into()));
    }
    for (i, &v) in raw.y.iter().enumerate() {
        if !v.is_finite() {
            return Err(GxeError::NonFinite {
                row: i + 1,
                column: "y".into(),
            });
        }
    }
    for ((i, k), &v) in raw.x.indexed_iter() {
        if !v.is_finite() {
            return Err(GxeError::NonFinite {
                row: i + 1,
                column: format!("e{}", k + 1),
            });
        }
    }
    for ((i, k), &v) in raw.z.indexed_iter() {
        if !v.is_finite() {
            return Err(GxeError::NonFinite {
                row: i + 1,
                column: format!("g{}", k + 1),
            });
        }
    }
    if !raw.delta.iter().any(|&d| d) {
        return Err(GxeError::NoEvents);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        raw.y[a]
            .total_cmp(&raw.y[b])
            .then_with(|| raw.delta[b].cmp(&raw.delta[a]))
    });

    let y = Array1::from_iter(order.iter().map(|&i| raw.y[i]));
    let delta: Vec<bool> = order.iter().map(|&i| raw.delta[i]).collect();
    let x = raw.x.select(ndarray::Axis(0), &order);
    // Z in column-major order so each gene column is contiguous.
    let mut z = Array2::zeros((n, raw.z.ncols()).f());
    for (dst, &src) in order.iter().enumerate() {
        z.row_mut(dst).assign(&raw.z.row(src));
    }
    let weights = Array1::from(kaplan_meier_weights(&delta));
    Ok(SurvivalDataset {
        y,
        delta,
        x,
        z,
        weights,
    })
}
