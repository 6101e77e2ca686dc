// SPDX-License-Identifier: MIT OR Apache-2.0

//! Correspondence analysis of a contingency table.
//!
//! Rows and columns are turned into profiles (conditional distributions)
//! weighted by their marginal masses and compared under the χ² metric
//! centred on the marginal distribution. A singular value decomposition of
//! the standardized residuals `(f_ij - f_i f_j) / sqrt(f_i f_j)`, taken
//! through the eigendecomposition of their smaller Gram matrix, gives the
//! principal axes; rows and columns are reported in principal coordinates,
//! so Euclidean distance between row coordinates over all retained factors
//! equals the χ² distance between the corresponding profiles.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ingest::ContingencyTable;
use crate::{Error, Execution, Result};

/// Factors whose eigenvalue falls below this are numerically null.
pub const EIGENVALUE_CUTOFF: f64 = 1e-12;

/// Relative frequencies, marginals and profiles of a contingency table.
#[derive(Clone, Debug)]
pub struct FrequencyModel {
    pub f: DMatrix<f64>,
    pub f_row: Vec<f64>,
    pub f_col: Vec<f64>,
    /// Row profiles `f_ij / f_i` (each row sums to one).
    pub profiles_row: DMatrix<f64>,
    /// Column profiles `f_ij / f_j`, stored column-wise.
    pub profiles_col: DMatrix<f64>,
}

impl FrequencyModel {
    pub fn nrows(&self) -> usize {
        self.f.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.f.ncols()
    }

    /// Transposed model: columns become rows.
    pub fn transpose(&self) -> FrequencyModel {
        FrequencyModel {
            f: self.f.transpose(),
            f_row: self.f_col.clone(),
            f_col: self.f_row.clone(),
            profiles_row: self.profiles_col.transpose(),
            profiles_col: self.profiles_row.transpose(),
        }
    }
}

pub fn frequency_model(table: &ContingencyTable) -> Result<FrequencyModel> {
    let total = table.total();
    if total <= 0.0 {
        return Err(Error::data("contingency table has zero grand total"));
    }
    let k = table.counts();
    let f = k / total;
    let f_row: Vec<f64> = table.row_sums().iter().map(|r| r / total).collect();
    let f_col: Vec<f64> = table.col_sums().iter().map(|c| c / total).collect();
    if let Some(i) = f_row.iter().position(|&v| v <= 0.0) {
        return Err(Error::data(format!(
            "row '{}' has zero mass; drop empty rows before analysis",
            table.row_labels()[i]
        )));
    }
    if let Some(j) = f_col.iter().position(|&v| v <= 0.0) {
        return Err(Error::data(format!(
            "column '{}' has zero mass; drop empty columns before analysis",
            table.col_labels()[j]
        )));
    }
    let profiles_row = DMatrix::from_fn(f.nrows(), f.ncols(), |i, j| f[(i, j)] / f_row[i]);
    let profiles_col = DMatrix::from_fn(f.nrows(), f.ncols(), |i, j| f[(i, j)] / f_col[j]);
    Ok(FrequencyModel {
        f,
        f_row,
        f_col,
        profiles_row,
        profiles_col,
    })
}

fn check_row(model: &FrequencyModel, i: usize) -> Result<()> {
    if i >= model.nrows() {
        return Err(Error::invalid(format!(
            "row index {i} out of bounds for {} rows",
            model.nrows()
        )));
    }
    Ok(())
}

/// Squared χ² distance between the profiles of rows `i` and `i2`.
pub fn chi2_sq_distance(model: &FrequencyModel, i: usize, i2: usize) -> Result<f64> {
    check_row(model, i)?;
    check_row(model, i2)?;
    Ok((0..model.ncols())
        .map(|j| {
            let diff = model.profiles_row[(i, j)] - model.profiles_row[(i2, j)];
            diff * diff / model.f_col[j]
        })
        .sum())
}

/// All pairwise squared χ² distances between rows.
pub fn chi2_distance_matrix(model: &FrequencyModel, exec: Execution) -> DMatrix<f64> {
    let n = model.nrows();
    let rows = exec.map_range(n, |i| {
        (0..n)
            .map(|i2| chi2_sq_distance(model, i, i2).unwrap_or(f64::NAN))
            .collect::<Vec<_>>()
    });
    DMatrix::from_fn(n, n, |i, i2| rows[i][i2])
}

/// χ² distance between the observed frequencies and the independence
/// model `f_i f_j`.
pub fn total_inertia(model: &FrequencyModel) -> f64 {
    let mut sum = 0.0;
    for i in 0..model.nrows() {
        for j in 0..model.ncols() {
            let expected = model.f_row[i] * model.f_col[j];
            let r = model.f[(i, j)] - expected;
            sum += r * r / expected;
        }
    }
    sum
}

/// Principal axes of a frequency model.
#[derive(Clone, Debug)]
pub struct FactorDecomposition {
    /// Retained eigenvalues, non-increasing.
    pub eigenvalues: Vec<f64>,
    /// Row principal coordinates, one column per retained factor.
    pub row_factors: DMatrix<f64>,
    /// Column principal coordinates, one column per retained factor.
    pub col_factors: DMatrix<f64>,
    /// Inherent dimensionality `min(|I| - 1, |J| - 1)`.
    pub n_factors: usize,
    pub inertia_total: f64,
}

impl FactorDecomposition {
    pub fn retained(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Squared Euclidean distance between two rows in factor space.
    pub fn factor_sq_distance(&self, i: usize, i2: usize) -> f64 {
        self.row_factors
            .row(i)
            .iter()
            .zip(self.row_factors.row(i2).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Row coordinates restricted to the leading `dims` factors (or all
    /// retained factors when fewer exist).
    pub fn leading_row_coords(&self, dims: usize) -> Vec<Vec<f64>> {
        let d = dims.min(self.retained());
        self.row_factors
            .row_iter()
            .map(|r| r.iter().take(d).copied().collect())
            .collect()
    }

    /// Fraction of total inertia explained by each retained factor.
    pub fn explained(&self) -> Vec<f64> {
        if self.inertia_total <= 0.0 {
            return vec![0.0; self.retained()];
        }
        self.eigenvalues
            .iter()
            .map(|l| l / self.inertia_total)
            .collect()
    }
}

pub fn factor_decomposition(model: &FrequencyModel) -> Result<FactorDecomposition> {
    let (ni, nj) = (model.nrows(), model.ncols());
    if ni < 2 || nj < 2 {
        return Err(Error::invalid(format!(
            "correspondence analysis needs at least 2 rows and 2 columns, got {ni}x{nj}"
        )));
    }
    let n_factors = ni.min(nj) - 1;
    let sqrt_r: Vec<f64> = model.f_row.iter().map(|v| v.sqrt()).collect();
    let sqrt_c: Vec<f64> = model.f_col.iter().map(|v| v.sqrt()).collect();
    let residuals = DMatrix::from_fn(ni, nj, |i, j| {
        (model.f[(i, j)] - model.f_row[i] * model.f_col[j]) / (sqrt_r[i] * sqrt_c[j])
    });

    // Principal axes from the eigendecomposition of the smaller Gram
    // matrix of the residuals; its eigenvalues are the squared singular
    // values.
    let rows_side = ni < nj;
    let gram = if rows_side {
        &residuals * residuals.transpose()
    } else {
        residuals.transpose() * &residuals
    };
    let eig = nalgebra::linalg::SymmetricEigen::try_new(gram.clone(), 5.0 * f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("eigendecomposition did not converge".into()))?;
    let recomposed = eig.clone().recompose();
    let residual = (recomposed - &gram).abs().max();
    if residual > 1e-10 {
        return Err(Error::Numerical(format!(
            "eigendecomposition reproduces the Gram matrix only to {residual:e}"
        )));
    }

    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let kept: Vec<usize> = order
        .into_iter()
        .take(n_factors)
        .filter(|&k| eig.eigenvalues[k] >= EIGENVALUE_CUTOFF)
        .collect();

    let mut eigenvalues = Vec::with_capacity(kept.len());
    let mut row_factors = DMatrix::zeros(ni, kept.len());
    let mut col_factors = DMatrix::zeros(nj, kept.len());
    for (alpha, &k) in kept.iter().enumerate() {
        let lambda = eig.eigenvalues[k];
        let sigma = lambda.sqrt();
        let axis = eig.eigenvectors.column(k);
        eigenvalues.push(lambda);
        if rows_side {
            // axis = left singular vector u; S^T u = sigma v
            let projected = residuals.transpose() * axis;
            for i in 0..ni {
                row_factors[(i, alpha)] = sigma * axis[i] / sqrt_r[i];
            }
            for j in 0..nj {
                col_factors[(j, alpha)] = projected[j] / sqrt_c[j];
            }
        } else {
            // axis = right singular vector v; S v = sigma u
            let projected = &residuals * axis;
            for i in 0..ni {
                row_factors[(i, alpha)] = projected[i] / sqrt_r[i];
            }
            for j in 0..nj {
                col_factors[(j, alpha)] = sigma * axis[j] / sqrt_c[j];
            }
        }
        // Largest-magnitude row coordinate positive; first one on ties.
        let mut pivot = 0;
        for i in 1..ni {
            if row_factors[(i, alpha)].abs() > row_factors[(pivot, alpha)].abs() * (1.0 + 1e-12) {
                pivot = i;
            }
        }
        if row_factors[(pivot, alpha)] < 0.0 {
            row_factors.column_mut(alpha).neg_mut();
            col_factors.column_mut(alpha).neg_mut();
        }
    }

    Ok(FactorDecomposition {
        eigenvalues,
        row_factors,
        col_factors,
        n_factors,
        inertia_total: total_inertia(model),
    })
}

/// Per-factor maximum deviation from the transition formulas.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionReport {
    /// `max_i |F(i) - λ^{-1/2} Σ_j f^i_j G(j)|` per factor.
    pub row_deviation: Vec<f64>,
    /// `max_j |G(j) - λ^{-1/2} Σ_i f^j_i F(i)|` per factor.
    pub col_deviation: Vec<f64>,
}

impl TransitionReport {
    pub fn max_deviation(&self) -> f64 {
        self.row_deviation
            .iter()
            .chain(&self.col_deviation)
            .fold(0.0, |m, &d| m.max(d))
    }

    pub fn consistent(&self, tol: f64) -> bool {
        self.max_deviation() <= tol
    }
}

/// Checks that each row coordinate is the λ^{-1/2}-scaled barycentre of the
/// column coordinates weighted by its profile, and the dual relation.
pub fn transition_consistency(
    dec: &FactorDecomposition,
    model: &FrequencyModel,
) -> TransitionReport {
    let mut row_deviation = Vec::with_capacity(dec.retained());
    let mut col_deviation = Vec::with_capacity(dec.retained());
    for (alpha, &lambda) in dec.eigenvalues.iter().enumerate() {
        let scale = lambda.sqrt().recip();
        let g = dec.col_factors.column(alpha);
        let f = dec.row_factors.column(alpha);
        let mut worst = 0.0f64;
        for i in 0..model.nrows() {
            let bary: f64 = (0..model.ncols())
                .map(|j| model.profiles_row[(i, j)] * g[j])
                .sum();
            worst = worst.max((f[i] - scale * bary).abs());
        }
        row_deviation.push(worst);
        let mut worst = 0.0f64;
        for j in 0..model.ncols() {
            let bary: f64 = (0..model.nrows())
                .map(|i| model.profiles_col[(i, j)] * f[i])
                .sum();
            worst = worst.max((g[j] - scale * bary).abs());
        }
        col_deviation.push(worst);
    }
    TransitionReport {
        row_deviation,
        col_deviation,
    }
}

/// Labelled coordinates in the factors JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelledCoords {
    pub label: String,
    pub coords: Vec<f64>,
}

/// Serialized form of a decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorReport {
    pub eigenvalues: Vec<f64>,
    pub inertia_total: f64,
    pub rows: Vec<LabelledCoords>,
    pub cols: Vec<LabelledCoords>,
}

impl FactorReport {
    pub fn new(dec: &FactorDecomposition, table: &ContingencyTable) -> Self {
        let coords = |m: &DMatrix<f64>, labels: &[String]| {
            labels
                .iter()
                .zip(m.row_iter())
                .map(|(l, r)| LabelledCoords {
                    label: l.clone(),
                    coords: r.iter().copied().collect(),
                })
                .collect()
        };
        FactorReport {
            eigenvalues: dec.eigenvalues.clone(),
            inertia_total: dec.inertia_total,
            rows: coords(&dec.row_factors, table.row_labels()),
            cols: coords(&dec.col_factors, table.col_labels()),
        }
    }

    /// Row labels and their leading `dims` coordinates.
    pub fn leading_rows(&self, dims: usize) -> (Vec<String>, Vec<Vec<f64>>) {
        let d = dims.min(self.eigenvalues.len());
        self.rows
            .iter()
            .map(|r| (r.label.clone(), r.coords.iter().take(d).copied().collect()))
            .unzip()
    }
}
