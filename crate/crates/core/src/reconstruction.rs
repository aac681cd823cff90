//! Closed-form reconstruction weights under the metric, residuals and the
//! metric-weighted reconstruction error.
//!
//! For point `xᵢ` with neighbors `Xᵢ = [x_{i1} … x_{iK}]` the local Gram
//! matrix is `Gᵢ = (xᵢ1ᵀ − Xᵢ)ᵀ M (xᵢ1ᵀ − Xᵢ)` and the optimal sum-to-one
//! weights are `Gᵢ⁻¹1 / (1ᵀGᵢ⁻¹1)`. `Gᵢ` is singular whenever `K > D`, so
//! the solve is done on `Gᵢ + ε·tr(Gᵢ)/K·I`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::DataMatrix;
use crate::error::{AlleError, Result};
use crate::metric::MetricState;
use crate::neighbors::NeighborIndex;

pub const DEFAULT_GRAM_REG: f64 = 1e-3;

const ROW_SUM_TOL: f64 = 1e-8;
const DEGENERATE_SUM: f64 = 1e-12;

/// Residual vectors `rᵢ = xᵢ − Σⱼ wᵢⱼ xⱼ`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSet {
    dim: usize,
    values: Vec<f64>,
}

impl ResidualSet {
    pub fn empty(dim: usize) -> Self {
        ResidualSet {
            dim,
            values: Vec::new(),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(AlleError::DimensionMismatch {
                    expected: dim,
                    actual: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AlleError::NonFinite("residuals"));
        }
        Ok(ResidualSet { dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.values.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim.max(1))
    }

    /// `Σᵢ rᵢ rᵢᵀ`.
    pub fn scatter(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for r in self.iter() {
            for a in 0..self.dim {
                let ra = r[a];
                if ra == 0.0 {
                    continue;
                }
                for b in 0..self.dim {
                    out[(a, b)] += ra * r[b];
                }
            }
        }
        out
    }

    /// `Σᵢ ‖L rᵢ‖²`.
    pub fn error_under(&self, state: &MetricState) -> f64 {
        self.iter().map(|r| state.squared_norm(r)).sum()
    }

    /// `Σᵢ rᵢᵀ M rᵢ` for an arbitrary (possibly indefinite) matrix.
    pub fn error_under_matrix(&self, metric: &DMatrix<f64>) -> f64 {
        self.iter()
            .map(|r| {
                let v = DVector::from_column_slice(r);
                v.dot(&(metric * &v))
            })
            .sum()
    }
}

/// Sparse reconstruction weights: row `i` is supported on its neighbor ids.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    k: usize,
    ids: Vec<usize>,
    weights: Vec<f64>,
}

impl WeightMatrix {
    /// Assembles weights from per-row `(ids, weights)`; rows must share a
    /// length and each must sum to one.
    pub fn from_rows(n: usize, rows: Vec<(Vec<usize>, Vec<f64>)>) -> Result<Self> {
        if rows.len() != n {
            return Err(AlleError::DimensionMismatch {
                expected: n,
                actual: rows.len(),
            });
        }
        let k = rows.first().map_or(0, |r| r.0.len());
        let mut ids = Vec::with_capacity(n * k);
        let mut weights = Vec::with_capacity(n * k);
        for (i, (row_ids, row_w)) in rows.into_iter().enumerate() {
            if row_ids.len() != k || row_w.len() != k {
                return Err(AlleError::DimensionMismatch {
                    expected: k,
                    actual: row_ids.len().max(row_w.len()),
                });
            }
            if row_ids.iter().any(|&j| j >= n) {
                return Err(AlleError::invalid(format!("row {i} references a point out of range")));
            }
            if row_w.iter().any(|w| !w.is_finite()) {
                return Err(AlleError::NonFinite("weights"));
            }
            let sum: f64 = row_w.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(AlleError::invalid(format!("row {i} sums to {sum}, not 1")));
            }
            ids.extend(row_ids);
            weights.extend(row_w);
        }
        Ok(WeightMatrix { n, k, ids, weights })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn ids(&self, i: usize) -> &[usize] {
        &self.ids[i * self.k..(i + 1) * self.k]
    }

    pub fn weights(&self, i: usize) -> &[f64] {
        &self.weights[i * self.k..(i + 1) * self.k]
    }

    /// Dense n×n copy (row `i` holds `wᵢⱼ` in column `j`).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (&j, &wij) in self.ids(i).iter().zip(self.weights(i)) {
                w[(i, j)] += wij;
            }
        }
        w
    }
}

/// `G = (x1ᵀ − X)ᵀ M (x1ᵀ − X)` for one point and its neighbors.
pub fn local_gram<R: AsRef<[f64]>>(
    point: &[f64],
    neighbors: &[R],
    state: &MetricState,
) -> Result<DMatrix<f64>> {
    let dim = state.dim();
    if point.len() != dim {
        return Err(AlleError::DimensionMismatch {
            expected: dim,
            actual: point.len(),
        });
    }
    if neighbors.is_empty() {
        return Err(AlleError::invalid("local Gram matrix needs at least one neighbor"));
    }
    let mut diffs = Vec::with_capacity(neighbors.len());
    for nb in neighbors {
        let nb = nb.as_ref();
        if nb.len() != dim {
            return Err(AlleError::DimensionMismatch {
                expected: dim,
                actual: nb.len(),
            });
        }
        let diff: Vec<f64> = point.iter().zip(nb).map(|(a, b)| a - b).collect();
        diffs.push(state.transform(&diff));
    }
    Ok(gram_of(&diffs))
}

fn gram_of(diffs: &[DVector<f64>]) -> DMatrix<f64> {
    let k = diffs.len();
    let mut g = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let v = diffs[a].dot(&diffs[b]);
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    g
}

/// Solves `(G + ε·tr(G)/K·I) w = 1` and rescales `w` to sum to one.
pub fn reconstruction_weights(gram: &DMatrix<f64>, reg: f64) -> Result<Vec<f64>> {
    solve_weights(gram, reg).map_err(|sum| AlleError::DegenerateNeighborhood { point: 0, sum })
}

/// `Err(sum)` carries the offending normalizer.
fn solve_weights(gram: &DMatrix<f64>, reg: f64) -> std::result::Result<Vec<f64>, f64> {
    let k = gram.nrows();
    let trace = gram.trace();
    // All neighbors coincide with the point: fall back to an absolute shift.
    let shift = if trace > 0.0 { reg * trace / k as f64 } else { reg };
    let mut system = gram.clone();
    for d in 0..k {
        system[(d, d)] += shift;
    }
    let ones = DVector::from_element(k, 1.0);
    let solution = match nalgebra::Cholesky::new(system.clone()) {
        Some(ch) => Some(ch.solve(&ones)),
        None => system.lu().solve(&ones),
    };
    let w = match solution {
        Some(w) if w.iter().all(|v| v.is_finite()) => w,
        _ => return Err(f64::NAN),
    };
    let sum = w.sum();
    if !(sum.abs() > DEGENERATE_SUM) {
        return Err(sum);
    }
    Ok(w.iter().map(|v| v / sum).collect())
}

/// Reconstruction weights for every point under the metric.
pub fn compute_weights(
    data: &DataMatrix,
    neighbors: &NeighborIndex,
    state: &MetricState,
    reg: f64,
) -> Result<WeightMatrix> {
    let n = data.rows();
    if neighbors.len() != n {
        return Err(AlleError::DimensionMismatch {
            expected: n,
            actual: neighbors.len(),
        });
    }
    if !(reg >= 0.0) {
        return Err(AlleError::invalid(format!("gram regularization must be non-negative, got {reg}")));
    }
    // L(xᵢ − xⱼ) = Lxᵢ − Lxⱼ: transform each point once.
    let transformed: Vec<DVector<f64>> = (0..n)
        .into_par_iter()
        .map(|i| state.transform(data.row(i)))
        .collect();
    let rows: Vec<Result<(Vec<usize>, Vec<f64>)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ids = neighbors.neighbors(i);
            let diffs: Vec<DVector<f64>> =
                ids.iter().map(|&j| &transformed[i] - &transformed[j]).collect();
            let w = solve_weights(&gram_of(&diffs), reg)
                .map_err(|sum| AlleError::DegenerateNeighborhood { point: i, sum })?;
            Ok((ids.to_vec(), w))
        })
        .collect();
    let k = neighbors.k();
    let mut ids = Vec::with_capacity(n * k);
    let mut weights = Vec::with_capacity(n * k);
    for row in rows {
        let (row_ids, row_w) = row?;
        ids.extend(row_ids);
        weights.extend(row_w);
    }
    Ok(WeightMatrix { n, k, ids, weights })
}

/// `rᵢ = xᵢ − Σⱼ wᵢⱼ xⱼ`.
pub fn compute_residuals(data: &DataMatrix, weights: &WeightMatrix) -> Result<ResidualSet> {
    if weights.n() != data.rows() {
        return Err(AlleError::DimensionMismatch {
            expected: data.rows(),
            actual: weights.n(),
        });
    }
    let dim = data.dim();
    let mut values = Vec::with_capacity(data.rows() * dim);
    for i in 0..data.rows() {
        let mut r = data.row(i).to_vec();
        for (&j, &w) in weights.ids(i).iter().zip(weights.weights(i)) {
            for (rv, xv) in r.iter_mut().zip(data.row(j)) {
                *rv -= w * xv;
            }
        }
        values.extend(r);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(AlleError::NonFinite("residuals"));
    }
    Ok(ResidualSet { dim, values })
}

/// `E = Σᵢ rᵢᵀ M rᵢ`.
pub fn reconstruction_error(residuals: &ResidualSet, state: &MetricState) -> f64 {
    residuals.error_under(state)
}
