//! Datasets: the in-memory sample matrix, synthetic generators and file
//! loaders.

mod csv_io;
mod idx;
mod iris;
mod swiss_roll;

use std::collections::BTreeSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{AlleError, Result};

pub use csv_io::{load_csv, load_csv_table, write_csv};
pub use idx::{load_idx, read_idx_images, read_idx_labels};
pub use iris::builtin_iris;
pub use swiss_roll::{generate_swiss_roll, scaled_swiss_roll, SWISS_ROLL_T_RANGE};

/// An n×D table of samples stored row-major, with optional integer class
/// labels, an optional real-valued color per row (e.g. the Swiss roll
/// parameter), and optional column names.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f64>,
    labels: Option<Vec<usize>>,
    color: Option<Vec<f64>>,
    feature_names: Option<Vec<String>>,
}

impl DataMatrix {
    pub fn new(rows: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(AlleError::invalid(format!(
                "data matrix must be non-empty, got {rows}x{dim}"
            )));
        }
        if values.len() != rows * dim {
            return Err(AlleError::DimensionMismatch {
                expected: rows * dim,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AlleError::NonFinite("data matrix"));
        }
        Ok(DataMatrix {
            rows,
            dim,
            values,
            labels: None,
            color: None,
            feature_names: None,
        })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(AlleError::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(rows.len(), dim, values)
    }

    /// Row-major copy of a dense matrix.
    pub fn from_matrix(m: &nalgebra::DMatrix<f64>) -> Result<Self> {
        let values = m.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect();
        Self::new(m.nrows(), m.ncols(), values)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.rows {
            return Err(AlleError::DimensionMismatch {
                expected: self.rows,
                actual: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_color(mut self, color: Vec<f64>) -> Result<Self> {
        if color.len() != self.rows {
            return Err(AlleError::DimensionMismatch {
                expected: self.rows,
                actual: color.len(),
            });
        }
        if color.iter().any(|v| !v.is_finite()) {
            return Err(AlleError::NonFinite("color column"));
        }
        self.color = Some(color);
        Ok(self)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dim {
            return Err(AlleError::DimensionMismatch {
                expected: self.dim,
                actual: names.len(),
            });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim + j]
    }

    /// Row-major backing storage.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn color(&self) -> Option<&[f64]> {
        self.color.as_deref()
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Copies the selected rows (in the given order), carrying labels and
    /// color along.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.rows) {
            return Err(AlleError::invalid(format!(
                "row index {bad} out of range for {} rows",
                self.rows
            )));
        }
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Ok(DataMatrix {
            rows: indices.len(),
            dim: self.dim,
            values,
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            color: self
                .color
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
            feature_names: self.feature_names.clone(),
        })
    }
}

/// Multiplies column `j` by `factors[j]`.
pub fn scale_features(data: &DataMatrix, factors: &[f64]) -> Result<DataMatrix> {
    if factors.len() != data.dim {
        return Err(AlleError::DimensionMismatch {
            expected: data.dim,
            actual: factors.len(),
        });
    }
    if let Some(f) = factors.iter().find(|f| !(**f > 0.0) || !f.is_finite()) {
        return Err(AlleError::invalid(format!(
            "scale factors must be positive, got {f}"
        )));
    }
    let mut out = data.clone();
    for row in out.values.chunks_exact_mut(out.dim) {
        for (v, f) in row.iter_mut().zip(factors) {
            *v *= f;
        }
    }
    Ok(out)
}

/// Draws `n_out` rows uniformly without replacement, after keeping only the
/// rows whose label is in `classes` (when given).
pub fn subsample(
    data: &DataMatrix,
    n_out: usize,
    classes: Option<&BTreeSet<usize>>,
    seed: u64,
) -> Result<DataMatrix> {
    let pool: Vec<usize> = match classes {
        None => (0..data.rows).collect(),
        Some(classes) => {
            let labels = data
                .labels()
                .ok_or_else(|| AlleError::invalid("class filter requires labels"))?;
            labels
                .iter()
                .enumerate()
                .filter(|(_, l)| classes.contains(l))
                .map(|(i, _)| i)
                .collect()
        }
    };
    if pool.is_empty() {
        return Err(AlleError::invalid("class filter matches no rows"));
    }
    if n_out == 0 || n_out > pool.len() {
        return Err(AlleError::invalid(format!(
            "cannot draw {n_out} rows from {} candidates",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<usize> = index::sample(&mut rng, pool.len(), n_out)
        .into_iter()
        .map(|k| pool[k])
        .collect();
    data.select_rows(&picked)
}

/// Draws `n_out` rows keeping the class proportions of the (optionally
/// filtered) labels. Each class gets its floor share; leftover slots go to
/// the largest remainders, smaller label first on ties. Rows come back in
/// their original order.
pub fn stratified_subsample(
    data: &DataMatrix,
    n_out: usize,
    classes: Option<&BTreeSet<usize>>,
    seed: u64,
) -> Result<DataMatrix> {
    let labels = data
        .labels()
        .ok_or_else(|| AlleError::invalid("stratified sampling requires labels"))?;
    let mut by_class: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &l) in labels.iter().enumerate() {
        if classes.is_none_or(|c| c.contains(&l)) {
            by_class.entry(l).or_default().push(i);
        }
    }
    let total: usize = by_class.values().map(Vec::len).sum();
    if total == 0 {
        return Err(AlleError::invalid("class filter matches no rows"));
    }
    if n_out == 0 || n_out > total {
        return Err(AlleError::invalid(format!(
            "cannot draw {n_out} rows from {total} candidates"
        )));
    }
    let mut quota: Vec<(usize, usize, f64)> = by_class
        .iter()
        .map(|(&c, members)| {
            let exact = n_out as f64 * members.len() as f64 / total as f64;
            (c, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quota.iter().map(|q| q.1).sum();
    let mut by_remainder: Vec<usize> = (0..quota.len()).collect();
    by_remainder.sort_by(|&a, &b| quota[b].2.total_cmp(&quota[a].2).then(a.cmp(&b)));
    for &q in by_remainder.iter().take(n_out - assigned) {
        quota[q].1 += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(n_out);
    for (c, take, _) in quota {
        let members = &by_class[&c];
        picked.extend(index::sample(&mut rng, members.len(), take).into_iter().map(|k| members[k]));
    }
    picked.sort_unstable();
    data.select_rows(&picked)
}
