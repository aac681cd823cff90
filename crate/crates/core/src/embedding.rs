//! The embedding cost matrix `M_W = (I − W)ᵀ(I − W)` and its bottom
//! eigenvectors.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::DataMatrix;
use crate::error::{AlleError, Result};
use crate::metric::MetricState;
use crate::pipeline::PipelineConfig;
use crate::reconstruction::WeightMatrix;

/// Beyond the smallest eigenvalue, which is always dropped, eigenvalues at
/// or below `DEFAULT_NULL_TOL · λ_max` also count as zero.
///
/// Kept tight on purpose: on a densely sampled manifold the informative
/// bottom eigenvalues can sit near 1e-13 · λ_max, while the constant mode
/// comes out of the solver around 1e-17 · λ_max.
pub const DEFAULT_NULL_TOL: f64 = 1e-14;

/// Dense eigensolves beyond this size are refused.
pub const MAX_DENSE_POINTS: usize = 4000;

/// Low-dimensional coordinates from the spectral step.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEmbedding {
    /// n×d, scaled so that `(1/n) YᵀY = I`.
    pub coordinates: DMatrix<f64>,
    /// The `d` eigenvalues used, ascending.
    pub eigenvalues: Vec<f64>,
    /// Smallest eigenvalue of `M_W` (the constant mode).
    pub null_eigenvalue: f64,
}

/// Output of a full fit.
#[derive(Debug, Clone)]
pub struct EmbeddingResult {
    pub embedding: SpectralEmbedding,
    /// `E(M)` after every completed epoch.
    pub error_trace: Vec<f64>,
    /// Set when the learning rate exceeded the descent bound in any epoch.
    pub eta_guard: bool,
    pub epochs_run: usize,
    /// Epochs whose direct metric step came out indefinite and was repaired.
    pub psd_repairs: usize,
    pub metric: MetricState,
    pub config: PipelineConfig,
}

impl EmbeddingResult {
    pub fn coordinates(&self) -> &DMatrix<f64> {
        &self.embedding.coordinates
    }

    /// The coordinates as a table with columns `y0..y{d-1}`, carrying the
    /// source rows' labels and color.
    pub fn to_data(&self, source: &DataMatrix) -> Result<DataMatrix> {
        let y = &self.embedding.coordinates;
        let mut out = DataMatrix::from_matrix(y)?
            .with_feature_names((0..y.ncols()).map(|j| format!("y{j}")).collect())?;
        if let Some(labels) = source.labels() {
            out = out.with_labels(labels.to_vec())?;
        }
        if let Some(color) = source.color() {
            out = out.with_color(color.to_vec())?;
        }
        Ok(out)
    }
}

/// `M_W = (I − W)ᵀ(I − W)`, assembled as `I − W − Wᵀ + WᵀW`.
pub fn embedding_matrix(weights: &WeightMatrix) -> DMatrix<f64> {
    let n = weights.n();
    let mut m = DMatrix::identity(n, n);
    for i in 0..n {
        let ids = weights.ids(i);
        let ws = weights.weights(i);
        for (&a, &wa) in ids.iter().zip(ws) {
            m[(i, a)] -= wa;
            m[(a, i)] -= wa;
            for (&b, &wb) in ids.iter().zip(ws) {
                m[(a, b)] += wa * wb;
            }
        }
    }
    m
}

/// Bottom non-null eigenvectors of `M_W`, scaled by `√n`, with each
/// column's largest-magnitude entry made positive.
///
/// `null_tol` is relative to the largest eigenvalue.
pub fn solve_embedding(cost: &DMatrix<f64>, d: usize, null_tol: f64) -> Result<SpectralEmbedding> {
    let n = cost.nrows();
    if !cost.is_square() {
        return Err(AlleError::invalid("embedding matrix must be square"));
    }
    if d == 0 || d + 2 > n {
        return Err(AlleError::invalid(format!(
            "n_components must lie in [1, {}], got {d}",
            n.saturating_sub(2)
        )));
    }
    if n > MAX_DENSE_POINTS {
        return Err(AlleError::invalid(format!(
            "{n} points exceed the dense eigensolver limit of {MAX_DENSE_POINTS}; subsample first"
        )));
    }
    if !(null_tol >= 0.0) {
        return Err(AlleError::invalid(format!("null tolerance must be non-negative, got {null_tol}")));
    }
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(AlleError::NonFinite("embedding matrix"));
    }

    let eig = SymmetricEigen::new(cost.clone());
    let null_eigenvalue = eig.eigenvalues.min();
    let chosen = select_non_null(eig.eigenvalues.as_slice(), d, null_tol)?;
    let (basis, ritz) = refine(cost, &eig, &chosen);

    let scale = (n as f64).sqrt();
    let mut coordinates = DMatrix::zeros(n, d);
    for (col, v) in basis.column_iter().enumerate() {
        let pivot = v.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for row in 0..n {
            coordinates[(row, col)] = sign * scale * v[row];
        }
    }
    Ok(SpectralEmbedding {
        coordinates,
        eigenvalues: ritz,
        null_eigenvalue,
    })
}

/// Rayleigh-Ritz pass over the chosen eigenvectors.
///
/// The informative bottom eigenvalues can sit closer to the null space
/// than the solver can resolve, so the raw vectors carry a small constant
/// component. The exact ones are orthogonal to `1` and to the rest of the
/// null space; project those out, re-orthonormalize and re-diagonalize
/// `M_W` inside the chosen subspace.
fn refine(cost: &DMatrix<f64>, eig: &SymmetricEigen<f64, nalgebra::Dyn>, chosen: &[usize]) -> (DMatrix<f64>, Vec<f64>) {
    let n = cost.nrows();
    let d = chosen.len();
    let top = chosen.iter().map(|&k| eig.eigenvalues[k]).fold(f64::NEG_INFINITY, f64::max);
    let skipped: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|k| !chosen.contains(k) && eig.eigenvalues[*k] <= top)
        .collect();
    // The exact null space contains `1`; the computed skipped vectors span
    // the rest of it only approximately. Deflate `1` from them and keep the
    // dominant `skipped.len() − 1` directions of what remains, rather than
    // orthogonalizing rounding noise.
    let ones = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut null = vec![ones.clone()];
    if skipped.len() > 1 {
        let mut cols = DMatrix::zeros(n, skipped.len());
        for (c, &k) in skipped.iter().enumerate() {
            let v = eig.eigenvectors.column(k);
            cols.set_column(c, &(v - &ones * ones.dot(&v)));
        }
        let svd = cols.svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let mut by_value: Vec<usize> = (0..svd.singular_values.len()).collect();
        by_value.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        null.extend(by_value.iter().take(skipped.len() - 1).map(|&j| u.column(j).clone_owned()));
    }
    let mut sub = DMatrix::zeros(n, d);
    for (col, &k) in chosen.iter().enumerate() {
        let mut v = eig.eigenvectors.column(k).clone_owned();
        for b in &null {
            v -= b * b.dot(&v);
        }
        sub.set_column(col, &v);
    }
    let q = sub.qr().q();
    let small = q.transpose() * cost * &q;
    let small = (&small + small.transpose()) * 0.5;
    let inner = SymmetricEigen::new(small);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| inner.eigenvalues[a].total_cmp(&inner.eigenvalues[b]).then(a.cmp(&b)));
    let rotation = DMatrix::from_fn(d, d, |i, j| inner.eigenvectors[(i, order[j])]);
    let ritz = order.iter().map(|&j| inner.eigenvalues[j]).collect();
    (q * rotation, ritz)
}

/// Indices of the `d` smallest eigenvalues, ascending, after dropping the
/// smallest one (the constant mode) and any others at or below
/// `null_tol · λ_max` (extra components of a disconnected graph).
pub fn select_non_null(eigenvalues: &[f64], d: usize, null_tol: f64) -> Result<Vec<usize>> {
    let lambda_max = eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = null_tol * lambda_max.max(0.0);
    let mut order: Vec<usize> = (0..eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eigenvalues[a].total_cmp(&eigenvalues[b]).then(a.cmp(&b)));
    let chosen: Vec<usize> = order
        .into_iter()
        .skip(1)
        .filter(|&k| eigenvalues[k] > threshold)
        .take(d)
        .collect();
    if chosen.len() < d {
        return Err(AlleError::DisconnectedGraph {
            found: chosen.len(),
            requested: d,
        });
    }
    Ok(chosen)
}
