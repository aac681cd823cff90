//! Exact K-nearest-neighbor search under the learned metric.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::data::DataMatrix;
use crate::error::{AlleError, Result};
use crate::metric::MetricState;

/// Per-point neighbor lists, sorted by ascending distance.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborIndex {
    k: usize,
    ids: Vec<usize>,
    distances: Vec<f64>,
}

impl NeighborIndex {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.ids.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.ids[i * self.k..(i + 1) * self.k]
    }

    pub fn distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }

    /// Builds an index from explicit neighbor lists, checking shape only.
    pub fn from_lists(lists: Vec<Vec<usize>>) -> Result<Self> {
        let n = lists.len();
        let k = lists.first().map_or(0, Vec::len);
        if k == 0 {
            return Err(AlleError::invalid("neighbor lists must be non-empty"));
        }
        let mut ids = Vec::with_capacity(n * k);
        for (i, list) in lists.iter().enumerate() {
            if list.len() != k {
                return Err(AlleError::DimensionMismatch {
                    expected: k,
                    actual: list.len(),
                });
            }
            if let Some(bad) = list.iter().find(|&&j| j >= n || j == i) {
                return Err(AlleError::invalid(format!("invalid neighbor {bad} for point {i}")));
            }
            ids.extend_from_slice(list);
        }
        Ok(NeighborIndex {
            k,
            distances: vec![f64::NAN; ids.len()],
            ids,
        })
    }
}

/// Ascending by distance, then by index.
pub(crate) fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Brute-force search: every point's `k` closest other points under
/// `d_M(x, y) = ‖L(x − y)‖`, ties broken by the smaller index.
pub fn knn(data: &DataMatrix, k: usize, state: &MetricState) -> Result<NeighborIndex> {
    let n = data.rows();
    if k == 0 || k >= n {
        return Err(AlleError::invalid(format!(
            "n_neighbors must lie in [1, {}], got {k}",
            n.saturating_sub(1)
        )));
    }
    if state.dim() != data.dim() {
        return Err(AlleError::DimensionMismatch {
            expected: data.dim(),
            actual: state.dim(),
        });
    }

    // d_M(x, y) = ‖Lx − Ly‖, so search in the transformed space.
    let transformed: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| state.transform(data.row(i)).as_slice().to_vec())
        .collect();

    let rows: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let zi = &transformed[i];
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d2: f64 = zi
                        .iter()
                        .zip(&transformed[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (d2, j)
                })
                .collect();
            if k < cand.len() {
                cand.select_nth_unstable_by(k, by_distance_then_index);
                cand.truncate(k);
            }
            cand.sort_unstable_by(by_distance_then_index);
            cand
        })
        .collect();

    let mut ids = Vec::with_capacity(n * k);
    let mut distances = Vec::with_capacity(n * k);
    for row in rows {
        for (d2, j) in row {
            ids.push(j);
            distances.push(d2.sqrt());
        }
    }
    Ok(NeighborIndex { k, ids, distances })
}
