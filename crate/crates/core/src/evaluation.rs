//! Embedding-quality metrics.
//!
//! Trustworthiness and continuity follow Venna & Kaski: with `r(i,j)` the
//! rank of `j` among `i`'s neighbors in the original space and `s(i,j)` the
//! same in the embedding,
//!
//! ```text
//! T(k) = 1 − 2/(nk(2n−3k−1)) Σᵢ Σ_{j ∈ U(i,k)} (r(i,j) − k)
//! C(k) = 1 − 2/(nk(2n−3k−1)) Σᵢ Σ_{j ∈ V(i,k)} (s(i,j) − k)
//! ```
//!
//! where `U(i,k)` holds embedding neighbors that are not original
//! neighbors and `V(i,k)` original neighbors missing from the embedding
//! neighborhood. Ranks are 1-based with ties broken by the lower index.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{AlleError, Result};
use crate::neighbors::by_distance_then_index;

pub const DEFAULT_TEST_FRACTION: f64 = 0.25;
pub const DEFAULT_K_CLASSIFY: usize = 5;
pub const LOGISTIC_L2: f64 = 1e-4;

const LOGISTIC_TOL: f64 = 1e-6;
const LOGISTIC_MAX_ITER: usize = 50_000;

/// Euclidean neighbor ranks from every point: `rank(i, j)` is the 1-based
/// position of `j` in `i`'s ascending distance ordering (self excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    n: usize,
    /// `order[i*(n-1) + r]` is the point at rank `r + 1` from `i`.
    order: Vec<usize>,
    /// `ranks[i*n + j]`; zero on the diagonal.
    ranks: Vec<usize>,
}

impl RankTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self, i: usize, j: usize) -> usize {
        self.ranks[i * self.n + j]
    }

    /// The `k` nearest points to `i`, closest first.
    pub fn nearest(&self, i: usize, k: usize) -> &[usize] {
        let start = i * (self.n - 1);
        &self.order[start..start + k]
    }

    /// Ranks from `i` indexed by point; entry `i` is zero.
    pub fn row(&self, i: usize) -> &[usize] {
        &self.ranks[i * self.n..(i + 1) * self.n]
    }
}

pub fn rank_table(points: &DataMatrix) -> Result<RankTable> {
    let n = points.rows();
    if n < 2 {
        return Err(AlleError::invalid("rank table needs at least two points"));
    }
    let rows: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = points.row(i);
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (squared_distance(xi, points.row(j)), j))
                .collect();
            cand.sort_unstable_by(by_distance_then_index);
            cand.into_iter().map(|(_, j)| j).collect()
        })
        .collect();
    let mut order = Vec::with_capacity(n * (n - 1));
    let mut ranks = vec![0usize; n * n];
    for (i, row) in rows.into_iter().enumerate() {
        for (r, &j) in row.iter().enumerate() {
            ranks[i * n + j] = r + 1;
        }
        order.extend(row);
    }
    Ok(RankTable { n, order, ranks })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_pair(original: &DataMatrix, embedded: &DataMatrix, k: usize) -> Result<()> {
    let n = original.rows();
    if embedded.rows() != n {
        return Err(AlleError::DimensionMismatch {
            expected: n,
            actual: embedded.rows(),
        });
    }
    // The normalizer nk(2n − 3k − 1) must be positive.
    if k == 0 || 3 * k + 1 >= 2 * n {
        return Err(AlleError::invalid(format!(
            "k = {k} violates 1 <= k < (2n - 1)/3 for n = {n}"
        )));
    }
    Ok(())
}

/// Penalty sum Σᵢ Σ_{j ∈ near_b(i) \ near_a(i)} (rank_a(i,j) − k).
fn rank_penalty(a: &RankTable, b: &RankTable, k: usize) -> f64 {
    (0..a.n())
        .into_par_iter()
        .map(|i| {
            let ranks_a = a.row(i);
            b.nearest(i, k)
                .iter()
                .filter(|&&j| ranks_a[j] > k)
                .map(|&j| (ranks_a[j] - k) as f64)
                .sum::<f64>()
        })
        .sum()
}

fn normalized(penalty: f64, n: usize, k: usize) -> f64 {
    let (n, k) = (n as f64, k as f64);
    1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * penalty
}

/// Trustworthiness and continuity sharing one pair of rank tables.
pub fn neighborhood_preservation(original: &DataMatrix, embedded: &DataMatrix, k: usize) -> Result<(f64, f64)> {
    check_pair(original, embedded, k)?;
    let rx = rank_table(original)?;
    let ry = rank_table(embedded)?;
    let n = original.rows();
    Ok((
        normalized(rank_penalty(&rx, &ry, k), n, k),
        normalized(rank_penalty(&ry, &rx, k), n, k),
    ))
}

pub fn trustworthiness(original: &DataMatrix, embedded: &DataMatrix, k: usize) -> Result<f64> {
    check_pair(original, embedded, k)?;
    let rx = rank_table(original)?;
    let ry = rank_table(embedded)?;
    Ok(normalized(rank_penalty(&rx, &ry, k), original.rows(), k))
}

pub fn continuity(original: &DataMatrix, embedded: &DataMatrix, k: usize) -> Result<f64> {
    check_pair(original, embedded, k)?;
    let rx = rank_table(original)?;
    let ry = rank_table(embedded)?;
    Ok(normalized(rank_penalty(&ry, &rx, k), original.rows(), k))
}

/// Mean silhouette `(b − a) / max(a, b)` over all points, Euclidean.
/// Points in singleton clusters score zero.
pub fn silhouette(points: &DataMatrix, labels: &[usize]) -> Result<f64> {
    let n = points.rows();
    if labels.len() != n {
        return Err(AlleError::DimensionMismatch {
            expected: n,
            actual: labels.len(),
        });
    }
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *sizes.entry(l).or_default() += 1;
    }
    if sizes.len() < 2 {
        return Err(AlleError::invalid("silhouette needs at least two clusters"));
    }
    let clusters: Vec<usize> = sizes.keys().copied().collect();
    let slot: BTreeMap<usize, usize> = clusters.iter().enumerate().map(|(s, &c)| (c, s)).collect();

    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            if sizes[&own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; clusters.len()];
            for j in 0..n {
                if j != i {
                    sums[slot[&labels[j]]] += squared_distance(points.row(i), points.row(j)).sqrt();
                }
            }
            let a = sums[slot[&own]] / (sizes[&own] - 1) as f64;
            let b = clusters
                .iter()
                .filter(|&&c| c != own)
                .map(|c| sums[slot[c]] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .sum();
    Ok(total / n as f64)
}

/// How labeled points are divided into train and test sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Split {
    /// Per-class random split with roughly `test_fraction` of each class held out.
    Stratified { test_fraction: f64, seed: u64 },
    /// Every point is both trained on and tested; k-NN excludes the query
    /// point itself (leave-one-out).
    TrainIsTest,
}

impl Default for Split {
    fn default() -> Self {
        Split::Stratified {
            test_fraction: DEFAULT_TEST_FRACTION,
            seed: 0,
        }
    }
}

impl Split {
    pub fn describe(&self) -> String {
        match self {
            Split::Stratified { test_fraction, seed } => format!(
                "stratified {:.0}/{:.0} (seed {seed})",
                100.0 * (1.0 - test_fraction),
                100.0 * test_fraction
            ),
            Split::TrainIsTest => "train = test (leave-one-out)".to_string(),
        }
    }

    /// `(train, test)` indices, each sorted ascending.
    pub fn indices(&self, labels: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
        match *self {
            Split::TrainIsTest => {
                let all: Vec<usize> = (0..labels.len()).collect();
                Ok((all.clone(), all))
            }
            Split::Stratified { test_fraction, seed } => {
                if !(test_fraction > 0.0 && test_fraction < 1.0) {
                    return Err(AlleError::invalid(format!(
                        "test fraction must lie in (0, 1), got {test_fraction}"
                    )));
                }
                let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
                for (i, &l) in labels.iter().enumerate() {
                    by_class.entry(l).or_default().push(i);
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (mut train, mut test) = (Vec::new(), Vec::new());
                for (class, mut members) in by_class {
                    if members.len() < 2 {
                        return Err(AlleError::invalid(format!(
                            "class {class} has {} sample(s); a stratified split needs at least 2",
                            members.len()
                        )));
                    }
                    members.shuffle(&mut rng);
                    let n_test = ((members.len() as f64 * test_fraction).round() as usize)
                        .clamp(1, members.len() - 1);
                    test.extend_from_slice(&members[..n_test]);
                    train.extend_from_slice(&members[n_test..]);
                }
                train.sort_unstable();
                test.sort_unstable();
                Ok((train, test))
            }
        }
    }
}

fn check_labels(points: &DataMatrix, labels: &[usize]) -> Result<()> {
    if labels.len() != points.rows() {
        return Err(AlleError::DimensionMismatch {
            expected: points.rows(),
            actual: labels.len(),
        });
    }
    Ok(())
}

/// Majority vote of the `k_classify` nearest training points (Euclidean),
/// scored on the test split. The query point itself is never its own
/// neighbor; vote ties go to the smallest label.
pub fn knn_accuracy(points: &DataMatrix, labels: &[usize], k_classify: usize, split: &Split) -> Result<f64> {
    check_labels(points, labels)?;
    let (train, test) = split.indices(labels)?;
    if k_classify == 0 {
        return Err(AlleError::invalid("k_classify must be at least 1"));
    }
    let correct = test
        .par_iter()
        .map(|&q| {
            let mut cand: Vec<(f64, usize)> = train
                .iter()
                .filter(|&&t| t != q)
                .map(|&t| (squared_distance(points.row(q), points.row(t)), t))
                .collect();
            if cand.len() < k_classify {
                return Err(AlleError::invalid(format!(
                    "k_classify = {k_classify} exceeds the {} available training points",
                    cand.len()
                )));
            }
            cand.select_nth_unstable_by(k_classify - 1, by_distance_then_index);
            let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
            for &(_, t) in &cand[..k_classify] {
                *votes.entry(labels[t]).or_default() += 1;
            }
            let predicted = argmax_smallest(votes.into_iter());
            Ok(usize::from(predicted == labels[q]))
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / test.len() as f64)
}

/// Key with the largest count; ties resolved toward the smallest key.
fn argmax_smallest<K: Ord + Copy, V: PartialOrd + Copy>(items: impl Iterator<Item = (K, V)>) -> K {
    let mut best: Option<(K, V)> = None;
    for (k, v) in items {
        best = match best {
            Some((bk, bv)) if bv > v || (bv == v && bk < k) => Some((bk, bv)),
            _ => Some((k, v)),
        };
    }
    best.expect("non-empty").0
}

/// Multinomial logistic regression with an L2 penalty, fit by full-batch
/// gradient descent on standardized features.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    classes: Vec<usize>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// `classes × (dim + 1)`, bias last.
    weights: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticModel {
    pub fn fit(rows: &[&[f64]], labels: &[usize], l2: f64) -> Result<Self> {
        if rows.is_empty() || rows.len() != labels.len() {
            return Err(AlleError::invalid("logistic regression needs matching, non-empty data"));
        }
        let dim = rows[0].len();
        let n = rows.len() as f64;
        let mut classes: Vec<usize> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let class_slot: BTreeMap<usize, usize> = classes.iter().enumerate().map(|(s, &c)| (c, s)).collect();

        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(*r) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in scale.iter_mut().zip(*r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        let features: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let mut f: Vec<f64> = r.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect();
                f.push(1.0);
                f
            })
            .collect();

        // Softmax cross-entropy has Hessian ⪯ ½·mean(‖x‖²)·I.
        let lipschitz = 0.5 * features.iter().map(|f| f.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / n + l2;
        let step = 1.0 / lipschitz;
        let n_classes = classes.len();
        let width = dim + 1;
        let mut weights = vec![vec![0.0; width]; n_classes];
        let mut iterations = 0;
        let mut converged = n_classes < 2;
        while !converged && iterations < LOGISTIC_MAX_ITER {
            let mut grad = vec![vec![0.0; width]; n_classes];
            for (f, &label) in features.iter().zip(labels) {
                let probs = softmax(&weights, f);
                let target = class_slot[&label];
                for c in 0..n_classes {
                    let delta = (probs[c] - f64::from(u8::from(c == target))) / n;
                    for (g, v) in grad[c].iter_mut().zip(f) {
                        *g += delta * v;
                    }
                }
            }
            let mut max_grad: f64 = 0.0;
            for c in 0..n_classes {
                for j in 0..width {
                    // Bias is not penalized.
                    if j < dim {
                        grad[c][j] += l2 * weights[c][j];
                    }
                    max_grad = max_grad.max(grad[c][j].abs());
                    weights[c][j] -= step * grad[c][j];
                }
            }
            iterations += 1;
            converged = max_grad < LOGISTIC_TOL;
        }
        Ok(LogisticModel {
            classes,
            mean,
            scale,
            weights,
            iterations,
            converged,
        })
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        let mut f: Vec<f64> = row
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        f.push(1.0);
        let scores: Vec<f64> = self.weights.iter().map(|w| w.iter().zip(&f).map(|(a, b)| a * b).sum()).collect();
        let slot = argmax_smallest(scores.iter().copied().enumerate());
        self.classes[slot]
    }
}

fn softmax(weights: &[Vec<f64>], f: &[f64]) -> Vec<f64> {
    let scores: Vec<f64> = weights.iter().map(|w| w.iter().zip(f).map(|(a, b)| a * b).sum()).collect();
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Test accuracy of a multinomial logistic regression trained on the
/// train split.
pub fn linear_accuracy(points: &DataMatrix, labels: &[usize], split: &Split) -> Result<f64> {
    check_labels(points, labels)?;
    let (train, test) = split.indices(labels)?;
    let rows: Vec<&[f64]> = train.iter().map(|&i| points.row(i)).collect();
    let train_labels: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let model = LogisticModel::fit(&rows, &train_labels, LOGISTIC_L2)?;
    let correct = test.iter().filter(|&&i| model.predict(points.row(i)) == labels[i]).count();
    Ok(correct as f64 / test.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationOptions {
    pub k: usize,
    pub k_classify: usize,
    pub split: Split,
}

impl EvaluationOptions {
    pub fn with_k(k: usize) -> Self {
        EvaluationOptions {
            k,
            k_classify: DEFAULT_K_CLASSIFY,
            split: Split::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub trustworthiness: f64,
    pub continuity: f64,
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub silhouette: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub knn_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub linear_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub split: Option<String>,
    pub config_echo: serde_json::Value,
}

/// Neighborhood preservation always; cluster and classification scores
/// (on the embedding) only when labels are supplied.
pub fn evaluate(
    original: &DataMatrix,
    embedded: &DataMatrix,
    labels: Option<&[usize]>,
    options: &EvaluationOptions,
) -> Result<QualityReport> {
    let (trustworthiness, continuity) = neighborhood_preservation(original, embedded, options.k)?;
    let mut report = QualityReport {
        trustworthiness,
        continuity,
        k: options.k,
        silhouette: None,
        knn_accuracy: None,
        linear_accuracy: None,
        split: None,
        config_echo: serde_json::Value::Null,
    };
    if let Some(labels) = labels {
        report.silhouette = Some(silhouette(embedded, labels)?);
        report.knn_accuracy = Some(knn_accuracy(embedded, labels, options.k_classify, &options.split)?);
        report.linear_accuracy = Some(linear_accuracy(embedded, labels, &options.split)?);
        report.split = Some(options.split.describe());
    }
    Ok(report)
}
