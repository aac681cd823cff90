//! Independent reference implementations used as test oracles. Everything
//! here is written from the defining formulas with plain loops and shares
//! no code with the library beyond the data container.

#![allow(dead_code)]

use alle::DataMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| normal(rng)).collect()).collect()
}

pub fn gaussian_data(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DataMatrix {
    DataMatrix::from_rows(&gaussian_rows(rng, n, d)).unwrap()
}

/// Well-separated Gaussian blobs with labels.
pub fn blobs(rng: &mut ChaCha8Rng, per_class: usize, classes: usize, d: usize) -> DataMatrix {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in 0..classes {
        let center: Vec<f64> = (0..d).map(|_| 8.0 * normal(rng)).collect();
        for _ in 0..per_class {
            rows.push(center.iter().map(|m| m + normal(rng)).collect::<Vec<f64>>());
            labels.push(c);
        }
    }
    DataMatrix::from_rows(&rows).unwrap().with_labels(labels).unwrap()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `M = LᵀL` by explicit sums.
pub fn metric_from_factor(l: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = l[0].len();
    let mut m = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in 0..d {
            m[a][b] = (0..l.len()).map(|r| l[r][a] * l[r][b]).sum();
        }
    }
    m
}

pub fn quad_form(m: &[Vec<f64>], u: &[f64], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for a in 0..u.len() {
        for b in 0..v.len() {
            s += u[a] * m[a][b] * v[b];
        }
    }
    s
}

/// Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Naive local Gram matrix `G_ab = (x − n_a)ᵀ M (x − n_b)`.
pub fn naive_gram(x: &[f64], neighbors: &[Vec<f64>], m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let diffs: Vec<Vec<f64>> = neighbors
        .iter()
        .map(|nb| x.iter().zip(nb).map(|(p, q)| p - q).collect())
        .collect();
    let k = diffs.len();
    let mut g = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in 0..k {
            g[a][b] = quad_form(m, &diffs[a], &diffs[b]);
        }
    }
    g
}

/// `wᵀ(G + shift·I)w`, the (optionally ridge-penalized) reconstruction
/// cost of a sum-to-one weight vector.
pub fn weight_objective(g: &[Vec<f64>], shift: f64, w: &[f64]) -> f64 {
    let mut s = 0.0;
    for a in 0..w.len() {
        for b in 0..w.len() {
            s += w[a] * g[a][b] * w[b];
        }
        s += shift * w[a] * w[a];
    }
    s
}

/// Minimizes `wᵀ(G + shift·I)w` subject to `Σw = 1` by eliminating the
/// last weight and solving the reduced normal equations.
pub fn constrained_least_squares(g: &[Vec<f64>], shift: f64) -> Vec<f64> {
    let k = g.len();
    if k == 1 {
        return vec![1.0];
    }
    let a = |i: usize, j: usize| g[i][j] + if i == j { shift } else { 0.0 };
    // w = e_K + B z, B = [I; −1ᵀ]; minimize (e + Bz)ᵀ A (e + Bz).
    let m = k - 1;
    let last = k - 1;
    let mut bab = vec![vec![0.0; m]; m];
    let mut rhs = vec![0.0; m];
    for i in 0..m {
        for j in 0..m {
            bab[i][j] = a(i, j) - a(i, last) - a(last, j) + a(last, last);
        }
        rhs[i] = -(a(i, last) - a(last, last));
    }
    let z = gauss_solve(bab, rhs);
    let mut w = z.clone();
    w.push(1.0 - z.iter().sum::<f64>());
    w
}

/// Rank of `j` among the points ordered by distance from `i`, counting
/// from 1; equal distances are ordered by index.
pub fn literal_rank(points: &DataMatrix, i: usize, j: usize) -> usize {
    let dij = sq_dist(points.row(i), points.row(j));
    1 + (0..points.rows())
        .filter(|&l| l != i && l != j)
        .filter(|&l| {
            let dil = sq_dist(points.row(i), points.row(l));
            dil < dij || (dil == dij && l < j)
        })
        .count()
}

fn literal_penalty(a: &DataMatrix, b: &DataMatrix, k: usize) -> f64 {
    let n = a.rows();
    let mut penalty = 0usize;
    for i in 0..n {
        for j in 0..n {
            if j == i {
                continue;
            }
            let in_b = literal_rank(b, i, j) <= k;
            let ra = literal_rank(a, i, j);
            if in_b && ra > k {
                penalty += ra - k;
            }
        }
    }
    let (n, k) = (n as f64, k as f64);
    1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * penalty as f64
}

pub fn literal_trustworthiness(x: &DataMatrix, y: &DataMatrix, k: usize) -> f64 {
    literal_penalty(x, y, k)
}

pub fn literal_continuity(x: &DataMatrix, y: &DataMatrix, k: usize) -> f64 {
    literal_penalty(y, x, k)
}

pub fn literal_silhouette(points: &DataMatrix, labels: &[usize]) -> f64 {
    let n = points.rows();
    let mut total = 0.0;
    for i in 0..n {
        let own = labels[i];
        let own_size = labels.iter().filter(|&&l| l == own).count();
        if own_size == 1 {
            continue;
        }
        let mean_to = |c: usize| {
            let members: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == c).collect();
            members
                .iter()
                .map(|&j| sq_dist(points.row(i), points.row(j)).sqrt())
                .sum::<f64>()
                / members.len() as f64
        };
        let a = mean_to(own);
        let mut others: Vec<usize> = labels.iter().copied().filter(|&l| l != own).collect();
        others.sort_unstable();
        others.dedup();
        let b = others.into_iter().map(mean_to).fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

/// Random factor with entries N(0, scale²).
pub fn random_factor(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..d).map(|_| (0..d).map(|_| scale * normal(rng)).collect()).collect()
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn power_iteration(m: &[Vec<f64>]) -> f64 {
    let d = m.len();
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + 0.1 * i as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..5000 {
        let w: Vec<f64> = (0..d).map(|a| (0..d).map(|b| m[a][b] * v[b]).sum()).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.iter().map(|x| x / norm).collect();
    }
    lambda
}
