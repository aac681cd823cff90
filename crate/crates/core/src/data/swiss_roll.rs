use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{scale_features, DataMatrix};
use crate::error::Result;

/// Range of the roll parameter `t`.
pub const SWISS_ROLL_T_RANGE: (f64, f64) = (1.5 * PI, 4.5 * PI);

const HEIGHT: f64 = 21.0;

/// Samples `n` points `(t cos t, h, t sin t) + noise * N(0, I)` with
/// `t ~ U[1.5π, 4.5π]` and `h ~ U[0, 21]`. The roll parameter `t` is kept as
/// the color column.
pub fn generate_swiss_roll(n: usize, noise: f64, seed: u64) -> Result<DataMatrix> {
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(crate::AlleError::invalid(format!(
            "noise must be non-negative, got {noise}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t_lo, t_hi) = SWISS_ROLL_T_RANGE;
    let mut values = Vec::with_capacity(n * 3);
    let mut color = Vec::with_capacity(n);
    for _ in 0..n {
        let t = rng.random_range(t_lo..=t_hi);
        let h = rng.random_range(0.0..=HEIGHT);
        let eps: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        values.push(t * t.cos() + noise * eps[0]);
        values.push(h + noise * eps[1]);
        values.push(t * t.sin() + noise * eps[2]);
        color.push(t);
    }
    DataMatrix::new(n, 3, values)?
        .with_color(color)?
        .with_feature_names(vec!["x".into(), "y".into(), "z".into()])
}

/// Swiss roll with each axis stretched by `factors` (default benchmark uses
/// `[1, 1, 10]`).
pub fn scaled_swiss_roll(n: usize, noise: f64, factors: &[f64], seed: u64) -> Result<DataMatrix> {
    scale_features(&generate_swiss_roll(n, noise, seed)?, factors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_is_finite() {
        let x = generate_swiss_roll(1, 0.0, 0).unwrap();
        assert_eq!((x.rows(), x.dim()), (1, 3));
        assert!(x.row(0).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let a = generate_swiss_roll(1000, 0.0, 7).unwrap();
        let b = generate_swiss_roll(1000, 0.0, 7).unwrap();
        assert_eq!(a.values(), b.values());
        let c = generate_swiss_roll(1000, 0.0, 8).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn noiseless_points_lie_on_the_roll() {
        let x = generate_swiss_roll(1000, 0.0, 7).unwrap();
        let t = x.color().unwrap();
        let (lo, hi) = SWISS_ROLL_T_RANGE;
        for (row, &t) in x.iter_rows().zip(t) {
            assert!((lo..=hi).contains(&t));
            let r2 = row[0] * row[0] + row[2] * row[2];
            assert!((r2 - t * t).abs() <= 1e-9 * t * t, "{r2} vs {}", t * t);
            assert!((0.0..=HEIGHT).contains(&row[1]));
        }
    }

    #[test]
    fn scaled_roll_stretches_last_axis() {
        let base = generate_swiss_roll(10, 0.0, 2).unwrap();
        let scaled = scaled_swiss_roll(10, 0.0, &[1.0, 1.0, 10.0], 2).unwrap();
        for (a, b) in base.iter_rows().zip(scaled.iter_rows()) {
            assert_eq!(a[0], b[0]);
            assert_eq!(a[1], b[1]);
            assert_eq!(10.0 * a[2], b[2]);
        }
    }
}
