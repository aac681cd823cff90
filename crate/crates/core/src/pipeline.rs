//! The adaptive LLE fit: alternate closed-form reconstruction weights with
//! a gradient step on the metric, then embed with the final weights.
//!
//! Standard LLE is the special case with the identity metric and no epochs.

use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::embedding::{embedding_matrix, solve_embedding, EmbeddingResult, DEFAULT_NULL_TOL};
use crate::error::{AlleError, Result};
use crate::metric::{
    adam_update_l, gradient_l, learning_rate_bound, sgd_update_l, sgd_update_m, LearningRateBound,
    MetricMode, MetricState, OptimizerConfig, OptimizerMethod,
};
use crate::neighbors::{knn, NeighborIndex};
use crate::reconstruction::{compute_residuals, compute_weights, ResidualSet, DEFAULT_GRAM_REG};

/// Fraction of the descent bound the learning rate is clamped to.
pub const ETA_CLAMP_FRACTION: f64 = 0.9;

const EARLY_STOP_REL_CHANGE: f64 = 1e-9;
const EARLY_STOP_PATIENCE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Lle,
    Alle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MetricInit {
    Identity,
    Random { sigma: f64, seed: u64 },
    /// Supplied by the caller through [`fit_alle_with_metric`].
    Provided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecomputeNeighbors {
    /// Neighborhoods fixed before the first epoch.
    Never,
    /// Re-run the search under the current metric at the start of every
    /// epoch and before the final embedding.
    EveryEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub n_components: usize,
    pub n_neighbors: usize,
    pub max_epochs: usize,
    pub optimizer: OptimizerConfig,
    pub metric_init: MetricInit,
    pub recompute_neighbors: RecomputeNeighbors,
    pub gram_reg: f64,
    /// Relative threshold below which eigenvalues of `M_W` count as zero.
    pub null_tol: f64,
    pub seed: u64,
    /// Stop once the relative change of `E` stays below 1e-9 for three
    /// consecutive epochs.
    pub early_stop: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n_components: 2,
            n_neighbors: 10,
            max_epochs: 50,
            optimizer: OptimizerConfig::default(),
            metric_init: MetricInit::Identity,
            recompute_neighbors: RecomputeNeighbors::Never,
            gram_reg: DEFAULT_GRAM_REG,
            null_tol: DEFAULT_NULL_TOL,
            seed: 0,
            early_stop: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate_for(&self, data: &DataMatrix) -> Result<()> {
        let n = data.rows();
        if self.n_components == 0 || self.n_components + 2 > n {
            return Err(AlleError::invalid(format!(
                "n_components must lie in [1, {}] for {n} points, got {}",
                n.saturating_sub(2),
                self.n_components
            )));
        }
        if self.n_neighbors == 0 || self.n_neighbors >= n {
            return Err(AlleError::invalid(format!(
                "n_neighbors must lie in [1, {}], got {}",
                n.saturating_sub(1),
                self.n_neighbors
            )));
        }
        if !(self.gram_reg >= 0.0 && self.gram_reg.is_finite()) {
            return Err(AlleError::invalid(format!("gram_reg must be non-negative, got {}", self.gram_reg)));
        }
        if !(self.null_tol >= 0.0 && self.null_tol < 1.0) {
            return Err(AlleError::invalid(format!("null_tol must lie in [0, 1), got {}", self.null_tol)));
        }
        if let MetricInit::Random { sigma, .. } = self.metric_init {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(AlleError::invalid(format!("sigma must be positive, got {sigma}")));
            }
        }
        self.optimizer.validate()
    }

    fn initial_metric(&self, dim: usize) -> Result<MetricState> {
        match self.metric_init {
            MetricInit::Identity => MetricState::identity(dim),
            MetricInit::Random { sigma, seed } => MetricState::random(dim, sigma, seed),
            MetricInit::Provided => Err(AlleError::invalid(
                "metric_init = provided needs an explicit starting metric",
            )),
        }
    }
}

/// Largest learning rate for which one metric step cannot increase `E` at
/// fixed weights.
///
/// A direct step moves `M` linearly and is bounded by `2/λ_max(Σ rrᵀ)`.
/// A factor step maps `L ↦ L(I − 2ηH)`, which is non-expansive in `E` only
/// while `|1 − 2ηλ| ≤ 1` for every eigenvalue of `H`, i.e. half that bound.
pub fn descent_bound(residuals: &ResidualSet, mode: MetricMode) -> LearningRateBound {
    let bound = learning_rate_bound(residuals);
    match mode {
        MetricMode::DirectM => bound,
        MetricMode::FactorL => bound.scaled(0.5),
    }
}

/// Runs the selected algorithm.
pub fn fit(data: &DataMatrix, algorithm: Algorithm, config: &PipelineConfig) -> Result<EmbeddingResult> {
    match algorithm {
        Algorithm::Lle => fit_lle(data, config),
        Algorithm::Alle => fit_alle(data, config),
    }
}

/// Standard LLE: Euclidean neighbors, closed-form weights, spectral embedding.
pub fn fit_lle(data: &DataMatrix, config: &PipelineConfig) -> Result<EmbeddingResult> {
    config.validate_for(data)?;
    let state = MetricState::identity(data.dim())?;
    let neighbors = knn(data, config.n_neighbors, &state)?;
    finish(data, config, &neighbors, state, Vec::new(), false, 0)
}

/// Adaptive LLE: learn the metric for up to `max_epochs` epochs, then
/// embed with weights computed under the learned metric.
pub fn fit_alle(data: &DataMatrix, config: &PipelineConfig) -> Result<EmbeddingResult> {
    config.validate_for(data)?;
    let state = config.initial_metric(data.dim())?;
    fit_alle_with_metric(data, config, state)
}

/// [`fit_alle`] starting from a given metric instead of `config.metric_init`.
pub fn fit_alle_with_metric(
    data: &DataMatrix,
    config: &PipelineConfig,
    initial: MetricState,
) -> Result<EmbeddingResult> {
    config.validate_for(data)?;
    if initial.dim() != data.dim() {
        return Err(AlleError::DimensionMismatch {
            expected: data.dim(),
            actual: initial.dim(),
        });
    }
    let opt = &config.optimizer;
    let mut state = initial;
    let mut neighbors = knn(data, config.n_neighbors, &state)?;
    let mut trace: Vec<f64> = Vec::with_capacity(config.max_epochs);
    let mut eta_guard = false;
    let mut psd_repairs = 0;
    let mut stagnant = 0;

    for epoch in 0..config.max_epochs {
        if epoch > 0 && config.recompute_neighbors == RecomputeNeighbors::EveryEpoch {
            neighbors = knn(data, config.n_neighbors, &state)?;
        }
        let weights = compute_weights(data, &neighbors, &state, config.gram_reg)?;
        let residuals = compute_residuals(data, &weights)?;

        let bound = descent_bound(&residuals, opt.mode);
        let mut eta = opt.learning_rate;
        if bound.is_exceeded_by(eta) {
            eta_guard = true;
            if opt.enforce_eta_bound {
                if let Some(b) = bound.value() {
                    eta = ETA_CLAMP_FRACTION * b;
                }
            }
        }

        state = match (opt.mode, opt.method) {
            (MetricMode::DirectM, _) => {
                let step = sgd_update_m(&state, &residuals, eta)?;
                if step.psd_warning() {
                    psd_repairs += 1;
                }
                step.into_state()?
            }
            (MetricMode::FactorL, OptimizerMethod::Sgd) => {
                sgd_update_l(&state, &residuals, eta, opt.regularization)?
            }
            (MetricMode::FactorL, OptimizerMethod::Adam) => {
                let grad = gradient_l(&state, &residuals)?;
                let cfg = OptimizerConfig {
                    learning_rate: eta,
                    ..opt.clone()
                };
                adam_update_l(&state, &grad, &cfg)?
            }
        };

        let error = residuals.error_under(&state);
        if !error.is_finite() {
            return Err(AlleError::NonFinite("reconstruction error"));
        }
        if let Some(&prev) = trace.last() {
            let rel = (error - prev).abs() / prev.max(1e-12);
            stagnant = if rel < EARLY_STOP_REL_CHANGE { stagnant + 1 } else { 0 };
        }
        trace.push(error);
        if config.early_stop && stagnant >= EARLY_STOP_PATIENCE {
            break;
        }
    }

    if config.recompute_neighbors == RecomputeNeighbors::EveryEpoch && !trace.is_empty() {
        neighbors = knn(data, config.n_neighbors, &state)?;
    }
    let epochs = trace.len();
    finish(data, config, &neighbors, state, trace, eta_guard, psd_repairs).map(|mut r| {
        r.epochs_run = epochs;
        r
    })
}

fn finish(
    data: &DataMatrix,
    config: &PipelineConfig,
    neighbors: &NeighborIndex,
    state: MetricState,
    error_trace: Vec<f64>,
    eta_guard: bool,
    psd_repairs: usize,
) -> Result<EmbeddingResult> {
    let weights = compute_weights(data, neighbors, &state, config.gram_reg)?;
    let cost = embedding_matrix(&weights);
    let embedding = solve_embedding(&cost, config.n_components, config.null_tol)?;
    Ok(EmbeddingResult {
        embedding,
        epochs_run: error_trace.len(),
        error_trace,
        eta_guard,
        psd_repairs,
        metric: state,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_roll() -> DataMatrix {
        crate::data::generate_swiss_roll(150, 0.05, 3).unwrap()
    }

    #[test]
    fn zero_epochs_matches_lle() {
        let x = small_roll();
        let cfg = PipelineConfig {
            max_epochs: 0,
            ..Default::default()
        };
        let a = fit_alle(&x, &cfg).unwrap();
        let b = fit_lle(&x, &cfg).unwrap();
        assert_eq!(a.embedding, b.embedding);
        assert!(a.error_trace.is_empty());
    }

    #[test]
    fn trace_has_one_entry_per_epoch() {
        let x = small_roll();
        let cfg = PipelineConfig {
            max_epochs: 7,
            early_stop: false,
            ..Default::default()
        };
        let r = fit_alle(&x, &cfg).unwrap();
        assert_eq!(r.error_trace.len(), 7);
        assert_eq!(r.epochs_run, 7);
        assert!(r.metric.min_eigenvalue() >= -1e-10);
    }

    #[test]
    fn deterministic() {
        let x = small_roll();
        let cfg = PipelineConfig {
            max_epochs: 5,
            metric_init: MetricInit::Random { sigma: 0.5, seed: 4 },
            ..Default::default()
        };
        let a = fit_alle(&x, &cfg).unwrap();
        let b = fit_alle(&x, &cfg).unwrap();
        assert_eq!(a.embedding, b.embedding);
        assert_eq!(a.error_trace, b.error_trace);
    }

    #[test]
    fn direct_mode_and_adam_and_recompute_run() {
        let x = small_roll();
        for optimizer in [
            OptimizerConfig {
                mode: MetricMode::DirectM,
                learning_rate: 10.0,
                ..Default::default()
            },
            OptimizerConfig {
                method: OptimizerMethod::Adam,
                learning_rate: 1e-2,
                enforce_eta_bound: false,
                ..Default::default()
            },
        ] {
            let cfg = PipelineConfig {
                max_epochs: 4,
                optimizer,
                recompute_neighbors: RecomputeNeighbors::EveryEpoch,
                ..Default::default()
            };
            let r = fit_alle(&x, &cfg).unwrap();
            assert_eq!(r.error_trace.len(), 4);
            assert!(r.metric.min_eigenvalue() >= -1e-10);
        }
    }

    #[test]
    fn oversized_learning_rate_is_flagged_and_clamped() {
        let x = small_roll();
        let cfg = PipelineConfig {
            max_epochs: 3,
            optimizer: OptimizerConfig {
                learning_rate: 1e6,
                ..Default::default()
            },
            ..Default::default()
        };
        let r = fit_alle(&x, &cfg).unwrap();
        assert!(r.eta_guard);
        assert!(r.error_trace.iter().all(|e| e.is_finite()));
    }

    #[test]
    fn config_validation() {
        let x = small_roll();
        let bad = [
            PipelineConfig { n_components: 0, ..Default::default() },
            PipelineConfig { n_components: 149, ..Default::default() },
            PipelineConfig { n_neighbors: 0, ..Default::default() },
            PipelineConfig { n_neighbors: 150, ..Default::default() },
            PipelineConfig { gram_reg: -1.0, ..Default::default() },
            PipelineConfig {
                metric_init: MetricInit::Random { sigma: 0.0, seed: 0 },
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(fit_alle(&x, &cfg).is_err(), "{cfg:?}");
        }
    }
}
