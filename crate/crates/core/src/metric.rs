//! The learned Mahalanobis metric.
//!
//! The metric is stored as a factor `L` with `M = LᵀL`, so every state this
//! module hands out is positive semi-definite by construction. Updates come
//! in two flavours:
//!
//! * factor updates (`sgd_update_l`, `adam_update_l`) that move `L` and
//!   therefore can never leave the PSD cone;
//! * the direct update `sgd_update_m`, which moves `M` itself and may
//!   produce an indefinite matrix. The result is returned raw together with
//!   its smallest eigenvalue; [`DirectStep::into_state`] clamps negative
//!   eigenvalues to zero before the metric is used for distances again.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{AlleError, Result};
use crate::reconstruction::ResidualSet;

/// Eigenvalues below this are reported as a PSD violation of a direct step.
pub const DIRECT_STEP_WARN_EIGENVALUE: f64 = -1e-8;

const CHOLESKY_SYMMETRY_TOL: f64 = 1e-8;
const CHOLESKY_NEGATIVE_TOL: f64 = 1e-8;
const CHOLESKY_JITTER_BELOW: f64 = 1e-12;
const CHOLESKY_JITTER_SCALE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerMethod {
    Sgd,
    Adam,
}

/// Which quantity gradient descent moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricMode {
    #[serde(rename = "factorL")]
    FactorL,
    #[serde(rename = "directM")]
    DirectM,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub method: OptimizerMethod,
    pub learning_rate: f64,
    /// Coefficient of the `+λL` term added after every factor step.
    pub regularization: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub mode: MetricMode,
    /// Clamp the learning rate below the descent bound each epoch.
    pub enforce_eta_bound: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            method: OptimizerMethod::Sgd,
            learning_rate: 1e-3,
            regularization: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            mode: MetricMode::FactorL,
            enforce_eta_bound: true,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(AlleError::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return Err(AlleError::invalid(format!(
                "regularization must be non-negative, got {}",
                self.regularization
            )));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(AlleError::invalid(format!("{name} must lie in (0, 1), got {beta}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(AlleError::invalid(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.method == OptimizerMethod::Adam && self.mode == MetricMode::DirectM {
            return Err(AlleError::invalid("Adam updates require factorL mode"));
        }
        Ok(())
    }
}

/// The metric factor `L` plus optimizer bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricState {
    factor: DMatrix<f64>,
    adam_m: Option<DMatrix<f64>>,
    adam_v: Option<DMatrix<f64>>,
    step: u64,
}

impl MetricState {
    /// `L = I`, i.e. the Euclidean metric.
    pub fn identity(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(AlleError::invalid("metric dimension must be at least 1"));
        }
        Ok(Self::from_factor_unchecked(DMatrix::identity(dim, dim)))
    }

    /// `L_ij ~ N(0, sigma²)` i.i.d.
    pub fn random(dim: usize, sigma: f64, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(AlleError::invalid("metric dimension must be at least 1"));
        }
        let normal = Normal::new(0.0, sigma)
            .ok()
            .filter(|_| sigma > 0.0)
            .ok_or_else(|| AlleError::invalid(format!("sigma must be positive, got {sigma}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Row-major fill so the draw order matches how the matrix is printed.
        let factor = DMatrix::from_row_iterator(dim, dim, (0..dim * dim).map(|_| rng.sample(normal)));
        Ok(Self::from_factor_unchecked(factor))
    }

    pub fn from_factor(factor: DMatrix<f64>) -> Result<Self> {
        if !factor.is_square() || factor.nrows() == 0 {
            return Err(AlleError::invalid(format!(
                "metric factor must be square and non-empty, got {}x{}",
                factor.nrows(),
                factor.ncols()
            )));
        }
        if factor.iter().any(|v| !v.is_finite()) {
            return Err(AlleError::NonFinite("metric factor"));
        }
        Ok(Self::from_factor_unchecked(factor))
    }

    fn from_factor_unchecked(factor: DMatrix<f64>) -> Self {
        MetricState {
            factor,
            adam_m: None,
            adam_v: None,
            step: 0,
        }
    }

    /// Enters factor form from a user-supplied PSD metric via Cholesky:
    /// `M = CCᵀ`, so `L = Cᵀ`.
    pub fn from_metric(metric: &DMatrix<f64>) -> Result<Self> {
        let lower = cholesky_factor(metric)?;
        Ok(Self::from_factor_unchecked(lower.transpose()))
    }

    /// Projects a symmetric (possibly indefinite) matrix onto the PSD cone by
    /// clamping negative eigenvalues to zero, then factors it as
    /// `L = diag(√λ) Vᵀ`.
    pub fn from_metric_clamped(metric: &DMatrix<f64>) -> Result<Self> {
        if !metric.is_square() || metric.nrows() == 0 {
            return Err(AlleError::invalid("metric must be square and non-empty"));
        }
        if metric.iter().any(|v| !v.is_finite()) {
            return Err(AlleError::NonFinite("metric"));
        }
        let sym = symmetrize(metric);
        let eig = SymmetricEigen::new(sym);
        let dim = metric.nrows();
        let mut factor = eig.eigenvectors.transpose();
        for k in 0..dim {
            let scale = eig.eigenvalues[k].max(0.0).sqrt();
            factor.row_mut(k).scale_mut(scale);
        }
        Ok(Self::from_factor_unchecked(factor))
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// `M = LᵀL`.
    pub fn metric(&self) -> DMatrix<f64> {
        self.factor.tr_mul(&self.factor)
    }

    /// Number of Adam steps taken.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn adam_moments(&self) -> Option<(&DMatrix<f64>, &DMatrix<f64>)> {
        self.adam_m.as_ref().zip(self.adam_v.as_ref())
    }

    /// `L v`.
    pub fn transform(&self, v: &[f64]) -> DVector<f64> {
        let dim = self.dim();
        let mut out = DVector::zeros(dim);
        for r in 0..dim {
            let mut acc = 0.0;
            for c in 0..dim {
                acc += self.factor[(r, c)] * v[c];
            }
            out[r] = acc;
        }
        out
    }

    /// `vᵀ M v = ‖L v‖²`.
    pub fn squared_norm(&self, v: &[f64]) -> f64 {
        self.transform(v).norm_squared()
    }

    /// Smallest eigenvalue of `M`.
    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.metric())
    }

    fn check_finite(self, what: &'static str) -> Result<Self> {
        if self.factor.iter().any(|v| !v.is_finite()) {
            return Err(AlleError::NonFinite(what));
        }
        Ok(self)
    }

    /// Writes `L` as a headerless D×D CSV.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        use std::fmt::Write;
        let path = path.as_ref();
        let mut out = String::new();
        for r in 0..self.dim() {
            let row: Vec<String> = (0..self.dim()).map(|c| format!("{}", self.factor[(r, c)])).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        std::fs::write(path, out).map_err(|e| AlleError::io(path, e))
    }

    /// Reads a factor written by [`MetricState::write_csv`].
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = crate::data::load_csv(path, false, None)?;
        if data.rows() != data.dim() {
            return Err(AlleError::format(
                path,
                format!("metric factor must be square, got {}x{}", data.rows(), data.dim()),
            ));
        }
        Self::from_factor(DMatrix::from_row_slice(data.rows(), data.dim(), data.values()))
    }
}

/// `d_M(x, y) = ‖L(x − y)‖`.
pub fn mahalanobis_distance(x: &[f64], y: &[f64], state: &MetricState) -> Result<f64> {
    let dim = state.dim();
    for v in [x, y] {
        if v.len() != dim {
            return Err(AlleError::DimensionMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
    }
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    Ok(state.squared_norm(&diff).sqrt())
}

/// `∂E/∂M = Σ rᵢ rᵢᵀ`, which is also the Hessian of `E` seen as a function
/// of the step size.
pub fn residual_gradient_m(residuals: &ResidualSet) -> DMatrix<f64> {
    residuals.scatter()
}

/// `∂E/∂L = 2 L Σ rᵢ rᵢᵀ`.
pub fn gradient_l(state: &MetricState, residuals: &ResidualSet) -> Result<DMatrix<f64>> {
    check_residual_dim(state, residuals)?;
    Ok(&state.factor * residuals.scatter() * 2.0)
}

/// Outcome of a direct update of `M`; the matrix may be indefinite.
#[derive(Debug, Clone)]
pub struct DirectStep {
    pub metric: DMatrix<f64>,
    pub min_eigenvalue: f64,
}

impl DirectStep {
    /// Set when the raw result has an eigenvalue below
    /// [`DIRECT_STEP_WARN_EIGENVALUE`].
    pub fn psd_warning(&self) -> bool {
        self.min_eigenvalue < DIRECT_STEP_WARN_EIGENVALUE
    }

    /// PSD-repaired state ready for distance computations.
    pub fn into_state(self) -> Result<MetricState> {
        MetricState::from_metric_clamped(&self.metric)
    }
}

/// `M ← M − η Σ rᵢ rᵢᵀ`.
pub fn sgd_update_m(state: &MetricState, residuals: &ResidualSet, eta: f64) -> Result<DirectStep> {
    check_residual_dim(state, residuals)?;
    check_eta(eta)?;
    let metric = state.metric() - residuals.scatter() * eta;
    if metric.iter().any(|v| !v.is_finite()) {
        return Err(AlleError::NonFinite("direct metric update"));
    }
    let min_eigenvalue = min_eigenvalue(&metric);
    Ok(DirectStep {
        metric,
        min_eigenvalue,
    })
}

/// `L ← L − 2η L Σ rᵢ rᵢᵀ + λ L`.
pub fn sgd_update_l(
    state: &MetricState,
    residuals: &ResidualSet,
    eta: f64,
    lambda: f64,
) -> Result<MetricState> {
    check_eta(eta)?;
    let grad = gradient_l(state, residuals)?;
    let factor = &state.factor - grad * eta + &state.factor * lambda;
    MetricState {
        factor,
        adam_m: state.adam_m.clone(),
        adam_v: state.adam_v.clone(),
        step: state.step,
    }
    .check_finite("factor update")
}

/// One bias-corrected Adam step on `L` followed by the `+λL` term.
pub fn adam_update_l(
    state: &MetricState,
    gradient: &DMatrix<f64>,
    config: &OptimizerConfig,
) -> Result<MetricState> {
    let dim = state.dim();
    if gradient.shape() != (dim, dim) {
        return Err(AlleError::DimensionMismatch {
            expected: dim * dim,
            actual: gradient.len(),
        });
    }
    let step = state.step + 1;
    let (b1, b2) = (config.beta1, config.beta2);
    let m = state
        .adam_m
        .clone()
        .unwrap_or_else(|| DMatrix::zeros(dim, dim))
        * b1
        + gradient * (1.0 - b1);
    let v = state
        .adam_v
        .clone()
        .unwrap_or_else(|| DMatrix::zeros(dim, dim))
        * b2
        + gradient.component_mul(gradient) * (1.0 - b2);
    let m_corr = 1.0 - b1.powi(step as i32);
    let v_corr = 1.0 - b2.powi(step as i32);

    let mut factor = state.factor.clone();
    for ((l, &mi), &vi) in factor.iter_mut().zip(m.iter()).zip(v.iter()) {
        let m_hat = mi / m_corr;
        let v_hat = vi / v_corr;
        *l -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
    }
    if config.regularization > 0.0 {
        factor += &factor * config.regularization;
    }
    MetricState {
        factor,
        adam_m: Some(m),
        adam_v: Some(v),
        step,
    }
    .check_finite("Adam update")
}

/// Step-size bound `2 / λ_max(Σ rᵢ rᵢᵀ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRateBound {
    Bounded(f64),
    /// All residuals are zero, so any step size is safe.
    Unbounded,
}

impl LearningRateBound {
    pub fn value(self) -> Option<f64> {
        match self {
            LearningRateBound::Bounded(b) => Some(b),
            LearningRateBound::Unbounded => None,
        }
    }

    pub fn is_exceeded_by(self, eta: f64) -> bool {
        matches!(self, LearningRateBound::Bounded(b) if eta > b)
    }

    pub fn scaled(self, factor: f64) -> Self {
        match self {
            LearningRateBound::Bounded(b) => LearningRateBound::Bounded(b * factor),
            LearningRateBound::Unbounded => LearningRateBound::Unbounded,
        }
    }
}

pub fn learning_rate_bound(residuals: &ResidualSet) -> LearningRateBound {
    let hessian = residuals.scatter();
    let lambda_max = SymmetricEigen::new(hessian).eigenvalues.max();
    if lambda_max > 0.0 {
        LearningRateBound::Bounded(2.0 / lambda_max)
    } else {
        LearningRateBound::Unbounded
    }
}

/// Lower-triangular `C` with `CCᵀ = M` for symmetric PSD `M`.
///
/// Matrices on the PSD boundary (smallest eigenvalue in `[-1e-8, 1e-12]`)
/// receive a diagonal shift of `1e-10·trace(M)/D` plus whatever is needed to
/// lift the smallest eigenvalue to zero.
pub fn cholesky_factor(metric: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !metric.is_square() || metric.nrows() == 0 {
        return Err(AlleError::invalid("matrix must be square and non-empty"));
    }
    if metric.iter().any(|v| !v.is_finite()) {
        return Err(AlleError::NonFinite("matrix to factor"));
    }
    let dim = metric.nrows();
    let scale = metric.amax().max(1.0);
    let asym = (metric - metric.transpose()).amax();
    if asym > CHOLESKY_SYMMETRY_TOL * scale {
        return Err(AlleError::invalid(format!(
            "matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let sym = symmetrize(metric);
    let min_eig = min_eigenvalue(&sym);
    if min_eig < -CHOLESKY_NEGATIVE_TOL {
        return Err(AlleError::Indefinite {
            min_eigenvalue: min_eig,
        });
    }
    let mut target = sym;
    if min_eig <= CHOLESKY_JITTER_BELOW {
        let jitter = CHOLESKY_JITTER_SCALE * target.trace().abs() / dim as f64;
        let shift = jitter.max(f64::MIN_POSITIVE) + (-min_eig).max(0.0);
        for k in 0..dim {
            target[(k, k)] += shift;
        }
    }
    nalgebra::Cholesky::new(target)
        .map(|c| c.l())
        .ok_or(AlleError::Indefinite {
            min_eigenvalue: min_eig,
        })
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(AlleError::invalid(format!("learning rate must be positive, got {eta}")))
    }
}

fn check_residual_dim(state: &MetricState, residuals: &ResidualSet) -> Result<()> {
    if residuals.dim() != state.dim() {
        return Err(AlleError::DimensionMismatch {
            expected: state.dim(),
            actual: residuals.dim(),
        });
    }
    Ok(())
}
