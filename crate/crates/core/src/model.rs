//! Continuous-discrete state-space models.
//!
//! The process is the Itô SDE `dx = f(t, x)·dt + G̃·dβ` with `β` Brownian
//! motion of intensity `Q`, observed at sampling instants through
//! `z_k = h(k, x(t_k)) + v_k`, `v_k ~ N(0, R_k)`.  Implementations provide
//! the drift analytically together with the two derived operators the
//! order-1.5 discretization needs; a finite-difference oracle in the test
//! suite keeps the analytic forms honest.

use crate::linalg::{self, LinalgError};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors produced while evaluating model quantities.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    /// A drift evaluation left the finite floating-point range.
    #[error("numerical divergence during drift discretization")]
    NumericalDivergence,
    /// A noise matrix could not be factored.
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A continuous-discrete model: SDE dynamics plus a discrete measurement
/// channel.
///
/// `drift_noise_jacobian` and `drift_correction` are the first- and
/// second-order drift operators of the weak Itô-Taylor expansion.  Both are
/// defined with respect to the *effective* diffusion
/// `G = G̃·S_Q` (any fixed square root `Q = S_Q·S_Qᵀ`), and implementations
/// must stay consistent with the factor [`Self::effective_diffusion`]
/// returns.
pub trait StateSpaceModel: Send + Sync {
    /// State dimension `n`.
    fn state_dim(&self) -> usize;

    /// Measurement dimension `m`.
    fn measurement_dim(&self) -> usize;

    /// Drift `f(t, x)`.
    fn drift(&self, t: f64, x: &DVector<f64>) -> DVector<f64>;

    /// Constant diffusion gain `G̃` (`n × q`).
    fn diffusion_gain(&self) -> &DMatrix<f64>;

    /// Process-noise intensity `Q` (`q × q`).
    fn process_noise(&self) -> &DMatrix<f64>;

    /// Measurement function `h(k, x)` for sample index `k ≥ 1`.
    fn measurement(&self, k: usize, x: &DVector<f64>) -> DVector<f64>;

    /// Measurement-noise covariance `R_k` for sample index `k ≥ 1`.
    fn measurement_noise(&self, k: usize) -> DMatrix<f64>;

    /// Whether `R_k` is the same matrix for every `k`, allowing callers to
    /// factor it once.
    fn measurement_noise_constant(&self) -> bool {
        true
    }

    /// Mean of the initial state distribution.
    fn initial_mean(&self) -> DVector<f64>;

    /// Covariance of the initial state distribution.
    fn initial_covariance(&self) -> DMatrix<f64>;

    /// Matrix of drift directional derivatives along the effective diffusion
    /// columns: entry `(i, j)` is `Σ_p G_{pj}·∂fᵢ/∂x_p`.
    fn drift_noise_jacobian(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64>;

    /// Second-order drift term of the Itô-Taylor expansion:
    /// `∂f/∂t + (∂f/∂x)·f + ½·Σ_{p,r} (G·Gᵀ)_{pr}·∂²f/∂x_p∂x_r`.
    fn drift_correction(&self, t: f64, x: &DVector<f64>) -> DVector<f64>;

    /// Effective diffusion `G = G̃·S_Q`.
    ///
    /// Uses the Cholesky factor of `Q` when it exists and falls back to the
    /// SVD square root for singular `Q`.
    fn effective_diffusion(&self) -> Result<DMatrix<f64>, ModelError> {
        let q = self.process_noise();
        let s = match linalg::cholesky(q) {
            Ok(f) => f.l,
            Err(LinalgError::NotPositiveDefinite { .. }) => linalg::svd_symmetric(q)?.square_root(),
            Err(e) => return Err(e.into()),
        };
        Ok(self.diffusion_gain() * s)
    }
}

/// Deterministic part of one order-1.5 step:
/// `x + δ·f(t, x) + δ²/2·drift_correction(t, x)`.
pub fn discretized_drift(
    model: &dyn StateSpaceModel,
    t: f64,
    x: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>, ModelError> {
    let f = model.drift(t, x);
    let corr = model.drift_correction(t, x);
    let out = x + dt * f + (0.5 * dt * dt) * corr;
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(ModelError::NumericalDivergence)
    }
}

/// Parameters of the coordinated-turn radar scenario.
///
/// Defaults reproduce the standard seven-state air-traffic benchmark:
/// near-constant-speed turning in the horizontal plane, almost-constant
/// altitude, and a slowly wandering turn rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoordinatedTurnParams {
    /// Velocity noise intensity `σ₁` on all three axes.
    pub sigma1: f64,
    /// Turn-rate noise intensity `σ₂`.
    pub sigma2: f64,
    /// Initial turn rate in degrees per second (radians internally).
    pub turn_rate_deg: f64,
    /// Initial `[x, ẋ, y, ẏ, z, ż]` mean in metres and metres per second.
    pub initial_mean: [f64; 6],
    /// Initial covariance `Π₀ = scale·I₇`.
    pub initial_cov_scale: f64,
}

impl Default for CoordinatedTurnParams {
    fn default() -> Self {
        CoordinatedTurnParams {
            sigma1: 0.2_f64.sqrt(),
            sigma2: 7.0e-3,
            turn_rate_deg: 3.0,
            initial_mean: [1000.0, 0.0, 2650.0, 150.0, 200.0, 0.0],
            initial_cov_scale: 0.01,
        }
    }
}

/// Seven-state coordinated-turn model with a rank-2 sum measurement whose
/// conditioning is controlled by `delta_ill`.
///
/// The state is `[x, ẋ, y, ẏ, z, ż, ω]`.  Both measurement rows sum all
/// seven components; the second row additionally weights the turn rate by
/// `1 + delta_ill`, and the measurement noise is `delta_ill²·I₂`.  As
/// `delta_ill → 0` the rows collapse onto each other and the measurement
/// noise vanishes, so the update becomes arbitrarily ill-conditioned while
/// staying rank 2 in exact arithmetic.
#[derive(Debug, Clone)]
pub struct CoordinatedTurnModel {
    delta_ill: f64,
    sigma2: f64,
    initial_mean: DVector<f64>,
    initial_covariance: DMatrix<f64>,
    diffusion_gain: DMatrix<f64>,
    process_noise: DMatrix<f64>,
    h: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl CoordinatedTurnModel {
    /// Builds the scenario with the default parameters and the given
    /// measurement conditioning parameter.
    pub fn new(delta_ill: f64) -> Self {
        Self::with_params(&CoordinatedTurnParams::default(), delta_ill)
    }

    /// Builds the scenario from explicit parameters.
    ///
    /// # Panics
    /// Panics if `delta_ill` is not strictly positive and finite.
    pub fn with_params(params: &CoordinatedTurnParams, delta_ill: f64) -> Self {
        assert!(
            delta_ill > 0.0 && delta_ill.is_finite(),
            "delta_ill must be positive and finite"
        );
        let omega0 = params.turn_rate_deg.to_radians();
        let mut initial_mean = DVector::zeros(7);
        for (i, &v) in params.initial_mean.iter().enumerate() {
            initial_mean[i] = v;
        }
        initial_mean[6] = omega0;

        let mut gain = DMatrix::zeros(7, 7);
        for &i in &[1, 3, 5] {
            gain[(i, i)] = params.sigma1;
        }
        gain[(6, 6)] = params.sigma2;

        let mut h = DMatrix::from_element(2, 7, 1.0);
        h[(1, 6)] = 1.0 + delta_ill;

        CoordinatedTurnModel {
            delta_ill,
            sigma2: params.sigma2,
            initial_mean,
            initial_covariance: DMatrix::identity(7, 7) * params.initial_cov_scale,
            diffusion_gain: gain,
            process_noise: DMatrix::identity(7, 7),
            h,
            r: DMatrix::identity(2, 2) * delta_ill * delta_ill,
        }
    }

    /// The measurement conditioning parameter.
    pub fn delta_ill(&self) -> f64 {
        self.delta_ill
    }

    /// The measurement matrix `H`.
    pub fn measurement_matrix(&self) -> &DMatrix<f64> {
        &self.h
    }
}

impl StateSpaceModel for CoordinatedTurnModel {
    fn state_dim(&self) -> usize {
        7
    }

    fn measurement_dim(&self) -> usize {
        2
    }

    fn drift(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        let omega = x[6];
        DVector::from_vec(vec![
            x[1],
            -omega * x[3],
            x[3],
            omega * x[1],
            x[5],
            0.0,
            0.0,
        ])
    }

    fn diffusion_gain(&self) -> &DMatrix<f64> {
        &self.diffusion_gain
    }

    fn process_noise(&self) -> &DMatrix<f64> {
        &self.process_noise
    }

    fn measurement(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.h * x
    }

    fn measurement_noise(&self, _k: usize) -> DMatrix<f64> {
        self.r.clone()
    }

    fn initial_mean(&self) -> DVector<f64> {
        self.initial_mean.clone()
    }

    fn initial_covariance(&self) -> DMatrix<f64> {
        self.initial_covariance.clone()
    }

    fn drift_noise_jacobian(&self, _t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        // Q = I, so the effective diffusion equals the (diagonal) gain and
        // the product J_f·G keeps one diffusion weight per column.
        let omega = x[6];
        let s1 = self.diffusion_gain[(1, 1)];
        let s2 = self.sigma2;
        let mut out = DMatrix::zeros(7, 7);
        out[(0, 1)] = s1;
        out[(1, 3)] = -omega * s1;
        out[(1, 6)] = -x[3] * s2;
        out[(2, 3)] = s1;
        out[(3, 1)] = omega * s1;
        out[(3, 6)] = x[1] * s2;
        out[(4, 5)] = s1;
        out
    }

    fn drift_correction(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        // (∂f/∂x)·f in closed form.  The second-derivative contraction
        // vanishes for this model: G·Gᵀ is diagonal while the only nonzero
        // second derivatives of the drift are the ω-velocity cross terms.
        let omega = x[6];
        DVector::from_vec(vec![
            -omega * x[3],
            -omega * omega * x[1],
            omega * x[1],
            -omega * omega * x[3],
            0.0,
            0.0,
            0.0,
        ])
    }

    fn effective_diffusion(&self) -> Result<DMatrix<f64>, ModelError> {
        Ok(self.diffusion_gain.clone())
    }
}
