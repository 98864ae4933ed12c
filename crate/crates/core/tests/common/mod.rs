//! Shared oracles: finite-difference versions of the drift operators and an
//! independently coded dense Kalman filter, written with none of the library's
//! own linear algebra shortcuts so agreement actually means something.

#![allow(dead_code)]

use cubature_kalman::StateSpaceModel;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Uniform draw in `[lo, hi)` straight off the 64-bit stream.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let unit = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    lo + unit * (hi - lo)
}

/// Central-difference Jacobian of the drift, step scaled per component.
pub fn fd_drift_jacobian(
    model: &dyn StateSpaceModel,
    t: f64,
    x: &DVector<f64>,
) -> DMatrix<f64> {
    let n = model.state_dim();
    let mut j = DMatrix::zeros(n, n);
    for col in 0..n {
        let h = 1e-6 * x[col].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[col] += h;
        xm[col] -= h;
        let diff = (model.drift(t, &xp) - model.drift(t, &xm)) / (2.0 * h);
        j.set_column(col, &diff);
    }
    j
}

/// Finite-difference version of the drift's directional derivatives along
/// the effective diffusion columns.
pub fn fd_drift_noise_jacobian(
    model: &dyn StateSpaceModel,
    t: f64,
    x: &DVector<f64>,
) -> DMatrix<f64> {
    fd_drift_jacobian(model, t, x) * model.effective_diffusion().unwrap()
}

/// Finite-difference version of the second-order drift term
/// `∂f/∂t + (∂f/∂x)·f + ½·Σ_{p,r} (GGᵀ)_{pr}·∂²f/∂x_p∂x_r`.
pub fn fd_drift_correction(
    model: &dyn StateSpaceModel,
    t: f64,
    x: &DVector<f64>,
) -> DVector<f64> {
    let n = model.state_dim();
    let ht = 1e-6 * t.abs().max(1.0);
    let time_term = (model.drift(t + ht, x) - model.drift(t - ht, x)) / (2.0 * ht);
    let transport = fd_drift_jacobian(model, t, x) * model.drift(t, x);

    let g = model.effective_diffusion().unwrap();
    let g_outer = &g * g.transpose();
    let mut hessian_term = DVector::zeros(n);
    for p in 0..n {
        let hp = 2e-4 * x[p].abs().max(1.0);
        for r in 0..n {
            let weight = g_outer[(p, r)];
            if weight == 0.0 {
                continue;
            }
            let hr = 2e-4 * x[r].abs().max(1.0);
            let assign = |sp: f64, sr: f64| {
                let mut y = x.clone();
                y[p] += sp * hp;
                y[r] += sr * hr;
                model.drift(t, &y)
            };
            let second = (assign(1.0, 1.0) - assign(1.0, -1.0) - assign(-1.0, 1.0)
                + assign(-1.0, -1.0))
                / (4.0 * hp * hr);
            hessian_term += (0.5 * weight) * second;
        }
    }
    time_term + transport + hessian_term
}

/// One dense Kalman recursion: `substeps` applications of
/// `x ← F·x`, `P ← F·P·Fᵀ + Q` per sampling interval, then the textbook
/// update with a Joseph-form covariance.
pub fn dense_kalman_run(
    f_sub: &DMatrix<f64>,
    q_sub: &DMatrix<f64>,
    substeps: usize,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    x0: &DVector<f64>,
    p0: &DMatrix<f64>,
    measurements: &[DVector<f64>],
) -> Vec<(DVector<f64>, DMatrix<f64>)> {
    let n = x0.len();
    let eye = DMatrix::identity(n, n);
    let mut x = x0.clone();
    let mut p = p0.clone();
    let mut out = Vec::with_capacity(measurements.len());
    for z in measurements {
        for _ in 0..substeps {
            x = f_sub * x;
            p = f_sub * &p * f_sub.transpose() + q_sub;
        }
        let s = h * &p * h.transpose() + r;
        let gain = (&p * h.transpose())
            * s.try_inverse().expect("well-conditioned innovation");
        x += &gain * (z - h * &x);
        let shrink = &eye - &gain * h;
        p = &shrink * &p * shrink.transpose() + &gain * r * gain.transpose();
        out.push((x.clone(), p.clone()));
    }
    out
}

/// Linear-Gaussian test system with damped random dynamics.  The drift
/// operators are exact (the Hessian contraction vanishes), so every filter
/// variant should collapse onto the dense Kalman recursion.
#[derive(Debug, Clone)]
pub struct RandomLinearModel {
    pub a: DMatrix<f64>,
    gain: DMatrix<f64>,
    q: DMatrix<f64>,
    h: DMatrix<f64>,
    r: DMatrix<f64>,
    x0: DVector<f64>,
    p0: DMatrix<f64>,
    g_eff: DMatrix<f64>,
}

impl RandomLinearModel {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> Self {
        let q_dim = (n + 1) / 2;
        let mut a = DMatrix::from_fn(n, n, |_, _| uniform(rng, -0.5, 0.5) / n as f64);
        for i in 0..n {
            a[(i, i)] -= uniform(rng, 0.3, 0.8);
        }
        let gain = DMatrix::from_fn(n, q_dim, |_, _| uniform(rng, -0.6, 0.6));
        let q = DMatrix::from_diagonal(&DVector::from_fn(q_dim, |_, _| {
            uniform(rng, 0.05, 0.3)
        }));
        let h = DMatrix::from_fn(m, n, |_, _| uniform(rng, -1.0, 1.0));
        let r = DMatrix::from_diagonal(&DVector::from_fn(m, |_, _| {
            uniform(rng, 0.04, 0.25)
        }));
        let x0 = DVector::from_fn(n, |_, _| uniform(rng, -1.0, 1.0));
        let p0 = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| {
            uniform(rng, 0.1, 0.5)
        }));
        let q_sqrt = DMatrix::from_diagonal(&q.map_diagonal(f64::sqrt));
        let g_eff = &gain * q_sqrt;
        RandomLinearModel { a, gain, q, h, r, x0, p0, g_eff }
    }

    /// Exact discrete transition of one order-1.5 substep:
    /// `F = I + δA + δ²/2·A²`.
    pub fn transition_it15(&self, dt: f64) -> DMatrix<f64> {
        let n = self.a.nrows();
        DMatrix::identity(n, n) + dt * &self.a + (0.5 * dt * dt) * (&self.a * &self.a)
    }

    /// Exact discrete transition of one order-0.5 substep: `F = I + δA`.
    pub fn transition_em05(&self, dt: f64) -> DMatrix<f64> {
        let n = self.a.nrows();
        DMatrix::identity(n, n) + dt * &self.a
    }

    /// Process-noise covariance added per order-1.5 substep:
    /// `δ·GGᵀ + δ²/2·(G(AG)ᵀ + AG·Gᵀ) + δ³/3·(AG)(AG)ᵀ`.
    pub fn process_cov_it15(&self, dt: f64) -> DMatrix<f64> {
        let g = &self.g_eff;
        let ag = &self.a * g;
        dt * (g * g.transpose())
            + (0.5 * dt * dt) * (g * ag.transpose() + &ag * g.transpose())
            + (dt.powi(3) / 3.0) * (&ag * ag.transpose())
    }

    /// Process-noise covariance added per order-0.5 substep: `δ·GGᵀ`.
    pub fn process_cov_em05(&self, dt: f64) -> DMatrix<f64> {
        dt * (&self.g_eff * self.g_eff.transpose())
    }

    pub fn measurement_matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn measurement_cov(&self) -> &DMatrix<f64> {
        &self.r
    }
}

impl StateSpaceModel for RandomLinearModel {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn measurement_dim(&self) -> usize {
        self.h.nrows()
    }

    fn drift(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x
    }

    fn diffusion_gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    fn process_noise(&self) -> &DMatrix<f64> {
        &self.q
    }

    fn measurement(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.h * x
    }

    fn measurement_noise(&self, _k: usize) -> DMatrix<f64> {
        self.r.clone()
    }

    fn initial_mean(&self) -> DVector<f64> {
        self.x0.clone()
    }

    fn initial_covariance(&self) -> DMatrix<f64> {
        self.p0.clone()
    }

    fn drift_noise_jacobian(&self, _t: f64, _x: &DVector<f64>) -> DMatrix<f64> {
        &self.a * &self.g_eff
    }

    fn drift_correction(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        &self.a * (&self.a * x)
    }
}

/// Max absolute difference between two matrices.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

/// Max absolute difference relative to the larger matrix's largest entry.
pub fn max_rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.abs().max().max(b.abs().max()).max(f64::MIN_POSITIVE);
    max_abs_diff(a, b) / scale
}
