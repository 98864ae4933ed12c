//! Discretization schemes for the process SDE and truth-trajectory
//! simulation.
//!
//! Each sampling interval of length `Δ` is subdivided into `M` equal
//! substeps of length `δ = Δ/M`.  The Euler-Maruyama scheme (weak order 0.5
//! in general, 1.0 for additive noise) steps
//!
//! ```text
//! x ← x + δ·f(t, x) + √δ·G·u,          u ~ N(0, I)
//! ```
//!
//! while the order-1.5 Itô-Taylor scheme adds the second-order drift term
//! and a correlated noise pair:
//!
//! ```text
//! x ← x + δ·f + δ²/2·a + G·w₁ + Lf·w₂
//! ```
//!
//! with `a` the drift correction, `Lf` the drift's directional derivatives
//! along the diffusion columns, and `(w₁, w₂)` jointly Gaussian with
//! `E[w₁w₁ᵀ] = δ·I`, `E[w₁w₂ᵀ] = δ²/2·I`, `E[w₂w₂ᵀ] = δ³/3·I`.

use crate::model::{discretized_drift, ModelError, StateSpaceModel};
use crate::linalg::{self, LinalgError};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised during simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdeError {
    /// The simulated state left the finite range within the given sampling
    /// step.
    #[error("numerical divergence at sampling step {step}")]
    NumericalDivergence { step: usize },
    /// A model quantity could not be evaluated or factored.
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<LinalgError> for SdeError {
    fn from(e: LinalgError) -> Self {
        SdeError::Model(ModelError::Linalg(e))
    }
}

/// Which SDE discretization drives the moment propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Euler-Maruyama, weak order 0.5.
    #[serde(rename = "em-0.5")]
    EulerMaruyama05,
    /// Itô-Taylor, weak order 1.5; requires time-invariant diffusion.
    #[serde(rename = "it-1.5")]
    ItoTaylor15,
}

impl Scheme {
    /// Short label used in reports and CSV output.
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::EulerMaruyama05 => "em-0.5",
            Scheme::ItoTaylor15 => "it-1.5",
        }
    }

    /// Inverse of [`label`](Self::label).
    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "em-0.5" => Some(Scheme::EulerMaruyama05),
            "it-1.5" => Some(Scheme::ItoTaylor15),
            _ => None,
        }
    }
}

/// Uniform subdivision of a sampling interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubdivisionGrid {
    /// Sampling period `Δ` between consecutive measurements.
    pub sampling_period: f64,
    /// Number of substeps `M` per sampling interval.
    pub substeps: usize,
}

impl SubdivisionGrid {
    /// Creates a grid, validating `Δ > 0` and `M ≥ 1`.
    pub fn new(sampling_period: f64, substeps: usize) -> Self {
        assert!(
            sampling_period > 0.0 && sampling_period.is_finite(),
            "sampling period must be positive"
        );
        assert!(substeps >= 1, "at least one substep is required");
        SubdivisionGrid { sampling_period, substeps }
    }

    /// Substep length `δ = Δ/M`.
    pub fn substep(&self) -> f64 {
        self.sampling_period / self.substeps as f64
    }
}

/// The correlated Gaussian pair consumed by one order-1.5 step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePair {
    /// First increment, covariance `δ·I`.
    pub w1: DVector<f64>,
    /// Second increment, covariance `δ³/3·I`, correlated with `w1`.
    pub w2: DVector<f64>,
}

impl NoisePair {
    /// Builds the pair from two independent standard-normal vectors:
    /// `w₁ = √δ·u₁`, `w₂ = δ^{3/2}/2·(u₁ + u₂/√3)`.
    pub fn from_standard_normals(u1: &DVector<f64>, u2: &DVector<f64>, dt: f64) -> Self {
        assert_eq!(u1.len(), u2.len());
        let w1 = dt.sqrt() * u1;
        let w2 = (0.5 * dt.powf(1.5)) * (u1 + u2 / 3.0_f64.sqrt());
        NoisePair { w1, w2 }
    }
}

fn standard_normal_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| StandardNormal.sample(rng))
}

/// Draws one correlated noise pair for a substep of length `dt`.
pub fn sample_noise_pair<R: Rng + ?Sized>(rng: &mut R, dim: usize, dt: f64) -> NoisePair {
    let u1 = standard_normal_vector(rng, dim);
    let u2 = standard_normal_vector(rng, dim);
    NoisePair::from_standard_normals(&u1, &u2, dt)
}

/// A simulated state path.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Time stamps, starting at the initial time.
    pub times: Vec<f64>,
    /// One state per time stamp.
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    /// Number of recorded states (initial state included).
    pub fn len(&self) -> usize {
        self.states.len()
    }

    /// True when no states are recorded.
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

fn step_once<R: Rng + ?Sized>(
    scheme: Scheme,
    model: &dyn StateSpaceModel,
    g: &DMatrix<f64>,
    t: f64,
    x: &DVector<f64>,
    dt: f64,
    rng: &mut R,
) -> Result<DVector<f64>, ModelError> {
    let q_dim = g.ncols();
    match scheme {
        Scheme::EulerMaruyama05 => {
            let u = standard_normal_vector(rng, q_dim);
            Ok(x + dt * model.drift(t, x) + dt.sqrt() * (g * u))
        }
        Scheme::ItoTaylor15 => {
            let fd = discretized_drift(model, t, x, dt)?;
            let lf = model.drift_noise_jacobian(t, x);
            let noise = sample_noise_pair(rng, q_dim, dt);
            Ok(fd + g * noise.w1 + lf * noise.w2)
        }
    }
}

fn simulate_impl<R: Rng + ?Sized>(
    model: &dyn StateSpaceModel,
    scheme: Scheme,
    grid: &SubdivisionGrid,
    t0: f64,
    x0: &DVector<f64>,
    steps: usize,
    rng: &mut R,
    dense: bool,
) -> Result<Trajectory, SdeError> {
    let g = model.effective_diffusion()?;
    let dt = grid.substep();
    let mut times = vec![t0];
    let mut states = vec![x0.clone()];
    let mut x = x0.clone();
    for k in 1..=steps {
        let t_base = t0 + (k - 1) as f64 * grid.sampling_period;
        for m in 0..grid.substeps {
            let t = t_base + m as f64 * dt;
            x = step_once(scheme, model, &g, t, &x, dt, rng)
                .map_err(|_| SdeError::NumericalDivergence { step: k })?;
            if !x.iter().all(|v| v.is_finite()) {
                return Err(SdeError::NumericalDivergence { step: k });
            }
            if dense && m + 1 < grid.substeps {
                times.push(t + dt);
                states.push(x.clone());
            }
        }
        times.push(t0 + k as f64 * grid.sampling_period);
        states.push(x.clone());
    }
    Ok(Trajectory { times, states })
}

/// Simulates `steps` sampling intervals, recording states at sampling
/// instants only.
pub fn simulate<R: Rng + ?Sized>(
    model: &dyn StateSpaceModel,
    scheme: Scheme,
    grid: &SubdivisionGrid,
    t0: f64,
    x0: &DVector<f64>,
    steps: usize,
    rng: &mut R,
) -> Result<Trajectory, SdeError> {
    simulate_impl(model, scheme, grid, t0, x0, steps, rng, false)
}

/// Like [`simulate`] but records every substep, for plotting and debugging.
/// Consumes the random stream identically to [`simulate`].
pub fn simulate_dense<R: Rng + ?Sized>(
    model: &dyn StateSpaceModel,
    scheme: Scheme,
    grid: &SubdivisionGrid,
    t0: f64,
    x0: &DVector<f64>,
    steps: usize,
    rng: &mut R,
) -> Result<Trajectory, SdeError> {
    simulate_impl(model, scheme, grid, t0, x0, steps, rng, true)
}

/// Draws an initial state from the model's `N(x̄₀, Π₀)` prior.
pub fn sample_initial_state<R: Rng + ?Sized>(
    model: &dyn StateSpaceModel,
    rng: &mut R,
) -> Result<DVector<f64>, SdeError> {
    let p0 = model.initial_covariance();
    let sr = match linalg::cholesky(&p0) {
        Ok(f) => f.l,
        Err(LinalgError::NotPositiveDefinite { .. }) => linalg::svd_symmetric(&p0)?.square_root(),
        Err(e) => return Err(e.into()),
    };
    let u = standard_normal_vector(rng, model.state_dim());
    Ok(model.initial_mean() + sr * u)
}

/// Generates one measurement per sampling instant `t_1 … t_K` of a
/// trajectory recorded at sampling resolution.
pub fn generate_measurements<R: Rng + ?Sized>(
    model: &dyn StateSpaceModel,
    trajectory: &Trajectory,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>, SdeError> {
    let m = model.measurement_dim();
    let noise_sqrt = |r: &DMatrix<f64>| -> Result<DMatrix<f64>, SdeError> {
        match linalg::cholesky(r) {
            Ok(f) => Ok(f.l),
            Err(LinalgError::NotPositiveDefinite { .. }) => {
                Ok(linalg::svd_symmetric(r)?.square_root())
            }
            Err(e) => Err(e.into()),
        }
    };
    let constant_sqrt = if model.measurement_noise_constant() {
        Some(noise_sqrt(&model.measurement_noise(1))?)
    } else {
        None
    };
    let mut out = Vec::with_capacity(trajectory.len().saturating_sub(1));
    for (k, x) in trajectory.states.iter().enumerate().skip(1) {
        let sr = match &constant_sqrt {
            Some(s) => s.clone(),
            None => noise_sqrt(&model.measurement_noise(k))?,
        };
        let u = standard_normal_vector(rng, m);
        out.push(model.measurement(k, x) + sr * u);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    const TOL: f64 = 1e-12;

    struct ScalarOu {
        a: f64,
        gain: DMatrix<f64>,
        noise: DMatrix<f64>,
        sigma: f64,
    }

    impl ScalarOu {
        fn new(a: f64, sigma: f64) -> Self {
            ScalarOu {
                a,
                gain: DMatrix::from_element(1, 1, sigma),
                noise: DMatrix::identity(1, 1),
                sigma,
            }
        }
    }

    impl StateSpaceModel for ScalarOu {
        fn state_dim(&self) -> usize {
            1
        }
        fn measurement_dim(&self) -> usize {
            1
        }
        fn drift(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
            DVector::from_element(1, self.a * x[0])
        }
        fn diffusion_gain(&self) -> &DMatrix<f64> {
            &self.gain
        }
        fn process_noise(&self) -> &DMatrix<f64> {
            &self.noise
        }
        fn measurement(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
            x.clone()
        }
        fn measurement_noise(&self, _k: usize) -> DMatrix<f64> {
            DMatrix::from_element(1, 1, 0.04)
        }
        fn initial_mean(&self) -> DVector<f64> {
            DVector::from_element(1, 1.0)
        }
        fn initial_covariance(&self) -> DMatrix<f64> {
            DMatrix::from_element(1, 1, 0.0)
        }
        fn drift_noise_jacobian(&self, _t: f64, _x: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_element(1, 1, self.a * self.sigma)
        }
        fn drift_correction(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
            DVector::from_element(1, self.a * self.a * x[0])
        }
    }

    #[test]
    fn grid_substep_length() {
        let grid = SubdivisionGrid::new(1.0, 4);
        assert_relative_eq!(grid.substep(), 0.25);
    }

    #[test]
    fn grid_rejects_zero_substeps() {
        assert!(std::panic::catch_unwind(|| SubdivisionGrid::new(1.0, 0)).is_err());
    }

    #[test]
    fn noise_pair_deterministic_scaling() {
        let u1 = DVector::from_element(1, 1.0);
        let u2 = DVector::from_element(1, 0.0);
        let dt = 0.04;
        let pair = NoisePair::from_standard_normals(&u1, &u2, dt);
        assert_relative_eq!(pair.w1[0], 0.2, max_relative = TOL);
        assert_relative_eq!(pair.w2[0], 0.5 * dt.powf(1.5), max_relative = TOL);

        let pair2 = NoisePair::from_standard_normals(&u2, &u1, dt);
        assert_relative_eq!(pair2.w1[0], 0.0);
        assert_relative_eq!(pair2.w2[0], 0.5 * dt.powf(1.5) / 3.0_f64.sqrt(), max_relative = TOL);
    }

    #[test]
    fn noise_pair_sample_moments() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let dt = 0.1;
        let n = 100_000;
        let (mut m11, mut m12, mut m22) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let pair = sample_noise_pair(&mut rng, 1, dt);
            m11 += pair.w1[0] * pair.w1[0];
            m12 += pair.w1[0] * pair.w2[0];
            m22 += pair.w2[0] * pair.w2[0];
        }
        let nf = n as f64;
        let (m11, m12, m22) = (m11 / nf, m12 / nf, m22 / nf);
        // 3-sigma bands from Var(uv) for jointly Gaussian (u, v).
        let se11 = (2.0 * dt * dt / nf).sqrt();
        assert!((m11 - dt).abs() < 3.0 * se11, "E[w1²] = {m11}");
        let exact12 = dt * dt / 2.0;
        let var12 = dt * (dt.powi(3) / 3.0) + exact12 * exact12;
        assert!((m12 - exact12).abs() < 3.0 * (var12 / nf).sqrt(), "E[w1w2] = {m12}");
        let exact22 = dt.powi(3) / 3.0;
        let se22 = (2.0 * exact22 * exact22 / nf).sqrt();
        assert!((m22 - exact22).abs() < 3.0 * se22, "E[w2²] = {m22}");
    }

    #[test]
    fn simulate_keeps_constant_state_without_dynamics() {
        let mut model = ScalarOu::new(0.0, 0.0);
        model.gain = DMatrix::zeros(1, 1);
        let grid = SubdivisionGrid::new(0.5, 8);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let x0 = DVector::from_element(1, 2.5);
        for scheme in [Scheme::EulerMaruyama05, Scheme::ItoTaylor15] {
            let traj = simulate(&model, scheme, &grid, 0.0, &x0, 5, &mut rng).unwrap();
            assert_eq!(traj.len(), 6);
            for s in &traj.states {
                assert_relative_eq!(s[0], 2.5, max_relative = TOL);
            }
            assert_relative_eq!(traj.times[5], 2.5, max_relative = TOL);
        }
    }

    #[test]
    fn simulate_is_deterministic_per_seed() {
        let model = ScalarOu::new(-0.5, 0.3);
        let grid = SubdivisionGrid::new(1.0, 16);
        let x0 = DVector::from_element(1, 1.0);
        let run = || {
            let mut rng = ChaCha12Rng::seed_from_u64(77);
            simulate(&model, Scheme::ItoTaylor15, &grid, 0.0, &x0, 10, &mut rng).unwrap()
        };
        let a = run();
        let b = run();
        for (sa, sb) in a.states.iter().zip(&b.states) {
            assert_eq!(sa[0].to_bits(), sb[0].to_bits());
        }
    }

    #[test]
    fn dense_output_matches_sampled_instants() {
        let model = ScalarOu::new(-0.5, 0.3);
        let grid = SubdivisionGrid::new(1.0, 4);
        let x0 = DVector::from_element(1, 1.0);
        let sampled = {
            let mut rng = ChaCha12Rng::seed_from_u64(5);
            simulate(&model, Scheme::EulerMaruyama05, &grid, 0.0, &x0, 3, &mut rng).unwrap()
        };
        let dense = {
            let mut rng = ChaCha12Rng::seed_from_u64(5);
            simulate_dense(&model, Scheme::EulerMaruyama05, &grid, 0.0, &x0, 3, &mut rng).unwrap()
        };
        assert_eq!(dense.len(), 3 * 4 + 1);
        for k in 0..=3 {
            assert_eq!(sampled.states[k][0].to_bits(), dense.states[4 * k][0].to_bits());
        }
    }

    #[test]
    fn it15_one_step_mean_matches_ou_within_monte_carlo_error() {
        let a = -1.0;
        let sigma = 0.5;
        let delta = 0.1;
        let model = ScalarOu::new(a, sigma);
        let grid = SubdivisionGrid::new(delta, 1);
        let x0 = DVector::from_element(1, 1.0);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let traj = simulate(&model, Scheme::ItoTaylor15, &grid, 0.0, &x0, 1, &mut rng).unwrap();
            sum += traj.states[1][0];
        }
        let mean = sum / n as f64;
        let exact = (a * delta).exp();
        let sd = (sigma * sigma * (1.0 - (2.0 * a * delta).exp()) / (-2.0 * a)).sqrt();
        let band = 3.0 * sd / (n as f64).sqrt() + 1e-4; // MC noise + O(δ³) scheme bias
        assert!((mean - exact).abs() < band, "mean {mean} vs {exact}");
    }

    #[test]
    fn em05_long_run_variance_matches_ou() {
        let a = -1.0;
        let sigma = 0.5;
        let model = ScalarOu::new(a, sigma);
        let grid = SubdivisionGrid::new(1.0, 512);
        let x0 = DVector::from_element(1, 1.0);
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let n = 4_000;
        let mut vals = Vec::with_capacity(n);
        for _ in 0..n {
            let traj = simulate(&model, Scheme::EulerMaruyama05, &grid, 0.0, &x0, 1, &mut rng).unwrap();
            vals.push(traj.states[1][0]);
        }
        let mean: f64 = vals.iter().sum::<f64>() / n as f64;
        let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        let exact = sigma * sigma * (1.0 - (2.0 * a).exp()) / (-2.0 * a);
        let band = 3.0 * exact * (2.0 / n as f64).sqrt() + 2.0 * exact / 512.0;
        assert!((var - exact).abs() < band, "var {var} vs {exact}");
    }

    #[test]
    fn measurements_exact_when_noise_vanishes() {
        struct Noiseless(ScalarOu);
        impl StateSpaceModel for Noiseless {
            fn state_dim(&self) -> usize {
                1
            }
            fn measurement_dim(&self) -> usize {
                1
            }
            fn drift(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
                self.0.drift(t, x)
            }
            fn diffusion_gain(&self) -> &DMatrix<f64> {
                self.0.diffusion_gain()
            }
            fn process_noise(&self) -> &DMatrix<f64> {
                self.0.process_noise()
            }
            fn measurement(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
                2.0 * x
            }
            fn measurement_noise(&self, _k: usize) -> DMatrix<f64> {
                DMatrix::zeros(1, 1)
            }
            fn initial_mean(&self) -> DVector<f64> {
                self.0.initial_mean()
            }
            fn initial_covariance(&self) -> DMatrix<f64> {
                self.0.initial_covariance()
            }
            fn drift_noise_jacobian(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
                self.0.drift_noise_jacobian(t, x)
            }
            fn drift_correction(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
                self.0.drift_correction(t, x)
            }
        }

        let model = Noiseless(ScalarOu::new(-0.3, 0.2));
        let grid = SubdivisionGrid::new(0.5, 4);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let x0 = DVector::from_element(1, 1.0);
        let traj = simulate(&model, Scheme::ItoTaylor15, &grid, 0.0, &x0, 4, &mut rng).unwrap();
        let z = generate_measurements(&model, &traj, &mut rng).unwrap();
        assert_eq!(z.len(), 4);
        for (k, zk) in z.iter().enumerate() {
            assert_relative_eq!(zk[0], 2.0 * traj.states[k + 1][0], max_relative = TOL);
        }
    }

    #[test]
    fn measurement_noise_has_requested_covariance() {
        let model = ScalarOu::new(0.0, 0.0);
        let traj = Trajectory {
            times: (0..=1).map(|k| k as f64).collect(),
            states: vec![DVector::from_element(1, 1.0); 2],
        };
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let n = 100_000;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let z = generate_measurements(&model, &traj, &mut rng).unwrap();
            let resid = z[0][0] - 1.0;
            sum_sq += resid * resid;
        }
        let var = sum_sq / n as f64;
        let se = 0.04 * (2.0 / n as f64).sqrt();
        assert!((var - 0.04).abs() < 3.0 * se, "measurement variance {var}");
    }

    #[test]
    fn initial_state_sampling_honours_prior() {
        struct PriorOnly;
        impl StateSpaceModel for PriorOnly {
            fn state_dim(&self) -> usize {
                2
            }
            fn measurement_dim(&self) -> usize {
                1
            }
            fn drift(&self, _t: f64, _x: &DVector<f64>) -> DVector<f64> {
                DVector::zeros(2)
            }
            fn diffusion_gain(&self) -> &DMatrix<f64> {
                unimplemented!("not needed")
            }
            fn process_noise(&self) -> &DMatrix<f64> {
                unimplemented!("not needed")
            }
            fn measurement(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
                x.rows(0, 1).into_owned()
            }
            fn measurement_noise(&self, _k: usize) -> DMatrix<f64> {
                DMatrix::identity(1, 1)
            }
            fn initial_mean(&self) -> DVector<f64> {
                DVector::from_vec(vec![2.0, -1.0])
            }
            fn initial_covariance(&self) -> DMatrix<f64> {
                DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 0.09])
            }
            fn drift_noise_jacobian(&self, _t: f64, _x: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::zeros(2, 2)
            }
            fn drift_correction(&self, _t: f64, _x: &DVector<f64>) -> DVector<f64> {
                DVector::zeros(2)
            }
        }
        let model = PriorOnly;
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let n = 50_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let x = sample_initial_state(&model, &mut rng).unwrap();
            sum += x[0];
            sum_sq += (x[0] - 2.0) * (x[0] - 2.0);
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64;
        assert!((mean - 2.0).abs() < 3.0 * 0.5 / (n as f64).sqrt());
        assert!((var - 0.25).abs() < 3.0 * 0.25 * (2.0 / n as f64).sqrt());
    }
}
