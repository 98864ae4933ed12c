//! Cubature Kalman filters for continuous-discrete models.
//!
//! All filters share the same skeleton: between measurements the state
//! distribution is pushed through the process dynamics on a subdivision grid
//! (the time update), then conditioned on the arriving measurement (the
//! measurement update).  They differ along two independent axes:
//!
//! * **Scheme** — how the drift is discretized over a substep, either
//!   [`Scheme::EulerMaruyama05`] or [`Scheme::ItoTaylor15`].
//! * **Form** — how the covariance is represented and recursed, one of the
//!   [`CovarianceForm`] variants.  The conventional forms carry the full
//!   matrix and refactor it whenever cubature nodes are needed; the factored
//!   forms carry a square-root factor end to end and update it by
//!   orthogonal transformations of pre-arrays, which is what keeps them
//!   alive when the measurement noise drives the innovation covariance
//!   toward singularity.
//!
//! A filter run never panics on numerical breakdown.  [`run_filter`] returns
//! a [`FilterRun`] whose `failure` field records where and why the recursion
//! stopped, so a benchmark can count divergences instead of crashing.

mod conventional;
mod factored;

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cubature::CubatureSet;
use crate::linalg::{self, CholeskyFactor, LinalgError, SvdFactors};
use crate::model::{self, ModelError, StateSpaceModel};
use crate::sde::{Scheme, SubdivisionGrid};

/// Covariance bookkeeping styles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CovarianceForm {
    /// Full covariance matrix; cubature nodes drawn from its symmetric SVD
    /// square root.
    #[serde(rename = "svd-node")]
    SvdNode,
    /// Full covariance matrix; cubature nodes drawn from its Cholesky
    /// factor.  Fails as soon as rounding pushes the matrix off the
    /// positive-definite cone.
    #[serde(rename = "chol-node")]
    CholeskyNode,
    /// SVD factors `(Q, d_sqrt)` propagated through pre-arrays; the full
    /// matrix is never formed.
    #[serde(rename = "svd-sr")]
    SvdFactored,
    /// Lower-triangular factor propagated through the same pre-arrays via
    /// QR triangularization.
    #[serde(rename = "chol-sr")]
    CholeskySquareRoot,
}

impl CovarianceForm {
    /// Short label used in reports and CSV output.
    pub fn label(&self) -> &'static str {
        match self {
            CovarianceForm::SvdNode => "svd-node",
            CovarianceForm::CholeskyNode => "chol-node",
            CovarianceForm::SvdFactored => "svd-sr",
            CovarianceForm::CholeskySquareRoot => "chol-sr",
        }
    }

    /// Inverse of [`label`](Self::label).
    pub fn from_label(label: &str) -> Option<Self> {
        CovarianceForm::ALL.into_iter().find(|f| f.label() == label)
    }

    /// Whether this form carries a square-root factor instead of the full
    /// covariance matrix.
    pub fn is_factored(&self) -> bool {
        matches!(
            self,
            CovarianceForm::SvdFactored | CovarianceForm::CholeskySquareRoot
        )
    }

    pub const ALL: [CovarianceForm; 4] = [
        CovarianceForm::SvdNode,
        CovarianceForm::CholeskyNode,
        CovarianceForm::SvdFactored,
        CovarianceForm::CholeskySquareRoot,
    ];
}

/// One filter variant: discretization scheme, covariance form, and the
/// number of substeps the sampling interval is divided into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FilterSpec {
    pub scheme: Scheme,
    pub form: CovarianceForm,
    pub substeps: usize,
}

impl FilterSpec {
    pub fn new(scheme: Scheme, form: CovarianceForm, substeps: usize) -> Self {
        FilterSpec {
            scheme,
            form,
            substeps,
        }
    }

    /// Label like `it-1.5/svd-sr/64`.
    pub fn label(&self) -> String {
        format!(
            "{}/{}/{}",
            self.scheme.label(),
            self.form.label(),
            self.substeps
        )
    }
}

/// Covariance as stored by a particular filter form.
#[derive(Debug, Clone)]
pub enum CovarianceRepr {
    /// Full symmetric matrix.
    Full(DMatrix<f64>),
    /// SVD factors `Q diag(d_sqrt²) Qᵀ`.
    Factors(SvdFactors),
    /// Lower-triangular factor `L Lᵀ`.
    Triangular(CholeskyFactor),
}

impl CovarianceRepr {
    /// The full covariance matrix, reconstructed if necessary.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        match self {
            CovarianceRepr::Full(p) => p.clone(),
            CovarianceRepr::Factors(f) => f.reconstruct(),
            CovarianceRepr::Triangular(c) => c.reconstruct(),
        }
    }

    /// Singular-value square roots of the covariance, sorted descending.
    ///
    /// For the factored forms these are read straight off the stored factor;
    /// for the full form the matrix is symmetrized and any negative
    /// eigenvalues produced by rounding are clamped to zero first.
    pub fn spectrum_sqrt(&self) -> DVector<f64> {
        match self {
            CovarianceRepr::Full(p) => match linalg::svd_symmetric(p) {
                Ok(f) => f.d_sqrt,
                Err(_) => {
                    let sym = (p + p.transpose()) * 0.5;
                    let eig = sym.symmetric_eigenvalues();
                    let mut vals: Vec<f64> =
                        eig.iter().map(|&l| l.max(0.0).sqrt()).collect();
                    vals.sort_by(|a, b| b.total_cmp(a));
                    DVector::from_vec(vals)
                }
            },
            CovarianceRepr::Factors(f) => f.d_sqrt.clone(),
            CovarianceRepr::Triangular(c) => {
                let svd = c.l.clone().svd(false, false);
                let mut vals: Vec<f64> = svd.singular_values.iter().copied().collect();
                vals.sort_by(|a, b| b.total_cmp(a));
                DVector::from_vec(vals)
            }
        }
    }
}

/// Filter estimate at one sampling instant.
#[derive(Debug, Clone)]
pub struct FilterState {
    pub t: f64,
    pub mean: DVector<f64>,
    pub cov: CovarianceRepr,
}

/// Why a filter run stopped early.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DivergenceReason {
    /// A covariance or innovation factorization failed.
    #[error(transparent)]
    Factorization(#[from] LinalgError),
    /// The innovation covariance condition number exceeded `1/ε`, so its
    /// inverse carries no significant digits.
    #[error("innovation covariance condition number exceeds 1/eps")]
    IllConditionedInnovation,
    /// The state estimate left the finite range.
    #[error("state estimate is not finite")]
    NonFiniteEstimate,
    /// The drift evaluation overflowed during propagation.
    #[error("drift propagation produced non-finite values")]
    DriftOverflow,
}

impl From<ModelError> for DivergenceReason {
    fn from(err: ModelError) -> Self {
        match err {
            ModelError::NumericalDivergence => DivergenceReason::DriftOverflow,
            ModelError::Linalg(e) => DivergenceReason::Factorization(e),
        }
    }
}

/// A filter divergence: the 1-based measurement step that could not be
/// completed, and why.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("filter diverged at step {step}: {reason}")]
pub struct FilterDivergence {
    pub step: usize,
    pub reason: DivergenceReason,
}

/// Diagnostics recorded at each completed measurement update.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    /// 1-based measurement index.
    pub step: usize,
    /// Measurement residual `z − ẑ`.
    pub innovation: DVector<f64>,
    /// Condition number of the innovation covariance.
    pub innovation_condition: f64,
    /// Kalman gain applied at this step.
    pub gain: DMatrix<f64>,
}

/// Output of a filter run: the estimate after each completed step, per-step
/// diagnostics, and the divergence record if the run stopped early.
#[derive(Debug, Clone)]
pub struct FilterRun {
    pub spec: FilterSpec,
    /// `states[0]` is the prior at `t0`; `states[k]` the posterior after
    /// measurement `k`.
    pub states: Vec<FilterState>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub failure: Option<FilterDivergence>,
}

impl FilterRun {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

/// Precomputed per-run quantities shared by every step.
pub(crate) struct FilterContext<'a> {
    pub model: &'a dyn StateSpaceModel,
    pub nodes: CubatureSet,
    /// Effective diffusion `G` (gain times a square root of the process
    /// noise covariance).
    pub g: DMatrix<f64>,
    /// `δ·G·Gᵀ` per unit `δ` — i.e. `G·Gᵀ`.
    pub g_outer: DMatrix<f64>,
    /// Additive process noise of the 0.5-order recursion per unit `δ`:
    /// gain·Q·gainᵀ.
    pub em_noise: DMatrix<f64>,
    /// Square-root noise block of the 0.5-order pre-array: gain·Q_q·D_q^½.
    pub em_block: DMatrix<f64>,
    /// Measurement noise covariance, cached when constant.
    r_full: Option<DMatrix<f64>>,
    /// Square root of the measurement noise covariance (SVD-based), cached
    /// when constant.
    r_block: Option<DMatrix<f64>>,
}

impl<'a> FilterContext<'a> {
    fn new(model: &'a dyn StateSpaceModel) -> Result<Self, DivergenceReason> {
        let n = model.state_dim();
        let g = model.effective_diffusion()?;
        let g_outer = &g * g.transpose();
        let gain = model.diffusion_gain();
        let q = model.process_noise();
        let em_noise = gain * q * gain.transpose();
        let q_factors = linalg::svd_symmetric(q)?;
        let em_block = gain * q_factors.square_root();
        let (r_full, r_block) = if model.measurement_noise_constant() {
            let r = model.measurement_noise(1);
            let block = linalg::svd_symmetric(&r)?.square_root();
            (Some(r), Some(block))
        } else {
            (None, None)
        };
        Ok(FilterContext {
            model,
            nodes: CubatureSet::new(n),
            g,
            g_outer,
            em_noise,
            em_block,
            r_full,
            r_block,
        })
    }

    fn r_matrix(&self, k: usize) -> DMatrix<f64> {
        match &self.r_full {
            Some(r) => r.clone(),
            None => self.model.measurement_noise(k),
        }
    }

    fn r_sqrt(&self, k: usize) -> Result<DMatrix<f64>, DivergenceReason> {
        match &self.r_block {
            Some(b) => Ok(b.clone()),
            None => {
                let r = self.model.measurement_noise(k);
                Ok(linalg::svd_symmetric(&r)?.square_root())
            }
        }
    }
}

/// Pushes each cubature node through one substep of the chosen scheme.
///
/// The 1.5-order scheme advances nodes through the second-order discretized
/// drift; the 0.5-order scheme through plain Euler.  Stochastic terms do not
/// appear here — the filters account for them through the covariance
/// recursion, not by perturbing nodes.
pub(crate) fn propagate_nodes(
    model: &dyn StateSpaceModel,
    scheme: Scheme,
    t: f64,
    dt: f64,
    points: &DMatrix<f64>,
) -> Result<DMatrix<f64>, DivergenceReason> {
    let mut out = DMatrix::zeros(points.nrows(), points.ncols());
    for j in 0..points.ncols() {
        let x = points.column(j).into_owned();
        let next = match scheme {
            Scheme::ItoTaylor15 => model::discretized_drift(model, t, &x, dt)?,
            Scheme::EulerMaruyama05 => {
                let next = &x + model.drift(t, &x) * dt;
                if next.iter().any(|v| !v.is_finite()) {
                    return Err(DivergenceReason::DriftOverflow);
                }
                next
            }
        };
        out.set_column(j, &next);
    }
    Ok(out)
}

/// Stacks matrices side by side into one wide pre-array.
fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks[0].nrows();
    debug_assert!(blocks.iter().all(|b| b.nrows() == rows));
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        out.view_mut((0, offset), (rows, b.ncols())).copy_from(*b);
        offset += b.ncols();
    }
    out
}

/// Time-update pre-array of the 1.5-order square-root filters:
/// `[X, √δ·(G + δ/2·Lf), √(δ³/12)·Lf]`, whose outer product is the predicted
/// covariance of the conventional 1.5-order recursion.
///
/// `x_centered` holds the centered propagated nodes scaled so that
/// `X·Xᵀ` is their sample covariance; `lf` is the drift–noise Jacobian at
/// the pre-step mean.
pub fn pre_array_time_update_it15(
    x_centered: &DMatrix<f64>,
    g: &DMatrix<f64>,
    lf: &DMatrix<f64>,
    dt: f64,
) -> DMatrix<f64> {
    let mid = (g + lf * (dt / 2.0)) * dt.sqrt();
    let tail = lf * (dt.powi(3) / 12.0).sqrt();
    hstack(&[x_centered, &mid, &tail])
}

/// Time-update pre-array of the 0.5-order square-root filters:
/// `[X, √δ·N]` where `N` is a square root of the diffusion contribution
/// gain·Q·gainᵀ.
pub fn pre_array_time_update_em05(
    x_centered: &DMatrix<f64>,
    noise_block: &DMatrix<f64>,
    dt: f64,
) -> DMatrix<f64> {
    let tail = noise_block * dt.sqrt();
    hstack(&[x_centered, &tail])
}

/// Innovation pre-array `[Z, R^½]`: its outer product is the innovation
/// covariance `Z·Zᵀ + R`.
pub fn pre_array_innovation(
    z_centered: &DMatrix<f64>,
    r_sqrt: &DMatrix<f64>,
) -> DMatrix<f64> {
    hstack(&[z_centered, r_sqrt])
}

/// Posterior pre-array `[X − K·Z, K·R^½]`: its outer product is the updated
/// covariance `P⁻ − K·Rₑ·Kᵀ` written in Joseph-like square-root form.
pub fn pre_array_posterior(
    x_centered: &DMatrix<f64>,
    gain: &DMatrix<f64>,
    z_centered: &DMatrix<f64>,
    r_sqrt: &DMatrix<f64>,
) -> DMatrix<f64> {
    let head = x_centered - gain * z_centered;
    let tail = gain * r_sqrt;
    hstack(&[&head, &tail])
}

/// Runs one filter over a measurement sequence.
///
/// `measurements[k-1]` is the observation at `t0 + k·sampling_period`.  The
/// returned run contains the prior state, one posterior state per completed
/// step, and — if the recursion broke down — the step and reason in
/// `failure`.  Breakdown is data, not a panic or `Err`: ill-conditioned
/// scenarios are precisely where some of these filters are expected to die.
pub fn run_filter(
    model: &dyn StateSpaceModel,
    spec: &FilterSpec,
    sampling_period: f64,
    t0: f64,
    measurements: &[DVector<f64>],
) -> FilterRun {
    let n = model.state_dim();
    let m = model.measurement_dim();
    for z in measurements {
        assert_eq!(z.len(), m, "measurement dimension mismatch");
    }
    let grid = SubdivisionGrid::new(sampling_period, spec.substeps);
    let dt = grid.substep();

    let mut run = FilterRun {
        spec: *spec,
        states: Vec::with_capacity(measurements.len() + 1),
        diagnostics: Vec::with_capacity(measurements.len()),
        failure: None,
    };

    let ctx = match FilterContext::new(model) {
        Ok(ctx) => ctx,
        Err(reason) => {
            run.failure = Some(FilterDivergence { step: 0, reason });
            return run;
        }
    };

    let mut mean = model.initial_mean();
    assert_eq!(mean.len(), n, "initial mean dimension mismatch");
    let p0 = model.initial_covariance();
    let mut cov = match initial_repr(spec.form, &p0) {
        Ok(cov) => cov,
        Err(reason) => {
            run.failure = Some(FilterDivergence { step: 0, reason });
            return run;
        }
    };
    run.states.push(FilterState {
        t: t0,
        mean: mean.clone(),
        cov: cov.clone(),
    });

    for (idx, z) in measurements.iter().enumerate() {
        let step = idx + 1;
        let t_start = t0 + idx as f64 * sampling_period;
        let result = advance_one_step(
            &ctx, spec, t_start, dt, z, step, &mut mean, &mut cov,
        );
        match result {
            Ok(diag) => {
                run.states.push(FilterState {
                    t: t0 + step as f64 * sampling_period,
                    mean: mean.clone(),
                    cov: cov.clone(),
                });
                run.diagnostics.push(diag);
            }
            Err(reason) => {
                run.failure = Some(FilterDivergence { step, reason });
                break;
            }
        }
    }
    run
}

fn initial_repr(
    form: CovarianceForm,
    p0: &DMatrix<f64>,
) -> Result<CovarianceRepr, DivergenceReason> {
    match form {
        CovarianceForm::SvdNode | CovarianceForm::CholeskyNode => {
            Ok(CovarianceRepr::Full(p0.clone()))
        }
        CovarianceForm::SvdFactored => {
            Ok(CovarianceRepr::Factors(linalg::svd_symmetric(p0)?))
        }
        CovarianceForm::CholeskySquareRoot => match linalg::cholesky(p0) {
            Ok(c) => Ok(CovarianceRepr::Triangular(c)),
            // A merely semi-definite prior still has a triangular square
            // root; reach it through the SVD square root.
            Err(_) => {
                let sqrt = linalg::svd_symmetric(p0)?.square_root();
                Ok(CovarianceRepr::Triangular(linalg::triangularize(&sqrt)?))
            }
        },
    }
}

fn advance_one_step(
    ctx: &FilterContext,
    spec: &FilterSpec,
    t_start: f64,
    dt: f64,
    z: &DVector<f64>,
    step: usize,
    mean: &mut DVector<f64>,
    cov: &mut CovarianceRepr,
) -> Result<StepDiagnostics, DivergenceReason> {
    match cov {
        CovarianceRepr::Full(p) => {
            let chol_nodes = spec.form == CovarianceForm::CholeskyNode;
            conventional::time_update(
                ctx, spec.scheme, chol_nodes, t_start, dt, spec.substeps, mean, p,
            )?;
            conventional::measurement_update(ctx, chol_nodes, step, z, mean, p)
        }
        CovarianceRepr::Factors(factors) => {
            factored::time_update_svd(
                ctx, spec.scheme, t_start, dt, spec.substeps, mean, factors,
            )?;
            factored::measurement_update_svd(ctx, step, z, mean, factors)
        }
        CovarianceRepr::Triangular(chol) => {
            factored::time_update_chol(
                ctx, spec.scheme, t_start, dt, spec.substeps, mean, chol,
            )?;
            factored::measurement_update_chol(ctx, step, z, mean, chol)
        }
    }
}

/// Writes a run as CSV: time, state estimate, covariance spectrum square
/// roots, innovation condition number, and a failure flag.
///
/// Completed steps carry `failed = 0`; if the run diverged, one final row
/// carries the failing step's time, `NaN` placeholders, and `failed = 1`.
pub fn write_run_csv<W: Write>(run: &FilterRun, out: &mut W) -> io::Result<()> {
    let n = match run.states.first() {
        Some(s) => s.mean.len(),
        None => 0,
    };
    write!(out, "t")?;
    for i in 1..=n {
        write!(out, ",x{i}")?;
    }
    for i in 1..=n {
        write!(out, ",d{i}")?;
    }
    writeln!(out, ",condition,failed")?;
    for (idx, state) in run.states.iter().enumerate() {
        write!(out, "{:.6}", state.t)?;
        for v in state.mean.iter() {
            write!(out, ",{v:.9e}")?;
        }
        for d in state.cov.spectrum_sqrt().iter() {
            write!(out, ",{d:.9e}")?;
        }
        // states[0] is the prior: no measurement has been processed yet.
        if idx == 0 {
            writeln!(out, ",,0")?;
        } else {
            let cond = run.diagnostics[idx - 1].innovation_condition;
            writeln!(out, ",{cond:.9e},0")?;
        }
    }
    if let Some(failure) = &run.failure {
        let t0 = run.states.first().map_or(0.0, |s| s.t);
        let period = if run.states.len() >= 2 {
            run.states[1].t - run.states[0].t
        } else {
            0.0
        };
        let t_fail = t0 + failure.step as f64 * period;
        write!(out, "{t_fail:.6}")?;
        for _ in 0..2 * n {
            write!(out, ",NaN")?;
        }
        writeln!(out, ",NaN,1")?;
    }
    Ok(())
}
