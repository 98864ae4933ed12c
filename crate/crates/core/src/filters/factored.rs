//! Square-root filter recursions.
//!
//! These never form a covariance matrix.  A factor of `P` — SVD factors
//! `(Q, d_sqrt)` or a lower-triangular `L` — is carried across steps, and
//! every covariance recursion is expressed as a factorization of a wide
//! pre-array whose outer product equals the conventional result.  Squaring
//! the factor is thereby avoided, which roughly doubles the number of
//! significant digits that survive ill-conditioning.
//!
//! Both backends consume identical pre-arrays; they differ only in how the
//! wide array is compressed back to a square factor (reduced SVD versus QR
//! triangularization) and in how the gain is applied (pseudo-inverse through
//! the SVD factors versus two triangular solves).
//!
//! Innovation directions whose spectrum entry falls below `ε` times the
//! dominant one are truncated out of the gain solve.  That only happens
//! once the innovation conditioning exceeds roughly `ε⁻²` — the most a
//! carried factor can resolve — and it means the filter simply does not
//! update along a direction that is pure roundoff, so these forms degrade
//! smoothly instead of aborting.

use nalgebra::{DMatrix, DVector};

use crate::cubature::statistics;
use crate::linalg::{self, CholeskyFactor, SvdFactors};
use crate::sde::Scheme;

use super::{
    pre_array_innovation, pre_array_posterior, pre_array_time_update_em05,
    pre_array_time_update_it15, propagate_nodes, DivergenceReason, FilterContext,
    StepDiagnostics,
};

/// The time-update pre-array for one substep, shared by both backends.
fn time_update_pre_array(
    ctx: &FilterContext,
    scheme: Scheme,
    t: f64,
    mean_pre: &DVector<f64>,
    dt: f64,
    x_centered: &DMatrix<f64>,
) -> DMatrix<f64> {
    match scheme {
        Scheme::ItoTaylor15 => {
            let lf = ctx.model.drift_noise_jacobian(t, mean_pre);
            pre_array_time_update_it15(x_centered, &ctx.g, &lf, dt)
        }
        Scheme::EulerMaruyama05 => {
            pre_array_time_update_em05(x_centered, &ctx.em_block, dt)
        }
    }
}

pub(super) fn time_update_svd(
    ctx: &FilterContext,
    scheme: Scheme,
    t_start: f64,
    dt: f64,
    substeps: usize,
    mean: &mut DVector<f64>,
    factors: &mut SvdFactors,
) -> Result<(), DivergenceReason> {
    for m in 0..substeps {
        let t = t_start + m as f64 * dt;
        let sqrt = factors.square_root();
        let points = ctx.nodes.translate(&sqrt, mean);
        let propagated = propagate_nodes(ctx.model, scheme, t, dt, &points)?;
        let stats = statistics(&propagated);
        let pre = time_update_pre_array(ctx, scheme, t, mean, dt, &stats.centered);
        *factors = linalg::reduced_svd(&pre)?;
        *mean = stats.mean;
    }
    Ok(())
}

pub(super) fn time_update_chol(
    ctx: &FilterContext,
    scheme: Scheme,
    t_start: f64,
    dt: f64,
    substeps: usize,
    mean: &mut DVector<f64>,
    chol: &mut CholeskyFactor,
) -> Result<(), DivergenceReason> {
    for m in 0..substeps {
        let t = t_start + m as f64 * dt;
        let points = ctx.nodes.translate(&chol.l, mean);
        let propagated = propagate_nodes(ctx.model, scheme, t, dt, &points)?;
        let stats = statistics(&propagated);
        let pre = time_update_pre_array(ctx, scheme, t, mean, dt, &stats.centered);
        *chol = linalg::triangularize(&pre)?;
        *mean = stats.mean;
    }
    Ok(())
}

/// Centered measurement-node statistics shared by both measurement updates.
struct MeasurementNodes {
    x_centered: DMatrix<f64>,
    z_centered: DMatrix<f64>,
    z_mean: DVector<f64>,
    p_xz: DMatrix<f64>,
}

fn measurement_nodes(
    ctx: &FilterContext,
    step: usize,
    sqrt: &DMatrix<f64>,
    mean: &DVector<f64>,
) -> MeasurementNodes {
    let points = ctx.nodes.translate(sqrt, mean);
    let stats_x = statistics(&points);
    let m = ctx.model.measurement_dim();
    let mut z_points = DMatrix::zeros(m, points.ncols());
    for j in 0..points.ncols() {
        let xj = points.column(j).into_owned();
        z_points.set_column(j, &ctx.model.measurement(step, &xj));
    }
    let stats_z = statistics(&z_points);
    let p_xz = &stats_x.centered * stats_z.centered.transpose();
    MeasurementNodes {
        x_centered: stats_x.centered,
        z_centered: stats_z.centered,
        z_mean: stats_z.mean,
        p_xz,
    }
}

pub(super) fn measurement_update_svd(
    ctx: &FilterContext,
    step: usize,
    z: &DVector<f64>,
    mean: &mut DVector<f64>,
    factors: &mut SvdFactors,
) -> Result<StepDiagnostics, DivergenceReason> {
    let sqrt = factors.square_root();
    let nodes = measurement_nodes(ctx, step, &sqrt, mean);
    let r_sqrt = ctx.r_sqrt(step)?;

    let innov_pre = pre_array_innovation(&nodes.z_centered, &r_sqrt);
    let re_factors = linalg::reduced_svd(&innov_pre)?;
    let condition = linalg::condition_number(&re_factors);

    let gain = linalg::apply_inverse_via_svd(&re_factors, &nodes.p_xz)?;

    let innovation = z - &nodes.z_mean;
    *mean += &gain * &innovation;
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(DivergenceReason::NonFiniteEstimate);
    }

    let post_pre =
        pre_array_posterior(&nodes.x_centered, &gain, &nodes.z_centered, &r_sqrt);
    *factors = linalg::reduced_svd(&post_pre)?;

    Ok(StepDiagnostics {
        step,
        innovation,
        innovation_condition: condition,
        gain,
    })
}

pub(super) fn measurement_update_chol(
    ctx: &FilterContext,
    step: usize,
    z: &DVector<f64>,
    mean: &mut DVector<f64>,
    chol: &mut CholeskyFactor,
) -> Result<StepDiagnostics, DivergenceReason> {
    let nodes = measurement_nodes(ctx, step, &chol.l, mean);
    let r_sqrt = ctx.r_sqrt(step)?;

    let innov_pre = pre_array_innovation(&nodes.z_centered, &r_sqrt);
    let re_chol = linalg::triangularize(&innov_pre)?;
    let condition = triangular_condition(&re_chol.l);

    // K = P_xz·(L·Lᵀ)⁻¹ through two triangular solves; no matrix is ever
    // inverted or squared, and unresolved pivots are truncated.
    let gain_t = linalg::triangular_pseudo_solve(&re_chol.l, &nodes.p_xz.transpose())?;
    let gain = gain_t.transpose();

    let innovation = z - &nodes.z_mean;
    *mean += &gain * &innovation;
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(DivergenceReason::NonFiniteEstimate);
    }

    let post_pre =
        pre_array_posterior(&nodes.x_centered, &gain, &nodes.z_centered, &r_sqrt);
    *chol = linalg::triangularize(&post_pre)?;

    Ok(StepDiagnostics {
        step,
        innovation,
        innovation_condition: condition,
        gain,
    })
}

/// Condition number of `L·Lᵀ` from the singular values of `L`.
fn triangular_condition(l: &DMatrix<f64>) -> f64 {
    let Some(svd) = l.clone().try_svd(false, false, f64::EPSILON, 0) else {
        return f64::INFINITY;
    };
    let max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let min = svd.singular_values.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        (max / min).powi(2)
    }
}
