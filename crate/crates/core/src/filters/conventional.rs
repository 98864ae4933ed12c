//! Full-covariance filter recursions.
//!
//! These carry `P` explicitly and factor it from scratch whenever cubature
//! nodes are needed — with a symmetric SVD for the `SvdNode` form, or a
//! Cholesky decomposition for the `CholeskyNode` form.  The measurement
//! update inverts the innovation covariance directly, which is the step that
//! breaks first as the measurement noise shrinks.

use nalgebra::{DMatrix, DVector};

use crate::cubature::statistics;
use crate::linalg::{self, LinalgError};
use crate::sde::Scheme;

use super::{propagate_nodes, DivergenceReason, FilterContext, StepDiagnostics};

/// Square root of `p` as selected by the form, for drawing cubature nodes.
fn node_square_root(
    p: &DMatrix<f64>,
    use_cholesky: bool,
) -> Result<DMatrix<f64>, LinalgError> {
    if use_cholesky {
        Ok(linalg::cholesky(p)?.l)
    } else {
        Ok(linalg::svd_symmetric(p)?.square_root())
    }
}

/// Advances `(mean, p)` across one sampling interval in `substeps` cubature
/// prediction steps.
pub(super) fn time_update(
    ctx: &FilterContext,
    scheme: Scheme,
    use_cholesky: bool,
    t_start: f64,
    dt: f64,
    substeps: usize,
    mean: &mut DVector<f64>,
    p: &mut DMatrix<f64>,
) -> Result<(), DivergenceReason> {
    for m in 0..substeps {
        let t = t_start + m as f64 * dt;
        let sqrt = node_square_root(p, use_cholesky)?;
        let points = ctx.nodes.translate(&sqrt, mean);
        let propagated = propagate_nodes(ctx.model, scheme, t, dt, &points)?;
        let stats = statistics(&propagated);
        let x = &stats.centered;
        let mut next_p = x * x.transpose();
        match scheme {
            Scheme::EulerMaruyama05 => {
                next_p += &ctx.em_noise * dt;
            }
            Scheme::ItoTaylor15 => {
                // The drift–noise Jacobian is taken at the pre-step mean,
                // consistent with the pre-array form of the same recursion.
                let lf = ctx.model.drift_noise_jacobian(t, mean);
                let cross = &ctx.g * lf.transpose();
                next_p += &ctx.g_outer * dt;
                next_p += (&cross + cross.transpose()) * (dt * dt / 2.0);
                next_p += &lf * lf.transpose() * (dt.powi(3) / 3.0);
            }
        }
        *p = next_p;
        *mean = stats.mean;
    }
    Ok(())
}

/// Conditions `(mean, p)` on measurement `z`, regenerating cubature nodes
/// from the predicted covariance.
pub(super) fn measurement_update(
    ctx: &FilterContext,
    use_cholesky: bool,
    step: usize,
    z: &DVector<f64>,
    mean: &mut DVector<f64>,
    p: &mut DMatrix<f64>,
) -> Result<StepDiagnostics, DivergenceReason> {
    let sqrt = node_square_root(p, use_cholesky)?;
    let points = ctx.nodes.translate(&sqrt, mean);
    let stats_x = statistics(&points);

    let m = ctx.model.measurement_dim();
    let mut z_points = DMatrix::zeros(m, points.ncols());
    for j in 0..points.ncols() {
        let xj = points.column(j).into_owned();
        z_points.set_column(j, &ctx.model.measurement(step, &xj));
    }
    let stats_z = statistics(&z_points);

    let r = ctx.r_matrix(step);
    let re = &stats_z.centered * stats_z.centered.transpose() + &r;
    let re_factors = linalg::svd_symmetric(&re)?;
    let condition = linalg::condition_number(&re_factors);
    if condition > 1.0 / f64::EPSILON {
        return Err(DivergenceReason::IllConditionedInnovation);
    }

    let p_xz = &stats_x.centered * stats_z.centered.transpose();
    // K = P_xz·Rₑ⁻¹ via an LU solve of Rₑ·Kᵀ = P_xzᵀ.
    let gain = match re.clone().lu().solve(&p_xz.transpose()) {
        Some(kt) => kt.transpose(),
        None => {
            return Err(DivergenceReason::Factorization(
                LinalgError::SingularInnovationCovariance,
            ))
        }
    };

    let innovation = z - &stats_z.mean;
    *mean += &gain * &innovation;
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(DivergenceReason::NonFiniteEstimate);
    }
    *p -= &gain * &re * gain.transpose();

    Ok(StepDiagnostics {
        step,
        innovation,
        innovation_condition: condition,
        gain,
    })
}
