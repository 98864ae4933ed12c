//! Factorization primitives shared by every filter variant.
//!
//! Covariance matrices show up in three interchangeable representations:
//! a full symmetric matrix `P`, an SVD pair `(Q, d)` with
//! `P = Q·diag(d²)·Qᵀ`, and a lower-triangular Cholesky factor `L` with
//! `P = L·Lᵀ`.  The factored filters never form `P` explicitly; they update
//! `(Q, d)` or `L` by decomposing rectangular pre-arrays `T` that satisfy
//! `T·Tᵀ = P_next`, which is where the numerical robustness of the
//! square-root formulations comes from.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Errors raised by the factorization routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    /// Non-finite entries or inconsistent dimensions.
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
    /// A nominally PSD matrix has an eigenvalue too negative to be roundoff.
    #[error("not positive semi-definite (eigenvalue {eigenvalue:.3e})")]
    NotPositiveSemiDefinite { eigenvalue: f64 },
    /// A Cholesky pivot went non-positive at the given column.
    #[error("not positive definite (pivot {pivot} = {value:.3e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    /// A singular-value spectrum too degenerate to invert.
    #[error("innovation covariance is numerically singular")]
    SingularInnovationCovariance,
    /// The iterative eigen/SVD solver did not converge.
    #[error("decomposition did not converge")]
    ConvergenceFailure,
}

/// SVD square-root factors of a symmetric PSD matrix.
///
/// Represents `P = q·diag(d_sqrt²)·qᵀ` with `q` orthogonal and `d_sqrt`
/// non-negative, sorted non-increasing.  `q·diag(d_sqrt)` is a valid
/// (non-symmetric) square root of `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    /// Orthogonal factor, one eigenvector per column.
    pub q: DMatrix<f64>,
    /// Square roots of the eigenvalues of `P` (equivalently, the singular
    /// values of any pre-array `T` with `T·Tᵀ = P`).
    pub d_sqrt: DVector<f64>,
}

impl SvdFactors {
    /// Side length of the represented matrix.
    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// The square root `q·diag(d_sqrt)` used for cubature-node generation.
    pub fn square_root(&self) -> DMatrix<f64> {
        let mut s = self.q.clone();
        for (j, &d) in self.d_sqrt.iter().enumerate() {
            s.column_mut(j).scale_mut(d);
        }
        s
    }

    /// Rebuilds the full matrix `q·diag(d_sqrt²)·qᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let s = self.square_root();
        &s * s.transpose()
    }
}

/// Lower-triangular Cholesky-style factor with `P = l·lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    /// Lower-triangular factor with non-negative diagonal.
    pub l: DMatrix<f64>,
}

impl CholeskyFactor {
    /// Side length of the represented matrix.
    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Rebuilds the full matrix `l·lᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }
}

fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

fn sort_spectrum(q: &mut DMatrix<f64>, d: &mut DVector<f64>) {
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).unwrap());
    let q_old = q.clone();
    let d_old = d.clone();
    for (dst, &src) in order.iter().enumerate() {
        q.set_column(dst, &q_old.column(src));
        d[dst] = d_old[src];
    }
}

/// Reduced SVD of a wide pre-array `T` (`rows ≤ cols`).
///
/// Returns factors with `q·diag(d_sqrt²)·qᵀ = T·Tᵀ`; the right singular
/// vectors are never formed.  Singular values come back sorted
/// non-increasing.  The decomposition runs as a tall QR of `Tᵀ` followed by
/// an SVD of the small triangular factor, which is backward stable and avoids
/// ever squaring the pre-array.
pub fn reduced_svd(pre_array: &DMatrix<f64>) -> Result<SvdFactors, LinalgError> {
    let (n, cols) = pre_array.shape();
    if n == 0 || cols < n {
        return Err(LinalgError::InvalidInput("pre-array must satisfy rows <= cols"));
    }
    if !all_finite(pre_array) {
        return Err(LinalgError::InvalidInput("pre-array has non-finite entries"));
    }
    let r = pre_array.transpose().qr().unpack_r();
    let svd = r
        .transpose()
        .try_svd(true, false, f64::EPSILON, 0)
        .ok_or(LinalgError::ConvergenceFailure)?;
    let mut q = svd.u.expect("left singular vectors requested");
    let mut d_sqrt = svd.singular_values;
    sort_spectrum(&mut q, &mut d_sqrt);
    Ok(SvdFactors { q, d_sqrt })
}

/// SVD factors of a symmetric matrix that is PSD up to roundoff.
///
/// The input is symmetrized by averaging before the eigendecomposition.
/// Small negative eigenvalues (the typical residue of conventional
/// covariance updates) are clamped to zero; an eigenvalue below
/// `-1e-8·‖p‖` means positive semi-definiteness has genuinely been lost and
/// produces [`LinalgError::NotPositiveSemiDefinite`].
pub fn svd_symmetric(p: &DMatrix<f64>) -> Result<SvdFactors, LinalgError> {
    if !p.is_square() {
        return Err(LinalgError::InvalidInput("matrix must be square"));
    }
    if !all_finite(p) {
        return Err(LinalgError::InvalidInput("matrix has non-finite entries"));
    }
    let sym = (p + p.transpose()) * 0.5;
    let eig = sym
        .try_symmetric_eigen(f64::EPSILON, 0)
        .ok_or(LinalgError::ConvergenceFailure)?;
    let norm = eig.eigenvalues.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    let mut d_sqrt = DVector::zeros(eig.eigenvalues.len());
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -1e-8 * norm {
            return Err(LinalgError::NotPositiveSemiDefinite { eigenvalue: lambda });
        }
        d_sqrt[i] = lambda.max(0.0).sqrt();
    }
    let mut q = eig.eigenvectors;
    sort_spectrum(&mut q, &mut d_sqrt);
    Ok(SvdFactors { q, d_sqrt })
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
///
/// Only the lower triangle of `p` is read.  A non-positive pivot aborts with
/// [`LinalgError::NotPositiveDefinite`]; this is the failure mode that kills
/// the conventional filters once roundoff drives a covariance indefinite.
pub fn cholesky(p: &DMatrix<f64>) -> Result<CholeskyFactor, LinalgError> {
    if !p.is_square() {
        return Err(LinalgError::InvalidInput("matrix must be square"));
    }
    if !all_finite(p) {
        return Err(LinalgError::InvalidInput("matrix has non-finite entries"));
    }
    let n = p.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = p[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if pivot <= 0.0 {
            return Err(LinalgError::NotPositiveDefinite { pivot: j, value: pivot });
        }
        let diag = pivot.sqrt();
        l[(j, j)] = diag;
        for i in (j + 1)..n {
            let mut s = p[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / diag;
        }
    }
    Ok(CholeskyFactor { l })
}

/// Lower-triangular factor of `T·Tᵀ` for a wide pre-array.
///
/// Orthogonally triangularizes `Tᵀ` (tall QR) so that `l·lᵀ = T·Tᵀ` without
/// forming the product.  Unlike [`cholesky`] this never fails on a
/// rank-deficient array; zero diagonal entries are allowed.
pub fn triangularize(pre_array: &DMatrix<f64>) -> Result<CholeskyFactor, LinalgError> {
    let (n, cols) = pre_array.shape();
    if n == 0 || cols < n {
        return Err(LinalgError::InvalidInput("pre-array must satisfy rows <= cols"));
    }
    if !all_finite(pre_array) {
        return Err(LinalgError::InvalidInput("pre-array has non-finite entries"));
    }
    let mut r = pre_array.transpose().qr().unpack_r();
    for i in 0..n {
        if r[(i, i)] < 0.0 {
            for j in 0..n {
                r[(i, j)] = -r[(i, j)];
            }
        }
    }
    Ok(CholeskyFactor { l: r.transpose() })
}

/// Applies the pseudo-inverse of the factored matrix from the right:
/// `rhs·q·diag(d_sqrt⁻²)·qᵀ`.
///
/// This is how the factored filters form the gain without ever inverting a
/// full innovation covariance.  Spectrum entries at or below
/// `ε·max(d_sqrt)` are truncated — their inverse weight is zero — because
/// past that point the factor carries no information about the direction,
/// and dividing by it would amplify pure roundoff.  Only an all-zero or
/// non-finite spectrum is an error.
pub fn apply_inverse_via_svd(
    factors: &SvdFactors,
    rhs: &DMatrix<f64>,
) -> Result<DMatrix<f64>, LinalgError> {
    let n = factors.dim();
    if rhs.ncols() != n {
        return Err(LinalgError::InvalidInput("rhs columns must match factor dimension"));
    }
    let max = factors.d_sqrt.iter().fold(0.0_f64, |m, &v| m.max(v));
    if max <= 0.0 || !max.is_finite() {
        return Err(LinalgError::SingularInnovationCovariance);
    }
    let tol = f64::EPSILON * max;
    let mut scaled = rhs * &factors.q;
    for (j, &d) in factors.d_sqrt.iter().enumerate() {
        let weight = if d <= tol { 0.0 } else { 1.0 / (d * d) };
        scaled.column_mut(j).scale_mut(weight);
    }
    Ok(scaled * factors.q.transpose())
}

/// Solves `L·Lᵀ·X = B` by forward and backward substitution, truncating
/// rank-deficient pivots.
///
/// Components whose pivot is at or below `ε·max(diag)` are set to zero
/// instead of divided through — the triangular analogue of a truncated
/// pseudo-inverse.  Expects the nonnegative-diagonal convention of
/// [`triangularize`]; errors on an all-zero or non-finite diagonal.
pub fn triangular_pseudo_solve(
    l: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<DMatrix<f64>, LinalgError> {
    let n = l.nrows();
    if l.ncols() != n || b.nrows() != n {
        return Err(LinalgError::InvalidInput("factor and rhs dimensions must agree"));
    }
    let max = (0..n).fold(0.0_f64, |m, i| m.max(l[(i, i)]));
    if max <= 0.0 || !max.is_finite() {
        return Err(LinalgError::SingularInnovationCovariance);
    }
    let tol = f64::EPSILON * max;
    let mut x = b.clone_owned();
    for col in 0..x.ncols() {
        for i in 0..n {
            if l[(i, i)] <= tol {
                x[(i, col)] = 0.0;
                continue;
            }
            let mut s = x[(i, col)];
            for j in 0..i {
                s -= l[(i, j)] * x[(j, col)];
            }
            x[(i, col)] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            if l[(i, i)] <= tol {
                x[(i, col)] = 0.0;
                continue;
            }
            let mut s = x[(i, col)];
            for j in (i + 1)..n {
                s -= l[(j, i)] * x[(j, col)];
            }
            x[(i, col)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

/// Squared spectral condition number `(d_max/d_min)²` of the represented
/// matrix; `+∞` when the smallest singular value is exactly zero.
pub fn condition_number(factors: &SvdFactors) -> f64 {
    let max = factors.d_sqrt.iter().fold(0.0_f64, |m, &v| m.max(v));
    let min = factors.d_sqrt.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if min == 0.0 {
        return f64::INFINITY;
    }
    let ratio = max / min;
    ratio * ratio
}
