//! Third-degree spherical-radial cubature rule.
//!
//! Gaussian expectations are approximated with `2n` equally weighted nodes
//! placed at `±√n·eᵢ`.  For a state with mean `x̂` and covariance square root
//! `S` (so `P = S·Sᵀ`), the translated points `S·ξᵢ + x̂` have sample mean
//! `x̂` and sample covariance exactly `P`, and the rule integrates every
//! polynomial of total degree ≤ 3 exactly.

use nalgebra::{DMatrix, DVector};

/// The canonical node set `{±√n·eᵢ}` for a fixed dimension.
#[derive(Debug, Clone)]
pub struct CubatureSet {
    dim: usize,
    nodes: DMatrix<f64>,
}

/// A point cloud together with its weighted first two moments.
///
/// `centered` holds `(pointᵢ - mean)/√(2n)` column by column, so that
/// `centered·centeredᵀ` is the sample covariance and `centered` can be used
/// directly as a block of a factored-filter pre-array.
#[derive(Debug, Clone)]
pub struct PropagatedPoints {
    /// One point per column (`n × 2n`).
    pub points: DMatrix<f64>,
    /// Equally weighted mean of the columns.
    pub mean: DVector<f64>,
    /// Deviations from the mean, scaled by `1/√(2n)`.
    pub centered: DMatrix<f64>,
}

impl CubatureSet {
    /// Builds the node set for an `n`-dimensional state.
    ///
    /// # Panics
    /// Panics if `dim` is zero.
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "cubature dimension must be positive");
        let scale = (dim as f64).sqrt();
        let mut nodes = DMatrix::zeros(dim, 2 * dim);
        for i in 0..dim {
            nodes[(i, i)] = scale;
            nodes[(i, dim + i)] = -scale;
        }
        CubatureSet { dim, nodes }
    }

    /// State dimension `n`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of nodes, always `2n`.
    pub fn len(&self) -> usize {
        2 * self.dim
    }

    /// The raw node matrix (`n × 2n`), one node per column.
    pub fn nodes(&self) -> &DMatrix<f64> {
        &self.nodes
    }

    /// Maps the canonical nodes through `x ↦ square_root·ξ + mean`.
    pub fn translate(&self, square_root: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
        assert_eq!(square_root.nrows(), self.dim);
        assert_eq!(square_root.ncols(), self.dim);
        assert_eq!(mean.len(), self.dim);
        let mut points = square_root * &self.nodes;
        for mut col in points.column_iter_mut() {
            col += mean;
        }
        points
    }
}

/// Computes the equally weighted mean and scaled deviations of a point cloud.
pub fn statistics(points: &DMatrix<f64>) -> PropagatedPoints {
    let count = points.ncols();
    assert!(count > 0, "statistics of an empty point set");
    let weight = 1.0 / count as f64;
    let mut mean = DVector::zeros(points.nrows());
    for col in points.column_iter() {
        mean += weight * col;
    }
    let scale = 1.0 / (count as f64).sqrt();
    let mut centered = points.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
        col *= scale;
    }
    PropagatedPoints { points: points.clone(), mean, centered }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cholesky;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const TOL: f64 = 1e-12;

    fn assert_matrix_near(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let diff = (a[(i, j)] - b[(i, j)]).abs();
                assert!(diff <= tol, "entry ({i},{j}) differs by {diff:.3e}");
            }
        }
    }

    #[test]
    fn nodes_one_dimensional() {
        let set = CubatureSet::new(1);
        assert_eq!(set.len(), 2);
        assert_relative_eq!(set.nodes()[(0, 0)], 1.0);
        assert_relative_eq!(set.nodes()[(0, 1)], -1.0);
    }

    #[test]
    fn nodes_two_dimensional() {
        let set = CubatureSet::new(2);
        let s = 2.0_f64.sqrt();
        let expected = DMatrix::from_row_slice(2, 4, &[s, 0.0, -s, 0.0, 0.0, s, 0.0, -s]);
        assert_matrix_near(set.nodes(), &expected, TOL);
    }

    #[test]
    fn canonical_nodes_have_unit_sample_moments() {
        for n in 1..=5 {
            let set = CubatureSet::new(n);
            let stats = statistics(set.nodes());
            for i in 0..n {
                assert!(stats.mean[i].abs() < TOL);
            }
            let cov = &stats.centered * stats.centered.transpose();
            assert_matrix_near(&cov, &DMatrix::identity(n, n), TOL);
        }
    }

    #[test]
    fn translate_reproduces_mean_and_covariance() {
        let p = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 5.0]);
        let sr = cholesky(&p).unwrap().l;
        let mean = DVector::from_vec(vec![1.0, -2.0]);
        let set = CubatureSet::new(2);
        let stats = statistics(&set.translate(&sr, &mean));
        assert_relative_eq!(stats.mean[0], 1.0, max_relative = TOL);
        assert_relative_eq!(stats.mean[1], -2.0, max_relative = TOL);
        let cov = &stats.centered * stats.centered.transpose();
        assert_matrix_near(&cov, &p, 1e-12);
    }

    #[test]
    fn statistics_hand_computed() {
        // Columns (1,1) and (3,5): mean (2,3), deviations ±(1,2)/√2.
        let points = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 1.0, 5.0]);
        let stats = statistics(&points);
        assert_relative_eq!(stats.mean[0], 2.0);
        assert_relative_eq!(stats.mean[1], 3.0);
        let inv_sqrt2 = 1.0 / 2.0_f64.sqrt();
        assert_relative_eq!(stats.centered[(0, 0)], -inv_sqrt2, max_relative = TOL);
        assert_relative_eq!(stats.centered[(1, 1)], 2.0 * inv_sqrt2, max_relative = TOL);
    }

    #[test]
    fn centered_columns_sum_to_zero() {
        let set = CubatureSet::new(3);
        let sr = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.0, 0.0, 0.4, 0.9, 0.0, -0.2, 0.3, 1.1],
        );
        let mean = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let stats = statistics(&set.translate(&sr, &mean));
        let row_sums = &stats.centered * DVector::from_element(6, 1.0);
        for i in 0..3 {
            assert!(row_sums[i].abs() < TOL);
        }
    }

    /// Rule expectation of a monomial over N(mean, S·Sᵀ).
    fn rule_monomial(set: &CubatureSet, sr: &DMatrix<f64>, mean: &DVector<f64>, powers: &[u32]) -> f64 {
        let points = set.translate(sr, mean);
        let w = 1.0 / points.ncols() as f64;
        points
            .column_iter()
            .map(|col| {
                powers
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| col[i].powi(p as i32))
                    .product::<f64>()
            })
            .sum::<f64>()
            * w
    }

    #[test]
    fn degree_three_monomials_match_gaussian_moments() {
        // Closed-form Gaussian moments: E[xᵢ] = μᵢ, E[xᵢxⱼ] = μᵢμⱼ + Pᵢⱼ,
        // E[xᵢxⱼxₖ] = μᵢμⱼμₖ + μᵢPⱼₖ + μⱼPᵢₖ + μₖPᵢⱼ.
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.5]);
        let sr = cholesky(&p).unwrap().l;
        let mu = DVector::from_vec(vec![0.3, -1.2]);
        let set = CubatureSet::new(2);

        assert_relative_eq!(rule_monomial(&set, &sr, &mu, &[1, 0]), mu[0], epsilon = TOL);
        assert_relative_eq!(
            rule_monomial(&set, &sr, &mu, &[1, 1]),
            mu[0] * mu[1] + p[(0, 1)],
            epsilon = TOL
        );
        assert_relative_eq!(
            rule_monomial(&set, &sr, &mu, &[2, 0]),
            mu[0] * mu[0] + p[(0, 0)],
            epsilon = TOL
        );
        assert_relative_eq!(
            rule_monomial(&set, &sr, &mu, &[2, 1]),
            mu[0] * mu[0] * mu[1] + 2.0 * mu[0] * p[(0, 1)] + mu[1] * p[(0, 0)],
            epsilon = 1e-11
        );
        assert_relative_eq!(
            rule_monomial(&set, &sr, &mu, &[3, 0]),
            mu[0].powi(3) + 3.0 * mu[0] * p[(0, 0)],
            epsilon = 1e-11
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn prop_translated_cloud_reproduces_inputs(seed in 0u64..500, n in 1usize..6) {
            let mut state = seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
            let mut next = || {
                state = state.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            };
            let a = DMatrix::from_fn(n, n, |_, _| next());
            let p = &a * a.transpose() + DMatrix::identity(n, n) * 0.1;
            let sr = cholesky(&p).unwrap().l;
            let mean = DVector::from_fn(n, |_, _| next());
            let set = CubatureSet::new(n);
            let stats = statistics(&set.translate(&sr, &mean));
            for i in 0..n {
                prop_assert!((stats.mean[i] - mean[i]).abs() < 1e-10);
            }
            let cov = &stats.centered * stats.centered.transpose();
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((cov[(i, j)] - p[(i, j)]).abs() < 1e-10);
                }
            }
        }
    }
}
