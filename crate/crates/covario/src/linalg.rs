//! Small dense linear-algebra helpers shared across modules.

use nalgebra::DMatrix;

use crate::covariogram::EmpiricalCovariogram;
use crate::error::Result;

/// Symmetric Toeplitz matrix with first row `first_row`.
pub fn toeplitz(first_row: &[f64]) -> DMatrix<f64> {
    let n = first_row.len();
    DMatrix::from_fn(n, n, |a, b| first_row[a.abs_diff(b)])
}

/// Toeplitz matrix of a covariogram on an arithmetic lag grid.
///
/// Entry `(a, b)` is the value at lag `|a - b| * step`.
pub fn toeplitz_from_covariogram(cov: &EmpiricalCovariogram) -> Result<DMatrix<f64>> {
    cov.arithmetic_step()?;
    Ok(toeplitz(cov.values()))
}

/// First row of a symmetric Toeplitz matrix, the inverse of [`toeplitz`].
pub fn first_row(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.ncols()).map(|j| m[(0, j)]).collect()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Spectral norm of a symmetric matrix: the largest absolute eigenvalue.
pub fn spectral_norm_symmetric(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|e| e.abs())
        .fold(0.0, f64::max)
}

/// Moore-Penrose pseudo-inverse with singular values below
/// `rel_cutoff * max_singular_value` treated as zero.
pub fn pseudo_inverse(m: &DMatrix<f64>, rel_cutoff: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().copied().fold(0.0f64, f64::max);
    let eps = rel_cutoff * max_sv;
    svd.pseudo_inverse(eps)
        .expect("SVD computed with both sets of singular vectors")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn toeplitz_layout() {
        let t = toeplitz(&[1.0, 0.5, 0.2]);
        assert_eq!(t, dmatrix![1.0, 0.5, 0.2; 0.5, 1.0, 0.5; 0.2, 0.5, 1.0]);
    }

    #[test]
    fn toeplitz_first_row_round_trip() {
        let row = [2.0 / 3.0, 0.0, 1.0, -0.25];
        assert_eq!(first_row(&toeplitz(&row)), row.to_vec());
    }

    #[test]
    fn min_eigenvalue_of_counterexample_row() {
        // Toeplitz([2/3, 0, 1]) has eigenvalues 2/3 and 2/3 +- 1.
        let t = toeplitz(&[2.0 / 3.0, 0.0, 1.0]);
        assert_relative_eq!(min_eigenvalue(&t), -1.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn spectral_norm_is_max_abs_eigenvalue() {
        let t = toeplitz(&[1.0, 0.5, 0.0]);
        // Eigenvalues 1, 1 +- 0.5/sqrt(...)-free: for [[1,.5,0],[.5,1,.5],[0,.5,1]]
        // they are 1 and 1 +- sqrt(0.5).
        assert_relative_eq!(spectral_norm_symmetric(&t), 1.0 + 0.5_f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn pseudo_inverse_solves_singular_bordered_system() {
        let m = dmatrix![1.0, 1.0; 1.0, 1.0];
        let p = pseudo_inverse(&m, 1e-10);
        // Pseudo-inverse of the all-ones 2x2 matrix is the same matrix / 4.
        assert_relative_eq!(p[(0, 0)], 0.25, max_relative = 1e-10);
        assert_relative_eq!(p[(1, 0)], 0.25, max_relative = 1e-10);
    }
}
