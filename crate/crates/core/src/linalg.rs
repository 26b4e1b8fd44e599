//! Least squares and numerical rank on small dense matrices.

use nalgebra::{DMatrix, SVD};

/// Singular values below this fraction of the largest one count as zero.
pub const RANK_THRESHOLD: f64 = 1e-9;

fn cutoff(svd: &SVD<f64, nalgebra::Dyn, nalgebra::Dyn>) -> f64 {
    let max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    RANK_THRESHOLD * max
}

/// Numerical rank: singular values strictly above `1e-9 · σ_max`.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let svd = SVD::new(a.clone(), false, false);
    let eps = cutoff(&svd);
    svd.singular_values.iter().filter(|&&s| s > eps).count()
}

/// Minimum-norm least-squares solution `X` of `A X ≈ B`.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows(), "row mismatch in least squares");
    if a.is_empty() {
        return DMatrix::zeros(a.ncols(), b.ncols());
    }
    let svd = SVD::new(a.clone(), true, true);
    let eps = cutoff(&svd).max(f64::MIN_POSITIVE);
    let pinv = svd
        .pseudo_inverse(eps)
        .expect("singular vectors were requested");
    pinv * b
}

/// Indices of a maximal set of linearly independent columns, chosen
/// greedily left to right.
pub fn independent_columns(a: &DMatrix<f64>) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    let mut rank = 0;
    for j in 0..a.ncols() {
        let mut cols = chosen.clone();
        cols.push(j);
        if numerical_rank(&a.select_columns(&cols)) > rank {
            chosen = cols;
            rank += 1;
        }
    }
    chosen
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_simple_matrices() {
        assert_eq!(numerical_rank(&DMatrix::<f64>::identity(3, 3)), 3);
        assert_eq!(numerical_rank(&DMatrix::<f64>::zeros(2, 4)), 0);
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert_eq!(numerical_rank(&a), 1);
    }

    #[test]
    fn least_squares_recovers_exact_solution() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let x = DMatrix::from_row_slice(2, 1, &[2.0, -3.0]);
        let b = &a * &x;
        assert!(max_abs_diff(&lstsq(&a, &b), &x) < 1e-12);
    }

    #[test]
    fn least_squares_is_min_norm_on_duplicate_columns() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let x = lstsq(&a, &b);
        assert!((x[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((x[(1, 0)] - 0.5).abs() < 1e-12);
        assert_eq!(independent_columns(&a), vec![0]);
    }
}
