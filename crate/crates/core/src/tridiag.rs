//! Thomas algorithm for tridiagonal systems.

/// Solves `A x = rhs` in place for tridiagonal `A` with sub-diagonal `lower`
/// (`lower[i]` multiplies `x[i-1]` in row `i`; `lower[0]` is ignored), main
/// diagonal `diag` and super-diagonal `upper` (`upper[last]` is ignored).
///
/// No pivoting: intended for the diagonally dominant Newton matrices of the
/// implicit radial scheme. Returns `false` if a zero pivot is met.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) -> bool {
    let n = rhs.len();
    assert!(lower.len() == n && diag.len() == n && upper.len() == n);
    if n == 0 {
        return true;
    }
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 || !beta.is_finite() {
        return false;
    }
    rhs[0] /= beta;
    for i in 1..n {
        c[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i];
        if beta == 0.0 || !beta.is_finite() {
            return false;
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i + 1] * rhs[i + 1];
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn solves_diagonally_dominant_systems(
            seed in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 3..40)
        ) {
            let n = seed.len();
            let lower: Vec<f64> = seed.iter().map(|s| s.0).collect();
            let upper: Vec<f64> = seed.iter().map(|s| s.1).collect();
            let diag: Vec<f64> = seed.iter().map(|s| 2.5 + s.2).collect();
            let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
            let mut b = vec![0.0; n];
            for i in 0..n {
                b[i] = diag[i] * x[i];
                if i > 0 { b[i] += lower[i] * x[i - 1]; }
                if i + 1 < n { b[i] += upper[i] * x[i + 1]; }
            }
            prop_assert!(solve_tridiagonal(&lower, &diag, &upper, &mut b));
            for i in 0..n {
                prop_assert!((b[i] - x[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let mut b = vec![1.0, 1.0];
        assert!(!solve_tridiagonal(&[0.0, 1.0], &[0.0, 1.0], &[1.0, 0.0], &mut b));
    }
}
