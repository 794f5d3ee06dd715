//! Conversions between precision matrices and partial-correlation networks.
//!
//! A positive-definite precision matrix `K` factors as
//! `K = Delta^-1 (I - Omega) Delta^-1`, where `Omega` holds the partial
//! correlations `-k_ij / sqrt(k_ii k_jj)` and `Delta` the scales `k_jj^-1/2`.

use nalgebra::DMatrix;

use super::implied::{checked_inverse, scale_both_sides, symmetrize};
use crate::error::{Error, Result};

/// Splits a precision matrix into its network and scaling parts.
pub fn precision_to_network(k: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = k.nrows();
    if !k.is_square() {
        return Err(Error::NotPositiveDefinite { what: "precision matrix" });
    }
    if (0..n).any(|j| !(k[(j, j)] > 0.0)) || k.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite { what: "precision matrix" });
    }
    let scale: Vec<f64> = (0..n).map(|j| k[(j, j)].sqrt()).collect();
    let omega = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            -k[(i, j)] / (scale[i] * scale[j])
        }
    });
    let delta = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / scale[i] } else { 0.0 });
    Ok((symmetrize(omega), delta))
}

/// `Delta (I - Omega)^-1 Delta`.
pub fn network_to_covariance(omega: &DMatrix<f64>, delta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = omega.nrows();
    let r = checked_inverse(DMatrix::identity(n, n) - omega, "I - omega")?;
    Ok(symmetrize(scale_both_sides(&r, delta)))
}

/// Partial-correlation network of a covariance matrix (the saturated GGM).
pub fn network_to_partial_correlations(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = sigma
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { what: "covariance matrix" })?
        .inverse();
    Ok(precision_to_network(&symmetrize(k))?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    /// Gauss-Jordan inverse with partial pivoting, independent of nalgebra's LU.
    fn gauss_jordan_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = m.nrows();
        let mut a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = (0..n).map(|j| m[(i, j)]).collect();
                row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
                row
            })
            .collect();
        for c in 0..n {
            let piv = (c..n)
                .max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))
                .unwrap();
            a.swap(c, piv);
            let d = a[c][c];
            a[c].iter_mut().for_each(|v| *v /= d);
            for r in 0..n {
                if r != c {
                    let f = a[r][c];
                    let pivot_row = a[c].clone();
                    a[r].iter_mut().zip(pivot_row).for_each(|(v, p)| *v -= f * p);
                }
            }
        }
        DMatrix::from_fn(n, n, |i, j| a[i][n + j])
    }

    #[test]
    fn identity_precision() {
        let (omega, delta) = precision_to_network(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(omega, DMatrix::zeros(3, 3));
        assert_eq!(delta, DMatrix::identity(3, 3));
    }

    #[test]
    fn sign_flip() {
        let k = dmatrix![1.0, -0.5; -0.5, 1.0];
        let (omega, delta) = precision_to_network(&k).unwrap();
        assert_eq!(omega[(0, 1)], 0.5);
        assert_eq!(omega[(1, 0)], 0.5);
        assert_eq!(delta, DMatrix::identity(2, 2));
    }

    #[test]
    fn rejects_indefinite() {
        let k = dmatrix![1.0, 2.0; 2.0, 1.0];
        assert!(matches!(
            precision_to_network(&k),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let k = dmatrix![0.0, 0.0; 0.0, 1.0];
        assert!(precision_to_network(&k).is_err());
    }

    #[test]
    fn partial_correlations_of_identity_are_zero() {
        let omega = network_to_partial_correlations(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(omega, DMatrix::zeros(4, 4));
    }

    #[test]
    fn partial_correlations_invert_two_node_example() {
        let sigma = dmatrix![4.0 / 3.0, 2.0 / 3.0; 2.0 / 3.0, 4.0 / 3.0];
        let omega = network_to_partial_correlations(&sigma).unwrap();
        assert_relative_eq!(omega[(0, 1)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn chain_has_no_long_range_partial() {
        let omega = dmatrix![0.0, 0.3, 0.0; 0.3, 0.0, -0.4; 0.0, -0.4, 0.0];
        let delta = DMatrix::from_diagonal(&nalgebra::dvector![1.2, 0.7, 1.5]);
        let sigma = network_to_covariance(&omega, &delta).unwrap();
        let k = gauss_jordan_inverse(&sigma);
        // the oracle inverse has zero (1,3) precision
        assert!(k[(0, 2)].abs() < 1e-10);
        let recovered = network_to_partial_correlations(&sigma).unwrap();
        assert!(recovered[(0, 2)].abs() < 1e-10);
        assert_relative_eq!(recovered[(0, 1)], 0.3, epsilon = 1e-10);
        assert_relative_eq!(recovered[(1, 2)], -0.4, epsilon = 1e-10);
    }

    fn random_pd(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
            let a = DMatrix::from_vec(n, n, v);
            &a * a.transpose() + DMatrix::identity(n, n) * 0.5
        })
    }

    proptest! {
        #[test]
        fn round_trip_recovers_inverse(k in random_pd(4)) {
            let (omega, delta) = precision_to_network(&k).unwrap();
            let sigma = network_to_covariance(&omega, &delta).unwrap();
            let oracle = gauss_jordan_inverse(&k);
            let rel = (&sigma - &oracle).amax() / oracle.amax();
            prop_assert!(rel < 1e-10, "relative error {rel}");
            for j in 0..4 {
                prop_assert!(omega[(j, j)] == 0.0);
            }
        }
    }
}
