//! Small dense linear-algebra helpers used throughout the crate.

use nalgebra::{DMatrix, DVector};

/// Induced Euclidean (spectral) norm: the largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Deterministic orthonormal basis of the hyperplane orthogonal to `n`.
///
/// Built from the Householder reflection sending `e_1` to `n/|n|`; the
/// returned matrix is d×(d−1) with orthonormal columns spanning `ker nᵀ`.
pub fn orthonormal_complement(n: &DVector<f64>) -> DMatrix<f64> {
    let d = n.len();
    assert!(d >= 1, "empty normal vector");
    let unit = n / n.norm();
    let mut v = unit.clone();
    v[0] -= 1.0;
    let basis = if v.norm() < 1e-14 {
        DMatrix::<f64>::identity(d, d)
    } else {
        let v = v.clone() / v.norm();
        DMatrix::<f64>::identity(d, d) - 2.0 * &v * v.transpose()
    };
    basis.columns(1, d - 1).into_owned()
}

/// Max-abs entry of a matrix.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complement_is_orthonormal_and_orthogonal_to_normal() {
        for d in 2..6 {
            let n = DVector::from_fn(d, |i, _| (i as f64 + 1.0) * if i % 2 == 0 { 1.0 } else { -0.5 });
            let e = orthonormal_complement(&n);
            assert_eq!(e.ncols(), d - 1);
            let gram = e.transpose() * &e;
            assert!(max_abs(&(gram - DMatrix::identity(d - 1, d - 1))) < 1e-12);
            let proj = e.transpose() * &n;
            assert!(proj.norm() < 1e-12 * n.norm());
        }
    }

    #[test]
    fn spectral_norm_of_scaled_identity() {
        let m = DMatrix::<f64>::identity(3, 3) * 0.25;
        assert!((spectral_norm(&m) - 0.25).abs() < 1e-14);
    }
}
