//! Small dense kernels used on sketched data.

use nalgebra::{DMatrix, DVector};

use crate::Field;

/// Relative pivot threshold below which a triangular factor is treated as
/// rank deficient.
pub const RANK_TOL: f64 = 1e-12;

/// Least-squares solution of `min ‖V x − b‖` by Householder QR.
///
/// Falls back to the minimal-norm SVD solution when `V` is numerically rank
/// deficient; the flag reports that case.
pub fn lstsq<T: Field>(v: &DMatrix<T>, b: &DVector<T>) -> (DVector<T>, bool) {
    let (m, n) = v.shape();
    if n == 0 {
        return (DVector::zeros(0), false);
    }
    if m >= n {
        let qr = v.clone().qr();
        let r = qr.r();
        let dmax = (0..n).map(|i| r[(i, i)].modulus()).fold(0.0, f64::max);
        let full = dmax > 0.0 && (0..n).all(|i| r[(i, i)].modulus() > RANK_TOL * dmax);
        if full {
            let qtb = qr.q().adjoint() * b;
            if let Some(x) = r.solve_upper_triangular(&qtb) {
                return (x, false);
            }
        }
    }
    (min_norm(v, b), true)
}

fn min_norm<T: Field>(v: &DMatrix<T>, b: &DVector<T>) -> DVector<T> {
    let svd = v.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = RANK_TOL * smax.max(f64::MIN_POSITIVE);
    svd.solve(b, tol).unwrap_or_else(|_| DVector::zeros(v.ncols()))
}

/// Smallest and largest singular values (0, 0 for an empty matrix).
pub fn sv_extremes<T: Field>(m: &DMatrix<T>) -> (f64, f64) {
    if m.ncols() == 0 || m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let sv = m.singular_values();
    let smin = if m.nrows() < m.ncols() { 0.0 } else { sv.min() };
    (smin, sv.max())
}

pub fn cond<T: Field>(m: &DMatrix<T>) -> f64 {
    let (lo, hi) = sv_extremes(m);
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Thin orthonormal basis of the column span (Householder QR) and the
/// triangular factor.
pub fn thin_qr<T: Field>(m: &DMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
    let qr = m.clone().qr();
    (qr.q(), qr.r())
}

/// True if the triangular factor has a pivot below `RANK_TOL` relative to
/// the largest.
pub fn r_is_deficient<T: Field>(r: &DMatrix<T>) -> bool {
    let n = r.nrows().min(r.ncols());
    if n < r.ncols() {
        return true;
    }
    let d: Vec<f64> = (0..n).map(|i| r[(i, i)].modulus()).collect();
    let dmax = d.iter().copied().fold(0.0, f64::max);
    dmax == 0.0 || d.iter().any(|&x| x <= RANK_TOL * dmax)
}

pub(crate) fn columns<T: Field>(m: &DMatrix<T>, idx: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(m.nrows(), idx.len(), |i, j| m[(i, idx[j])])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lstsq_overdetermined() {
        let v = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let (x, deficient) = lstsq(&v, &b);
        assert!(!deficient);
        let normal = (v.transpose() * &v).try_inverse().unwrap() * v.transpose() * &b;
        assert!((x - normal).norm() < 1e-14);
    }

    #[test]
    fn lstsq_rank_deficient_min_norm() {
        let v = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
        let b = DVector::from_vec(vec![2.0, 2.0, 0.0]);
        let (x, deficient) = lstsq(&v, &b);
        assert!(deficient);
        assert!((x - DVector::from_vec(vec![1.0, 1.0])).norm() < 1e-12);
    }
}
