//! Two-phase extraction of linear outputs `s_r(µ) = l(µ)^H u_r(µ)`.
//!
//! Phase one projects `u_r` onto a cheap basis `W_p` (`w_p = W_p H_p a_r`);
//! phase two adds the sketched correction
//! `(Θ R_U^{-1} l)^H Θ (u_r − w_p)`. Both parts reduce to `r`-vectors per
//! affine term of `l`, so the online evaluation never touches `n`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dense::{r_is_deficient, thin_qr, RANK_TOL};
use crate::embeddings::{EmbeddingDescriptor, UEmbedding};
use crate::error::{check_dim, Error, Result};
use crate::expr::CoeffExpr;
use crate::ops::OpCount;
use crate::sparse::CsrMatrix;
use crate::system::AffineParametricSystem;
use crate::Field;

/// `W_p`: dense tall-skinny or sparse.
#[derive(Debug, Clone)]
pub enum WBasis<T> {
    Dense(DMatrix<T>),
    Sparse(CsrMatrix<T>),
}

impl<T: Field> WBasis<T> {
    pub fn nrows(&self) -> usize {
        match self {
            WBasis::Dense(m) => m.nrows(),
            WBasis::Sparse(m) => m.nrows(),
        }
    }

    pub fn p(&self) -> usize {
        match self {
            WBasis::Dense(m) => m.ncols(),
            WBasis::Sparse(m) => m.ncols(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        match self {
            WBasis::Dense(m) => m.clone(),
            WBasis::Sparse(m) => m.to_dense(),
        }
    }

    pub fn mul_vec(&self, c: &DVector<T>) -> Result<DVector<T>> {
        match self {
            WBasis::Dense(m) => {
                check_dim("W_p coordinates", m.ncols(), c.len())?;
                Ok(m * c)
            }
            WBasis::Sparse(m) => m.mul_vec(c),
        }
    }

    /// `W^H X`.
    fn adjoint_mul(&self, x: &DMatrix<T>) -> Result<DMatrix<T>> {
        match self {
            WBasis::Dense(m) => Ok(m.adjoint() * x),
            WBasis::Sparse(m) => m.adjoint().mul_mat(x),
        }
    }
}

/// A user matrix used verbatim as `W_p` (e.g. a coarse-grid prolongation).
pub fn wp_coarse<T: Field>(m: CsrMatrix<T>, n: usize) -> Result<WBasis<T>> {
    check_dim("W_p rows", n, m.nrows())?;
    Ok(WBasis::Sparse(m))
}

#[derive(Debug, Clone)]
pub struct ExtractionBasis<T> {
    pub w: WBasis<T>,
    /// `p x r`.
    pub h: DMatrix<T>,
    /// `Θ W_p`, `k x p`.
    pub w_theta: DMatrix<T>,
    /// Row `j`: `l_j^H W_p H_p`.
    pub l_star: DMatrix<T>,
    /// Row `j`: `(Θ R_U^{-1} l_j)^H (U_r^Θ − W_p^Θ H_p)`.
    pub delta_l: DMatrix<T>,
    pub l_coeffs: Vec<CoeffExpr>,
    pub theta: EmbeddingDescriptor,
}

impl<T: Field> ExtractionBasis<T> {
    pub fn r(&self) -> usize {
        self.h.ncols()
    }

    pub fn p(&self) -> usize {
        self.h.nrows()
    }

    /// Coordinates `c_p = H_p a_r` of the projection `w_p`.
    pub fn project(&self, a: &DVector<T>) -> Result<DVector<T>> {
        check_dim("reduced coordinates", self.r(), a.len())?;
        Ok(&self.h * a)
    }

    /// `w_p(µ) = W_p H_p a_r` (full vector).
    pub fn w_p(&self, a: &DVector<T>) -> Result<DVector<T>> {
        if self.p() == 0 {
            return Ok(DVector::zeros(self.w.nrows()));
        }
        self.w.mul_vec(&self.project(a)?)
    }
}

fn output_terms<T: Field>(sys: &AffineParametricSystem<T>) -> Result<(&[DVector<T>], &[CoeffExpr])> {
    let l = sys
        .l
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("system has no output functional l".into()))?;
    Ok((l.terms(), l.coeffs()))
}

/// `s_r(µ) = l(µ)^H U_r a_r` with full vectors (reference).
pub fn qoi_exact<T: Field>(sys: &AffineParametricSystem<T>, ur: &DMatrix<T>, a: &DVector<T>, mu: &[f64]) -> Result<T> {
    check_dim("reduced coordinates", ur.ncols(), a.len())?;
    let l = sys.output(mu)?;
    Ok(l.dotc(&(ur * a)))
}

/// Precomputes `H_p` and the affine factors of the two-phase estimate. The
/// inner product is the one carried by `theta`, which may differ from the
/// solver's.
pub fn build_extraction<T: Field>(
    sys: &AffineParametricSystem<T>,
    ur: &DMatrix<T>,
    w: WBasis<T>,
    theta: &UEmbedding<T>,
) -> Result<ExtractionBasis<T>> {
    let (l_terms, l_coeffs) = output_terms(sys)?;
    let ip = theta.inner_product();
    check_dim("U_r rows", ip.n(), ur.nrows())?;
    check_dim("W_p rows", ip.n(), w.nrows())?;
    let (r, p) = (ur.ncols(), w.p());
    let u_theta = theta.apply(ur)?;
    let (h, w_theta) = if p == 0 {
        (DMatrix::zeros(0, r), DMatrix::zeros(theta.k(), 0))
    } else {
        let wd = w.to_dense();
        // H_p = argmin ‖W H − U_r‖_U column-wise, via QR of Q W
        let (q, rr) = thin_qr(&ip.q_mul_mat(&wd)?);
        if r_is_deficient(&rr) {
            return Err(Error::Singular {
                what: "W_p^H R_U W_p",
                cond: crate::dense::cond(&rr).powi(2),
            });
        }
        let rhs = q.adjoint() * ip.q_mul_mat(ur)?;
        let h = rr
            .solve_upper_triangular(&rhs)
            .ok_or(Error::Singular {
                what: "W_p^H R_U W_p",
                cond: f64::INFINITY,
            })?;
        (h, theta.apply(&wd)?)
    };
    let resid_theta = &u_theta - &w_theta * &h;
    let rows = l_terms
        .par_iter()
        .map(|lj| {
            let lj_m = crate::field::col_to_mat(lj);
            let f = if p == 0 {
                DMatrix::zeros(1, r)
            } else {
                w.adjoint_mul(&lj_m)?.adjoint() * &h
            };
            let g = theta.sketch_dual(&lj_m)?.adjoint() * &resid_theta;
            Ok((f, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = rows.len();
    let mut l_star = DMatrix::zeros(m, r);
    let mut delta_l = DMatrix::zeros(m, r);
    for (j, (f, g)) in rows.into_iter().enumerate() {
        l_star.set_row(j, &f.row(0));
        delta_l.set_row(j, &g.row(0));
    }
    Ok(ExtractionBasis {
        w,
        h,
        w_theta,
        l_star,
        delta_l,
        l_coeffs: l_coeffs.to_vec(),
        theta: theta.descriptor().clone(),
    })
}

/// `s*_r(µ) = Σ_j conj(λ_j(µ)) (l*_j + Δl*_j) a_r`.
pub fn qoi_corrected<T: Field>(eb: &ExtractionBasis<T>, a: &DVector<T>, mu: &[f64]) -> Result<T> {
    qoi_corrected_counted(eb, a, mu, &mut OpCount::default())
}

pub fn qoi_corrected_counted<T: Field>(
    eb: &ExtractionBasis<T>,
    a: &DVector<T>,
    mu: &[f64],
    ops: &mut OpCount,
) -> Result<T> {
    check_dim("reduced coordinates", eb.r(), a.len())?;
    let (m, r) = eb.l_star.shape();
    ops.read(2 * r);
    ops.add((4 * m * r + 2 * m) as u64);
    let mut s = T::zero();
    for (j, c) in eb.l_coeffs.iter().enumerate() {
        let lam = c.eval_field::<T>(mu)?;
        let row = eb.l_star.row(j) + eb.delta_l.row(j);
        s += lam.conjugate() * (row * a)[0];
    }
    Ok(s)
}

fn sorted_svd<T: Field>(m: &DMatrix<T>) -> (Vec<f64>, Vec<DVector<T>>) {
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv = order.iter().map(|&i| svd.singular_values[i]).collect();
    let vecs = order.iter().map(|&i| vt.row(i).adjoint()).collect();
    (sv, vecs)
}

/// Sketched method of snapshots: `T*_p = L_m [t_1 … t_p]` with `t_i` the
/// dominant right singular vectors of `U_r^Θ L_m`. `W_p = U_r T*_p`.
pub fn wp_pod<T: Field>(u_theta: &DMatrix<T>, l_m: &DMatrix<T>, p: usize) -> Result<DMatrix<T>> {
    check_dim("coordinate samples rows", u_theta.ncols(), l_m.nrows())?;
    if p == 0 {
        return Ok(DMatrix::zeros(l_m.nrows(), 0));
    }
    let y = u_theta * l_m;
    let (sv, vecs) = sorted_svd(&y);
    let smax = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > RANK_TOL.sqrt() * smax).count();
    if p > rank {
        return Err(Error::InvalidArgument(format!(
            "p = {p} exceeds the numerical rank {rank} of the sketched snapshots"
        )));
    }
    let t = DMatrix::from_columns(&vecs[..p]);
    Ok(l_m * t)
}

/// Sketched greedy selection of snapshots: returns the selected columns of
/// `L_m` and `T*` with `U_r^Θ T*` orthonormal. Stops early when every
/// remaining sample lies in the current span.
pub fn wp_greedy<T: Field>(u_theta: &DMatrix<T>, l_m: &DMatrix<T>, p: usize) -> Result<(Vec<usize>, DMatrix<T>)> {
    check_dim("coordinate samples rows", u_theta.ncols(), l_m.nrows())?;
    let m = l_m.ncols();
    if p > m {
        return Err(Error::InvalidArgument(format!("p = {p} exceeds the sample count {m}")));
    }
    let y = u_theta * l_m;
    let scale = y.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut q: Vec<DVector<T>> = Vec::new();
    let mut t: Vec<DVector<T>> = Vec::new();
    let mut picked = Vec::new();
    while picked.len() < p {
        let dist = |i: usize| {
            let mut v = y.column(i).into_owned();
            for qj in &q {
                let c = qj.dotc(&v);
                v.axpy(-c, qj, T::one());
            }
            v.norm()
        };
        let Some((best, d)) = (0..m)
            .filter(|i| !picked.contains(i))
            .map(|i| (i, dist(i)))
            .fold(None, |acc: Option<(usize, f64)>, (i, d)| match acc {
                Some((_, bd)) if bd >= d => acc,
                _ => Some((i, d)),
            })
        else {
            break;
        };
        if d <= 1e-10 * scale || d == 0.0 {
            break;
        }
        // orthonormalize in the sketch, applying the same steps to T
        let mut v = y.column(best).into_owned();
        let mut tv = l_m.column(best).into_owned();
        for _ in 0..2 {
            for (qj, tj) in q.iter().zip(&t) {
                let c = qj.dotc(&v);
                v.axpy(-c, qj, T::one());
                tv.axpy(-c, tj, T::one());
            }
        }
        let nv = T::from_re(v.norm());
        q.push(v / nv);
        t.push(tv / nv);
        picked.push(best);
    }
    let tm = if t.is_empty() {
        DMatrix::zeros(l_m.nrows(), 0)
    } else {
        DMatrix::from_columns(&t)
    };
    Ok((picked, tm))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pod_of_identical_columns() {
        let u = DMatrix::<f64>::identity(4, 3);
        let c = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let l = DMatrix::from_columns(&[c.clone(), c.clone(), c.clone()]);
        let t = wp_pod(&u, &l, 1).unwrap();
        let dir = t.column(0).normalize();
        assert!((dir.dot(&c.normalize()).abs() - 1.0).abs() < 1e-12);
        assert!(wp_pod(&u, &l, 2).is_err());
    }

    #[test]
    fn greedy_stops_at_rank() {
        let u = DMatrix::<f64>::identity(5, 3);
        let l = DMatrix::from_row_slice(3, 4, &[1.0, 0.0, 1.0, 2.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let (idx, t) = wp_greedy(&u, &l, 4).unwrap();
        assert_eq!(idx.len(), 2);
        assert_eq!(idx[0], 3);
        let g = (&u * &t).adjoint() * (&u * &t);
        assert!((g - DMatrix::identity(2, 2)).norm() < 1e-12);
    }
}
