//! Sparse direct factorizations: reverse Cuthill-McKee ordering, a profile
//! Cholesky for the inner-product matrix and a banded LU with partial
//! pivoting for truth solves.

use std::collections::VecDeque;

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::sparse::CsrMatrix;
use crate::Field;

/// Reverse Cuthill-McKee ordering of a symmetric adjacency structure.
/// Returns `perm` with `perm[new] = old`.
pub fn rcm(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let deg: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut level = vec![0usize; n];

    let bfs_far = |start: usize, level: &mut [usize]| -> (usize, usize) {
        let mut seen = vec![false; n];
        let mut q = VecDeque::from([start]);
        seen[start] = true;
        level[start] = 0;
        let mut last = start;
        while let Some(v) = q.pop_front() {
            if level[v] > level[last] || (level[v] == level[last] && deg[v] < deg[last]) {
                last = v;
            }
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    level[w] = level[v] + 1;
                    q.push_back(w);
                }
            }
        }
        (last, level[last])
    };

    for s0 in 0..n {
        if visited[s0] {
            continue;
        }
        // pseudo-peripheral start within this component
        let mut start = s0;
        let (mut far, mut ecc) = bfs_far(start, &mut level);
        for _ in 0..4 {
            let (f2, e2) = bfs_far(far, &mut level);
            if e2 <= ecc {
                break;
            }
            start = far;
            far = f2;
            ecc = e2;
        }
        let start = if deg[far] < deg[start] { far } else { start };
        let mut q = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = q.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            nb.sort_by_key(|&w| (deg[w], w));
            for w in nb {
                visited[w] = true;
                q.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

/// Envelope Cholesky `P R P^T = L L^H` of a Hermitian positive-definite matrix.
///
/// With `Q := L^H P` this gives `Q^H Q = R`.
#[derive(Debug, Clone)]
pub struct ProfileCholesky<T> {
    n: usize,
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<T>,
}

impl<T: Field> ProfileCholesky<T> {
    pub fn new(r: &CsrMatrix<T>) -> Result<Self> {
        check_dim("cholesky (square)", r.nrows(), r.ncols())?;
        let perm = rcm(&r.symmetric_pattern());
        Self::with_ordering(r, perm)
    }

    pub fn with_ordering(r: &CsrMatrix<T>, perm: Vec<usize>) -> Result<Self> {
        let n = r.nrows();
        let b = r.permute_sym(&perm);
        let mut first: Vec<usize> = (0..n).collect();
        for i in 0..n {
            if let Some(&j) = b.row(i).0.first() {
                first[i] = first[i].min(j);
            }
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut data = vec![T::zero(); start[n]];
        let mut diag_max = 0.0f64;
        for i in 0..n {
            let (idx, val) = b.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                if j <= i {
                    data[start[i] + j - first[i]] = v;
                }
            }
            diag_max = diag_max.max(b.get(i, i).modulus());
        }
        for i in 0..n {
            let fi = first[i];
            let ri = start[i];
            for j in fi..i {
                let fj = first[j];
                let rj = start[j];
                let k0 = fi.max(fj);
                let mut s = data[ri + j - fi];
                for k in k0..j {
                    s -= data[ri + k - fi] * data[rj + k - fj].conjugate();
                }
                data[ri + j - fi] = s / data[rj + j - fj];
            }
            let mut d = data[ri + i - fi].real();
            for k in fi..i {
                d -= data[ri + k - fi].modulus_squared();
            }
            if !(d > 1e-15 * diag_max) {
                return Err(Error::NotPositiveDefinite { row: perm[i], pivot: d });
            }
            data[ri + i - fi] = T::from_real(d.sqrt());
        }
        Ok(ProfileCholesky {
            n,
            perm,
            first,
            start,
            data,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    fn l(&self, i: usize, k: usize) -> T {
        self.data[self.start[i] + k - self.first[i]]
    }

    fn permute(&self, x: &[T]) -> Vec<T> {
        self.perm.iter().map(|&o| x[o]).collect()
    }

    fn unpermute(&self, y: &[T]) -> DVector<T> {
        let mut x = DVector::zeros(self.n);
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    fn forward(&self, y: &mut [T]) {
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let mut s = y[i];
            for (k, &lk) in (fi..i).zip(row) {
                s -= lk * y[k];
            }
            y[i] = s / row[i - fi];
        }
    }

    fn backward(&self, y: &mut [T]) {
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let xi = y[i] / row[i - fi];
            y[i] = xi;
            for (k, &lk) in (fi..i).zip(row) {
                y[k] -= lk.conjugate() * xi;
            }
        }
    }

    /// `Q x = L^H P x`.
    pub fn q_mul(&self, x: &DVector<T>) -> DVector<T> {
        let px = self.permute(x.as_slice());
        let mut out = DVector::zeros(self.n);
        for i in 0..self.n {
            let fi = self.first[i];
            for k in fi..=i {
                out[k] += self.l(i, k).conjugate() * px[i];
            }
        }
        out
    }

    /// `Q^{-H} y = L^{-1} P y`.
    pub fn q_inv_adjoint(&self, y: &DVector<T>) -> DVector<T> {
        let mut w = self.permute(y.as_slice());
        self.forward(&mut w);
        DVector::from_vec(w)
    }

    /// `Q^{-1} w = P^T L^{-H} w`.
    pub fn q_inv(&self, w: &DVector<T>) -> DVector<T> {
        let mut v = w.as_slice().to_vec();
        self.backward(&mut v);
        self.unpermute(&v)
    }

    /// `R^{-1} y`.
    pub fn solve(&self, y: &DVector<T>) -> DVector<T> {
        let mut w = self.permute(y.as_slice());
        self.forward(&mut w);
        self.backward(&mut w);
        self.unpermute(&w)
    }
}

/// Banded LU with partial pivoting, after an RCM reordering.
#[derive(Debug, Clone)]
pub struct BandLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    perm: Vec<usize>,
    rows: Vec<T>,
    mult: Vec<T>,
    piv: Vec<usize>,
    cond_est: f64,
}

impl<T: Field> BandLu<T> {
    pub fn new(a: &CsrMatrix<T>, perm: &[usize]) -> Result<Self> {
        check_dim("band LU (square)", a.nrows(), a.ncols())?;
        let n = a.nrows();
        let inv = inverse_perm(perm);
        let (mut kl, mut ku) = (0usize, 0usize);
        for (i, j, _) in a.triplets() {
            let (pi, pj) = (inv[i], inv[j]);
            if pi > pj {
                kl = kl.max(pi - pj);
            } else {
                ku = ku.max(pj - pi);
            }
        }
        let width = 2 * kl + ku + 1;
        let mut rows = vec![T::zero(); n * width];
        let off = |i: usize, c: usize| i * width + (c + kl - i);
        for (i, j, v) in a.triplets() {
            let (pi, pj) = (inv[i], inv[j]);
            rows[off(pi, pj)] += v;
        }
        let mut mult = vec![T::zero(); n * kl.max(1)];
        let mut piv = vec![0usize; n];
        let amax = rows.iter().map(|v| v.modulus()).fold(0.0, f64::max);
        let mut umax = 0.0f64;
        let mut umin = f64::INFINITY;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = rows[off(k, k)].modulus();
            for i in k + 1..=last {
                let m = rows[off(i, k)].modulus();
                if m > best {
                    best = m;
                    p = i;
                }
            }
            piv[k] = p;
            if best == 0.0 || best <= 1e-300 {
                return Err(Error::Singular {
                    what: "operator",
                    cond: f64::INFINITY,
                });
            }
            let cend = (k + kl + ku).min(n - 1);
            if p != k {
                for c in k..=cend {
                    rows.swap(off(k, c), off(p, c));
                }
            }
            let pivot = rows[off(k, k)];
            umax = umax.max(best);
            umin = umin.min(best);
            for i in k + 1..=last {
                let m = rows[off(i, k)] / pivot;
                mult[k * kl.max(1) + (i - k - 1)] = m;
                rows[off(i, k)] = T::zero();
                if m != T::zero() {
                    for c in k + 1..=cend {
                        let u = rows[off(k, c)];
                        rows[off(i, c)] -= m * u;
                    }
                }
            }
        }
        let cond_est = if n == 0 { 1.0 } else { amax.max(umax) / umin };
        if cond_est > 1e15 {
            return Err(Error::Singular {
                what: "operator",
                cond: cond_est,
            });
        }
        Ok(BandLu {
            n,
            kl,
            ku,
            width,
            perm: perm.to_vec(),
            rows,
            mult,
            piv,
            cond_est,
        })
    }

    /// Crude condition estimate from the pivot spread.
    pub fn cond_estimate(&self) -> f64 {
        self.cond_est
    }

    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        let n = self.n;
        let (kl, ku, w) = (self.kl, self.ku, self.width);
        let mut y: Vec<T> = self.perm.iter().map(|&o| b[o]).collect();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                y.swap(k, p);
            }
            let yk = y[k];
            for i in k + 1..=(k + kl).min(n.saturating_sub(1)) {
                y[i] -= self.mult[k * kl.max(1) + (i - k - 1)] * yk;
            }
        }
        for k in (0..n).rev() {
            let mut s = y[k];
            let cend = (k + kl + ku).min(n - 1);
            for c in k + 1..=cend {
                s -= self.rows[k * w + (c + kl - k)] * y[c];
            }
            y[k] = s / self.rows[k * w + kl];
        }
        let mut x = DVector::zeros(n);
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplace_2d(m: usize) -> CsrMatrix<f64> {
        let n = m * m;
        let mut t = Vec::new();
        for i in 0..m {
            for j in 0..m {
                let p = i * m + j;
                t.push((p, p, 4.5));
                if i + 1 < m {
                    t.push((p, p + m, -1.0));
                    t.push((p + m, p, -1.0));
                }
                if j + 1 < m {
                    t.push((p, p + 1, -1.0));
                    t.push((p + 1, p, -1.0));
                }
            }
        }
        CsrMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn rcm_is_permutation() {
        let a = laplace_2d(7);
        let mut p = rcm(&a.symmetric_pattern());
        p.sort_unstable();
        assert_eq!(p, (0..49).collect::<Vec<_>>());
    }

    #[test]
    fn cholesky_factor_identity() {
        let r = laplace_2d(6);
        let ch = ProfileCholesky::new(&r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DVector::from_fn(36, |_, _| rng.random::<f64>() - 0.5);
        let qx = ch.q_mul(&x);
        let xrx = x.dot(&r.mul_vec(&x).unwrap());
        assert!((qx.norm_squared() - xrx).abs() < 1e-12 * xrx);
        let y = r.mul_vec(&x).unwrap();
        assert!((ch.solve(&y) - &x).norm() < 1e-12 * x.norm());
        assert!((ch.q_inv(&ch.q_mul(&x)) - &x).norm() < 1e-12 * x.norm());
    }

    #[test]
    fn cholesky_hermitian_complex() {
        let d = DMatrix::from_fn(5, 5, |i, j| Complex64::new((i + j) as f64 * 0.1, i as f64 - j as f64));
        let h = &d * d.adjoint() + DMatrix::identity(5, 5) * Complex64::new(2.0, 0.0);
        let r = CsrMatrix::from_dense(&h);
        let ch = ProfileCholesky::new(&r).unwrap();
        let x = DVector::from_fn(5, |i, _| Complex64::new(1.0, i as f64));
        let lhs = ch.q_mul(&x).norm_squared();
        let rhs = x.dotc(&(&h * &x)).re;
        assert!((lhs - rhs).abs() < 1e-12 * rhs);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let r = CsrMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert!(matches!(
            ProfileCholesky::new(&r),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn band_lu_needs_pivoting() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 2.0, 0.0, 3.0, 1.0]);
        let s = CsrMatrix::from_dense(&a);
        let lu = BandLu::new(&s, &[0, 1, 2]).unwrap();
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = lu.solve(&b);
        assert!((&a * x - b).norm() < 1e-14);
    }

    #[test]
    fn band_lu_random_sparse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 60;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, Complex64::new(0.3 + rng.random::<f64>(), rng.random::<f64>())));
            for _ in 0..3 {
                let j = rng.random_range(0..n);
                t.push((i, j, Complex64::new(rng.random::<f64>() - 0.5, 0.0)));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t).unwrap();
        let perm = rcm(&a.symmetric_pattern());
        let lu = BandLu::new(&a, &perm).unwrap();
        let b = DVector::from_fn(n, |i, _| Complex64::new(i as f64, 1.0));
        let x = lu.solve(&b);
        let r = a.mul_vec(&x).unwrap() - &b;
        assert!(r.norm() < 1e-10 * b.norm());
    }

    #[test]
    fn band_lu_singular() {
        let s = CsrMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));
        assert!(matches!(BandLu::new(&s, &[0, 1]), Err(Error::Singular { .. })));
    }
}
