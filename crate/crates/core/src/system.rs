//! Affine parameter-dependent systems `A(µ) u = b(µ)` with an inner product on
//! the solution space.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::expr::CoeffExpr;
use crate::factor::{rcm, BandLu, ProfileCholesky};
use crate::sparse::{CsrMatrix, UnionPattern};
use crate::Field;

/// Matrices above this size are never densified by the oracles.
pub const DEFAULT_DENSE_LIMIT: usize = 4096;

/// Axis-aligned parameter domain.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParameterBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParameterBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim("parameter box", lower.len(), upper.len())?;
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidArgument("parameter box needs finite lower <= upper".into()));
        }
        Ok(ParameterBox { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        mu.len() == self.dim()
            && mu
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(m, (l, u))| l <= m && m <= u)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    /// `count` i.i.d. uniform samples, reproducible from `seed`.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                self.lower
                    .iter()
                    .zip(&self.upper)
                    .map(|(&l, &u)| if u > l { rng.random_range(l..=u) } else { l })
                    .collect()
            })
            .collect()
    }
}

/// `A(µ) = Σ θ_i(µ) A_i` with sparse `A_i`.
#[derive(Debug, Clone)]
pub struct AffineOperator<T> {
    n: usize,
    mats: Vec<CsrMatrix<T>>,
    coeffs: Vec<CoeffExpr>,
    union: UnionPattern,
    perm: Vec<usize>,
}

impl<T: Field> AffineOperator<T> {
    pub fn new(terms: Vec<(CsrMatrix<T>, CoeffExpr)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument("affine operator needs at least one term".into()));
        }
        let n = terms[0].0.nrows();
        for (m, _) in &terms {
            check_dim("operator term rows", n, m.nrows())?;
            check_dim("operator term cols", n, m.ncols())?;
        }
        let (mats, coeffs): (Vec<_>, Vec<_>) = terms.into_iter().unzip();
        let refs: Vec<&CsrMatrix<T>> = mats.iter().collect();
        let union = UnionPattern::new(&refs);
        let mut adj = vec![Vec::new(); n];
        for i in 0..n {
            for &j in &union.indices[union.indptr[i]..union.indptr[i + 1]] {
                if i != j {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        let perm = rcm(&adj);
        Ok(AffineOperator {
            n,
            mats,
            coeffs,
            union,
            perm,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn terms(&self) -> &[CsrMatrix<T>] {
        &self.mats
    }

    pub fn coeffs(&self) -> &[CoeffExpr] {
        &self.coeffs
    }

    pub fn theta(&self, mu: &[f64]) -> Result<Vec<T>> {
        self.coeffs.iter().map(|c| c.eval_field(mu)).collect()
    }

    /// Assembled `A(µ)` on the union pattern of the terms.
    pub fn eval(&self, mu: &[f64]) -> Result<CsrMatrix<T>> {
        let th = self.theta(mu)?;
        let refs: Vec<&CsrMatrix<T>> = self.mats.iter().collect();
        Ok(self.union.combine(self.n, &refs, &th))
    }

    /// `A(µ) x` without assembling.
    pub fn apply(&self, mu: &[f64], x: &DVector<T>) -> Result<DVector<T>> {
        check_dim("operator apply", self.n, x.len())?;
        let th = self.theta(mu)?;
        let mut y = DVector::zeros(self.n);
        for (m, t) in self.mats.iter().zip(th) {
            y.axpy(t, &m.mul_vec(x)?, T::one());
        }
        Ok(y)
    }

    pub(crate) fn ordering(&self) -> &[usize] {
        &self.perm
    }
}

/// `v(µ) = Σ θ_i(µ) v_i` with dense `v_i`.
#[derive(Debug, Clone)]
pub struct AffineVector<T> {
    n: usize,
    vecs: Vec<DVector<T>>,
    coeffs: Vec<CoeffExpr>,
}

impl<T: Field> AffineVector<T> {
    pub fn new(terms: Vec<(DVector<T>, CoeffExpr)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument("affine vector needs at least one term".into()));
        }
        let n = terms[0].0.len();
        for (v, _) in &terms {
            check_dim("vector term length", n, v.len())?;
        }
        let (vecs, coeffs) = terms.into_iter().unzip();
        Ok(AffineVector { n, vecs, coeffs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.vecs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vecs.is_empty()
    }

    pub fn terms(&self) -> &[DVector<T>] {
        &self.vecs
    }

    pub fn coeffs(&self) -> &[CoeffExpr] {
        &self.coeffs
    }

    pub fn theta(&self, mu: &[f64]) -> Result<Vec<T>> {
        self.coeffs.iter().map(|c| c.eval_field(mu)).collect()
    }

    pub fn eval(&self, mu: &[f64]) -> Result<DVector<T>> {
        let th = self.theta(mu)?;
        let mut v = DVector::zeros(self.n);
        for (t, c) in self.vecs.iter().zip(th) {
            v.axpy(c, t, T::one());
        }
        Ok(v)
    }
}

type PinvFn<T> = Arc<dyn Fn(&DVector<T>) -> DVector<T> + Send + Sync>;

enum IpFactor<T> {
    Cholesky(ProfileCholesky<T>),
    User { q: CsrMatrix<T>, pinv: PinvFn<T> },
}

/// `⟨x, y⟩_U = y^H R_U x` together with a factor `Q^H Q = R_U`.
pub struct InnerProduct<T> {
    r: CsrMatrix<T>,
    factor: IpFactor<T>,
}

impl<T> fmt::Debug for InnerProduct<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.factor {
            IpFactor::Cholesky(_) => "cholesky",
            IpFactor::User { .. } => "user",
        };
        f.debug_struct("InnerProduct")
            .field("n", &self.r.nrows)
            .field("factor", &kind)
            .finish()
    }
}

fn probe_vec<T: Field>(n: usize, seed: u64) -> DVector<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(n, |_, _| {
        let re: f64 = rng.random::<f64>() - 0.5;
        let im: f64 = rng.random::<f64>() - 0.5;
        if T::IS_COMPLEX {
            T::from_c64(num_complex::Complex64::new(re, im)).unwrap()
        } else {
            T::from_re(re)
        }
    })
}

impl<T: Field> InnerProduct<T> {
    /// Factorizes a Hermitian positive-definite `R_U`.
    pub fn new(r: CsrMatrix<T>) -> Result<Self> {
        let defect = r.hermitian_defect();
        if defect > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "inner-product matrix is not Hermitian (defect {defect:.2e})"
            )));
        }
        let chol = ProfileCholesky::new(&r)?;
        Ok(InnerProduct {
            r,
            factor: IpFactor::Cholesky(chol),
        })
    }

    /// Uses a caller-supplied factor `Q` (`s x n`, possibly rectangular) and
    /// pseudo-inverse action `y -> R_U^† y`, e.g. for a semi-definite `R_U`.
    /// The factor is checked on random probes.
    pub fn with_factor(
        r: CsrMatrix<T>,
        q: CsrMatrix<T>,
        pinv: impl Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static,
    ) -> Result<Self> {
        check_dim("factor columns", r.ncols(), q.ncols())?;
        for s in 0..3 {
            let x = probe_vec::<T>(r.ncols(), 0x51ed + s);
            let lhs = q.mul_vec(&x)?.norm_squared();
            let rhs = x.dotc(&r.mul_vec(&x)?).real();
            if (lhs - rhs).abs() > 1e-12 * rhs.abs().max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidArgument("Q^H Q does not match R_U".into()));
            }
        }
        Ok(InnerProduct {
            r,
            factor: IpFactor::User {
                q,
                pinv: Arc::new(pinv),
            },
        })
    }

    pub fn n(&self) -> usize {
        self.r.nrows()
    }

    /// Row count of `Q`.
    pub fn s(&self) -> usize {
        match &self.factor {
            IpFactor::Cholesky(_) => self.n(),
            IpFactor::User { q, .. } => q.nrows(),
        }
    }

    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.r
    }

    pub fn cholesky(&self) -> Option<&ProfileCholesky<T>> {
        match &self.factor {
            IpFactor::Cholesky(c) => Some(c),
            IpFactor::User { .. } => None,
        }
    }

    /// `Q x`.
    pub fn q_mul(&self, x: &DVector<T>) -> Result<DVector<T>> {
        check_dim("Q x", self.n(), x.len())?;
        Ok(match &self.factor {
            IpFactor::Cholesky(c) => c.q_mul(x),
            IpFactor::User { q, .. } => q.mul_vec(x)?,
        })
    }

    /// `R_U^{-1} y` (or the user pseudo-inverse).
    pub fn solve(&self, y: &DVector<T>) -> Result<DVector<T>> {
        check_dim("R_U solve", self.n(), y.len())?;
        Ok(match &self.factor {
            IpFactor::Cholesky(c) => c.solve(y),
            IpFactor::User { pinv, .. } => pinv(y),
        })
    }

    /// `Q R_U^{-1} y`, the image of a dual vector in the factor space. Its
    /// Euclidean norm is `‖y‖_{U'}`.
    pub fn dual_map(&self, y: &DVector<T>) -> Result<DVector<T>> {
        check_dim("dual map", self.n(), y.len())?;
        Ok(match &self.factor {
            IpFactor::Cholesky(c) => c.q_inv_adjoint(y),
            IpFactor::User { q, pinv } => q.mul_vec(&pinv(y))?,
        })
    }

    pub fn q_mul_mat(&self, m: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.map_cols(m, self.s(), |c| self.q_mul(c))
    }

    pub fn dual_map_mat(&self, m: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.map_cols(m, self.s(), |c| self.dual_map(c))
    }

    pub fn solve_mat(&self, m: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.map_cols(m, self.n(), |c| self.solve(c))
    }

    fn map_cols(
        &self,
        m: &DMatrix<T>,
        rows: usize,
        f: impl Fn(&DVector<T>) -> Result<DVector<T>> + Sync,
    ) -> Result<DMatrix<T>> {
        let cols: Vec<DVector<T>> = (0..m.ncols())
            .into_par_iter()
            .map(|j| f(&m.column(j).into_owned()))
            .collect::<Result<_>>()?;
        let mut out = DMatrix::zeros(rows, m.ncols());
        for (j, c) in cols.into_iter().enumerate() {
            out.set_column(j, &c);
        }
        Ok(out)
    }

    /// `⟨x, y⟩_U = y^H R_U x`.
    pub fn inner(&self, x: &DVector<T>, y: &DVector<T>) -> Result<T> {
        Ok(y.dotc(&self.r.mul_vec(x)?))
    }

    pub fn norm(&self, x: &DVector<T>) -> Result<f64> {
        Ok(self.inner(x, x)?.real().max(0.0).sqrt())
    }

    /// `sqrt(y^H R_U^{-1} y)` via one solve with the factor.
    pub fn dual_norm(&self, y: &DVector<T>) -> Result<f64> {
        Ok(self.dual_map(y)?.norm())
    }
}

/// `A(µ) u(µ) = b(µ)` with optional output functional `l(µ)`.
#[derive(Debug, Clone)]
pub struct AffineParametricSystem<T> {
    pub a: AffineOperator<T>,
    pub b: AffineVector<T>,
    pub l: Option<AffineVector<T>>,
    pub ip: Arc<InnerProduct<T>>,
    pub params: ParameterBox,
}

impl<T: Field> AffineParametricSystem<T> {
    pub fn new(
        a: AffineOperator<T>,
        b: AffineVector<T>,
        l: Option<AffineVector<T>>,
        ip: Arc<InnerProduct<T>>,
        params: ParameterBox,
    ) -> Result<Self> {
        let n = a.n();
        check_dim("rhs length", n, b.n())?;
        check_dim("inner product size", n, ip.n())?;
        if let Some(l) = &l {
            check_dim("output length", n, l.n())?;
        }
        let p = params.dim();
        let all = a
            .coeffs()
            .iter()
            .chain(b.coeffs())
            .chain(l.iter().flat_map(|l| l.coeffs()));
        for c in all {
            if let Some(i) = c.max_mu() {
                if i >= p {
                    return Err(Error::MuIndexOutOfRange { index: i, dim: p });
                }
            }
            if c.is_complex() && !T::IS_COMPLEX {
                return Err(Error::InvalidArgument(format!(
                    "coefficient `{}` uses j in a real system",
                    c.source()
                )));
            }
        }
        Ok(AffineParametricSystem { a, b, l, ip, params })
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    pub fn p(&self) -> usize {
        self.params.dim()
    }

    fn check_mu(&self, mu: &[f64]) -> Result<()> {
        check_dim("parameter", self.p(), mu.len())
    }

    pub fn operator(&self, mu: &[f64]) -> Result<CsrMatrix<T>> {
        self.check_mu(mu)?;
        self.a.eval(mu)
    }

    pub fn rhs(&self, mu: &[f64]) -> Result<DVector<T>> {
        self.check_mu(mu)?;
        self.b.eval(mu)
    }

    pub fn output(&self, mu: &[f64]) -> Result<DVector<T>> {
        self.check_mu(mu)?;
        match &self.l {
            Some(l) => l.eval(mu),
            None => Err(Error::InvalidArgument("system has no output functional".into())),
        }
    }

    /// `r(x; µ) = b(µ) − A(µ) x`.
    pub fn residual(&self, x: &DVector<T>, mu: &[f64]) -> Result<DVector<T>> {
        self.check_mu(mu)?;
        check_dim("residual input", self.n(), x.len())?;
        let ax = self.a.apply(mu, x)?;
        Ok(self.b.eval(mu)? - ax)
    }

    pub fn truth_solve(&self, mu: &[f64]) -> Result<DVector<T>> {
        let a = self.operator(mu)?;
        let b = self.b.eval(mu)?;
        let lu = BandLu::new(&a, self.a.ordering())?;
        let mut x = lu.solve(&b);
        let bn = self.ip.dual_norm(&b)?;
        if bn == 0.0 {
            return Ok(x);
        }
        let mut rel = f64::INFINITY;
        for _ in 0..3 {
            let r = &b - a.mul_vec(&x)?;
            rel = self.ip.dual_norm(&r)? / bn;
            if rel <= 1e-13 {
                break;
            }
            x += lu.solve(&r);
        }
        if !x.iter().all(|v| v.is_finite()) || rel > 1e-10 {
            let r = &b - a.mul_vec(&x)?;
            rel = self.ip.dual_norm(&r)? / bn;
            if !(rel <= 1e-10) {
                return Err(Error::Singular {
                    what: "operator",
                    cond: lu.cond_estimate(),
                });
            }
        }
        Ok(x)
    }

    /// Extreme singular values of `Q^{-H} A(µ) Q^{-1}` (dense oracle).
    pub fn spectral_bounds(&self, mu: &[f64], dense_limit: usize) -> Result<(f64, f64)> {
        let n = self.n();
        if n > dense_limit {
            return Err(Error::DenseLimit { n, limit: dense_limit });
        }
        let chol = self
            .ip
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("spectral bounds need a Cholesky factor".into()))?;
        let a = self.operator(mu)?;
        let cols: Vec<DVector<T>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut e = DVector::zeros(n);
                e[j] = T::one();
                let v = chol.q_inv(&e);
                chol.q_inv_adjoint(&a.mul_vec(&v).unwrap())
            })
            .collect();
        let m = DMatrix::from_columns(&cols);
        let sv = m.singular_values();
        let max = sv.max();
        let min = sv.min();
        Ok((min, max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_coeff;

    fn small_system() -> AffineParametricSystem<f64> {
        let n = 5;
        let mut t0 = Vec::new();
        let mut t1 = Vec::new();
        for i in 0..n {
            t0.push((i, i, 2.0 + i as f64));
            t1.push((i, (i + 1) % n, 0.3));
        }
        let a0 = CsrMatrix::from_triplets(n, n, &t0).unwrap();
        let a1 = CsrMatrix::from_triplets(n, n, &t1).unwrap();
        let a = AffineOperator::new(vec![
            (a0, parse_coeff("1", 2).unwrap()),
            (a1, parse_coeff("mu[0]*mu[1]", 2).unwrap()),
        ])
        .unwrap();
        let b = AffineVector::new(vec![(DVector::from_element(n, 1.0), parse_coeff("mu[1]", 2).unwrap())]).unwrap();
        let d: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let ip = Arc::new(InnerProduct::new(CsrMatrix::from_diagonal(&d)).unwrap());
        AffineParametricSystem::new(a, b, None, ip, ParameterBox::new(vec![0.0, 1.0], vec![1.0, 2.0]).unwrap()).unwrap()
    }

    #[test]
    fn truth_solve_residual() {
        let s = small_system();
        let mu = [0.7, 1.3];
        let u = s.truth_solve(&mu).unwrap();
        let r = s.residual(&u, &mu).unwrap();
        assert!(s.ip.dual_norm(&r).unwrap() <= 1e-10 * s.ip.dual_norm(&s.rhs(&mu).unwrap()).unwrap());
        let r0 = s.residual(&DVector::zeros(5), &mu).unwrap();
        assert_eq!(r0, s.rhs(&mu).unwrap());
    }

    #[test]
    fn dual_norm_diagonal() {
        let s = small_system();
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, 1.0]);
        let expect: f64 = y.iter().enumerate().map(|(i, v)| v * v / (1.0 + i as f64)).sum::<f64>().sqrt();
        assert!((s.ip.dual_norm(&y).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn sampling_in_box() {
        let b = ParameterBox::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        let a = b.sample(50, 3);
        assert!(a.iter().all(|m| b.contains(m)));
        assert_eq!(a, b.sample(50, 3));
    }

    #[test]
    fn mismatched_mu() {
        let s = small_system();
        assert!(matches!(s.rhs(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn user_factor_rectangular() {
        let r = CsrMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
        // rectangular Q with Q^T Q = R: rows (1,1), (1,0), (0,1)
        let q = CsrMatrix::from_dense(&DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 0.0, 0.0, 1.0]));
        let rd = r.to_dense();
        let inv = rd.clone().try_inverse().unwrap();
        let pinv = inv.clone();
        let ip = InnerProduct::with_factor(r, q, move |y| &pinv * y).unwrap();
        assert_eq!(ip.s(), 3);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let direct = y.dot(&(&inv * &y)).sqrt();
        assert!((ip.dual_norm(&y).unwrap() - direct).abs() < 1e-14);
    }
}
