//! Synthetic 1-D benchmark families at desk scale.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{parse_coeff, CoeffExpr};
use crate::io::AnySystem;
use crate::sparse::CsrMatrix;
use crate::system::{AffineOperator, AffineParametricSystem, AffineVector, InnerProduct, ParameterBox};
use crate::{Complex64, Field};

pub const MAX_N: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    CoerciveDiffusion,
    NoncoerciveShifted,
    SuperpositionTransport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub family: Family,
    pub n: usize,
    /// Parameter dimension. Fixed to 2 for the noncoercive and
    /// superposition families.
    #[serde(default = "one")]
    pub p: usize,
    /// Number of operator terms (coercive family only).
    #[serde(default = "one")]
    pub m_a: usize,
    #[serde(default)]
    pub seed: u64,
    /// Noncoercive: requested lower bound on `β/α` at [`witness_mu`].
    #[serde(default = "default_knob")]
    pub knob: f64,
}

fn one() -> usize {
    1
}

fn default_knob() -> f64 {
    100.0
}

impl BenchmarkSpec {
    pub fn new(family: Family, n: usize, seed: u64) -> Self {
        BenchmarkSpec {
            family,
            n,
            p: if family == Family::CoerciveDiffusion { 1 } else { 2 },
            m_a: if family == Family::CoerciveDiffusion { 2 } else { 1 },
            seed,
            knob: default_knob(),
        }
    }
}

/// `(1/h) tridiag(-1, 2, -1)` on `n` interior nodes of the unit interval,
/// with per-element conductivities `kappa` (`n + 1` elements).
fn stiffness(n: usize, kappa: &[f64]) -> CsrMatrix<f64> {
    let h = 1.0 / (n + 1) as f64;
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        t.push((i, i, (kappa[i] + kappa[i + 1]) / h));
        if i + 1 < n {
            t.push((i, i + 1, -kappa[i + 1] / h));
            t.push((i + 1, i, -kappa[i + 1] / h));
        }
    }
    CsrMatrix::from_triplets(n, n, &t).expect("valid pattern")
}

fn lumped_mass(n: usize) -> CsrMatrix<f64> {
    let h = 1.0 / (n + 1) as f64;
    CsrMatrix::from_diagonal(&vec![h; n])
}

fn nodes(n: usize) -> impl Iterator<Item = f64> {
    let h = 1.0 / (n + 1) as f64;
    (1..=n).map(move |i| i as f64 * h)
}

/// `R_U = K + M`: the discrete `H^1` inner product.
pub fn h1_inner_product(n: usize) -> Result<InnerProduct<f64>> {
    let k = stiffness(n, &vec![1.0; n + 1]);
    InnerProduct::new(add(&k, &lumped_mass(n)))
}

fn add(a: &CsrMatrix<f64>, b: &CsrMatrix<f64>) -> CsrMatrix<f64> {
    let mut t = a.triplets();
    t.extend(b.triplets());
    CsrMatrix::from_triplets(a.nrows(), a.ncols(), &t).expect("same shape")
}

fn mean_functional(n: usize) -> DVector<f64> {
    let h = 1.0 / (n + 1) as f64;
    DVector::from_element(n, h)
}

fn coeff(s: &str, p: usize) -> CoeffExpr {
    parse_coeff(s, p).expect("generator expression")
}

/// Eigenvalues of `M^{-1} K` for the unit-conductivity chain.
pub fn chain_eigenvalue(n: usize, m: usize) -> f64 {
    let h = 1.0 / (n + 1) as f64;
    let s = (m as f64 * PI * h / 2.0).sin();
    4.0 * s * s / (h * h)
}

/// Parameter at which the noncoercive family attains `β/α ≥ knob`: first
/// resonance, smallest damping.
pub fn witness_mu(spec: &BenchmarkSpec) -> Vec<f64> {
    let l1 = chain_eigenvalue(spec.n, 1);
    vec![l1, damping_floor(spec)]
}

fn damping_floor(spec: &BenchmarkSpec) -> f64 {
    0.9 * (chain_eigenvalue(spec.n, 1) + 1.0) / spec.knob
}

pub fn generate(spec: &BenchmarkSpec) -> Result<AnySystem> {
    if spec.n < 4 || spec.n > MAX_N {
        return Err(Error::InvalidArgument(format!("n = {} outside [4, {MAX_N}]", spec.n)));
    }
    match spec.family {
        Family::CoerciveDiffusion => coercive(spec).map(AnySystem::Real),
        Family::NoncoerciveShifted => noncoercive(spec).map(AnySystem::Complex),
        Family::SuperpositionTransport => superposition(spec).map(AnySystem::Real),
    }
}

/// `A(µ) = A_0 + Σ_i µ_{(i-1) mod p} A_i`: `A_0` is a unit-conductivity
/// stiffness plus mass, `A_i` the stiffness restricted to the `i`-th of
/// `m_A − 1` subdomains with random conductivities in `[0.5, 1.5]`.
fn coercive(spec: &BenchmarkSpec) -> Result<AffineParametricSystem<f64>> {
    let (n, p) = (spec.n, spec.p.max(1));
    let m = spec.m_a.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ones = vec![1.0; n + 1];
    let mut terms = vec![(add(&stiffness(n, &ones), &lumped_mass(n)), coeff("1", p))];
    let parts = m - 1;
    for i in 0..parts {
        let (lo, hi) = (i * (n + 1) / parts, (i + 1) * (n + 1) / parts);
        let kappa: Vec<f64> = (0..=n)
            .map(|e| if (lo..hi).contains(&e) { rng.random_range(0.5..1.5) } else { 0.0 })
            .collect();
        terms.push((stiffness(n, &kappa), coeff(&format!("mu[{}]", i % p), p)));
    }
    let load = DVector::from_iterator(n, nodes(n).map(|x| (1.0 + x) / (n + 1) as f64));
    let b = AffineVector::new(vec![(load, coeff("1", p))])?;
    let l = AffineVector::new(vec![(mean_functional(n), coeff("1", p))])?;
    AffineParametricSystem::new(
        AffineOperator::new(terms)?,
        b,
        Some(l),
        Arc::new(h1_inner_product(n)?),
        ParameterBox::new(vec![0.1; p], vec![1.0; p])?,
    )
}

/// `A(µ) = K − µ_0 M + j µ_1 M` with `R_U = K + M`. `µ_0` sweeps the first
/// two resonances; the damping floor is set from `knob`.
fn noncoercive(spec: &BenchmarkSpec) -> Result<AffineParametricSystem<Complex64>> {
    let n = spec.n;
    if spec.knob <= 1.0 {
        return Err(Error::InvalidArgument("knob must exceed 1".into()));
    }
    let c = |m: &CsrMatrix<f64>| m.map(Complex64::from);
    let k = stiffness(n, &vec![1.0; n + 1]);
    let mass = lumped_mass(n);
    let terms = vec![
        (c(&k), coeff("1", 2)),
        (c(&mass), coeff("-mu[0]", 2)),
        (c(&mass), coeff("j*mu[1]", 2)),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let h = 1.0 / (n + 1) as f64;
    let x0: f64 = rng.random_range(0.2..0.8);
    let load = DVector::from_iterator(
        n,
        nodes(n).map(|x| Complex64::from(h * (-((x - x0) / 0.05).powi(2)).exp())),
    );
    let b = AffineVector::new(vec![(load, coeff("1", 2))])?;
    let l = AffineVector::new(vec![(mean_functional(n).map(Complex64::from), coeff("1", 2))])?;
    let ip = InnerProduct::new(c(&add(&k, &mass)))?;
    let (l2, l3) = (chain_eigenvalue(n, 2), chain_eigenvalue(n, 3));
    let d = damping_floor(spec);
    AffineParametricSystem::new(
        AffineOperator::new(terms)?,
        b,
        Some(l),
        Arc::new(ip),
        ParameterBox::new(vec![0.0, d], vec![0.5 * (l2 + l3), 10.0 * d])?,
    )
}

/// Shifts per component of the superposition family.
pub const SHIFTS: usize = 12;
const WIDTH: f64 = 0.04;

fn profile(component: usize, center: f64, x: f64) -> f64 {
    let g = (-((x - center) / 0.06).powi(2)).exp();
    match component {
        0 => g,
        _ => g * (12.0 * PI * x).sin(),
    }
}

fn shift_center(s: usize) -> f64 {
    0.1 + 0.8 * s as f64 / (SHIFTS - 1) as f64
}

/// Weight of shift `s` at parameter value `t ∈ [0, 1]`.
fn weight_expr(component: usize, s: usize) -> String {
    let c = (s as f64) / (SHIFTS - 1) as f64;
    format!("exp(-((mu[{component}] - {c:?}) / {WIDTH:?})^2)")
}

/// Components `u^{(i)}(µ) = Σ_s g_{i,s}(µ) φ_{i,s}` of the superposition
/// family; the truth solution is their sum.
pub fn superposition_components(spec: &BenchmarkSpec, mu: &[f64]) -> Result<Vec<DVector<f64>>> {
    let n = spec.n;
    let amps = amplitudes(spec);
    (0..2)
        .map(|i| {
            let mut u = DVector::zeros(n);
            for s in 0..SHIFTS {
                let g = coeff(&weight_expr(i, s), 2).eval_field::<f64>(mu)?;
                let phi = DVector::from_iterator(n, nodes(n).map(|x| profile(i, shift_center(s), x)));
                u += phi * (g * amps[i * SHIFTS + s]);
            }
            Ok(u)
        })
        .collect()
}

fn amplitudes(spec: &BenchmarkSpec) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..2 * SHIFTS).map(|_| rng.random_range(0.5..1.5)).collect()
}

/// Constant `A = K + M`; `b(µ)` is assembled so that `u(µ)` is a sum of two
/// profiles translated by `µ_0` and `µ_1`.
fn superposition(spec: &BenchmarkSpec) -> Result<AffineParametricSystem<f64>> {
    let n = spec.n;
    let a = add(&stiffness(n, &vec![1.0; n + 1]), &lumped_mass(n));
    let amps = amplitudes(spec);
    let mut b_terms = Vec::new();
    for i in 0..2 {
        for s in 0..SHIFTS {
            let phi = DVector::from_iterator(n, nodes(n).map(|x| profile(i, shift_center(s), x)));
            let bi = a.mul_vec(&phi)? * amps[i * SHIFTS + s];
            b_terms.push((bi, coeff(&weight_expr(i, s), 2)));
        }
    }
    AffineParametricSystem::new(
        AffineOperator::new(vec![(a.clone(), coeff("1", 2))])?,
        AffineVector::new(b_terms)?,
        Some(AffineVector::new(vec![(mean_functional(n), coeff("1", 2))])?),
        Arc::new(InnerProduct::new(a)?),
        ParameterBox::new(vec![0.0, 0.0], vec![1.0, 1.0])?,
    )
}

/// Converts a real system to the complex field.
pub fn complexify(sys: &AffineParametricSystem<f64>) -> Result<AffineParametricSystem<Complex64>> {
    let c = |m: &CsrMatrix<f64>| m.map(Complex64::from);
    let a = AffineOperator::new(
        sys.a.terms().iter().zip(sys.a.coeffs()).map(|(m, e)| (c(m), e.clone())).collect(),
    )?;
    let v = |av: &AffineVector<f64>| {
        AffineVector::new(
            av.terms()
                .iter()
                .zip(av.coeffs())
                .map(|(t, e)| (t.map(<Complex64 as Field>::from_re), e.clone()))
                .collect(),
        )
    };
    AffineParametricSystem::new(
        a,
        v(&sys.b)?,
        sys.l.as_ref().map(v).transpose()?,
        Arc::new(InnerProduct::new(c(sys.ip.matrix()))?),
        sys.params.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_eigenvalues_match_dense() {
        let n = 12;
        let k = stiffness(n, &vec![1.0; n + 1]).to_dense();
        let h = 1.0 / (n + 1) as f64;
        let mut ev: Vec<f64> = (k / h).symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for m in 1..=n {
            assert!((ev[m - 1] - chain_eigenvalue(n, m)).abs() < 1e-8 * ev[m - 1]);
        }
    }

    #[test]
    fn superposition_truth_is_sum_of_components() {
        let spec = BenchmarkSpec::new(Family::SuperpositionTransport, 64, 3);
        let AnySystem::Real(sys) = generate(&spec).unwrap() else { panic!() };
        let mu = [0.37, 0.81];
        let u = sys.truth_solve(&mu).unwrap();
        let c = superposition_components(&spec, &mu).unwrap();
        assert!((u - &c[0] - &c[1]).norm() < 1e-9 * c[0].norm());
    }
}
