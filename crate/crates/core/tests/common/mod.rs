#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchmor::bench::{self, BenchmarkSpec, Family};
use sketchmor::io::AnySystem;
use sketchmor::system::AffineParametricSystem;
use sketchmor::{Complex64, Field};

pub fn coercive(n: usize, p: usize, seed: u64) -> AffineParametricSystem<f64> {
    let mut spec = BenchmarkSpec::new(Family::CoerciveDiffusion, n, seed);
    spec.p = p;
    spec.m_a = p + 1;
    match bench::generate(&spec).unwrap() {
        AnySystem::Real(s) => s,
        AnySystem::Complex(_) => unreachable!(),
    }
}

pub fn noncoercive(n: usize, seed: u64) -> AffineParametricSystem<Complex64> {
    match bench::generate(&BenchmarkSpec::new(Family::NoncoerciveShifted, n, seed)).unwrap() {
        AnySystem::Complex(s) => s,
        AnySystem::Real(_) => unreachable!(),
    }
}

pub fn snapshots<T: Field>(sys: &AffineParametricSystem<T>, count: usize, seed: u64) -> DMatrix<T> {
    let cols: Vec<DVector<T>> = sys
        .params
        .sample(count, seed)
        .iter()
        .map(|m| sys.truth_solve(m).unwrap())
        .collect();
    DMatrix::from_columns(&cols)
}

pub fn random_vec<T: Field>(n: usize, rng: &mut ChaCha8Rng) -> DVector<T> {
    DVector::from_fn(n, |_, _| {
        let z = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        if T::IS_COMPLEX {
            T::from_c64(z).unwrap()
        } else {
            T::from_re(z.re)
        }
    })
}

pub fn random_mat<T: Field>(n: usize, m: usize, seed: u64) -> DMatrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<DVector<T>> = (0..m).map(|_| random_vec(n, &mut rng)).collect();
    DMatrix::from_columns(&cols)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
