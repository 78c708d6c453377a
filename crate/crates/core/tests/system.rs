mod common;

use common::{coercive, noncoercive, random_mat, rel};
use nalgebra::DVector;
use sketchmor::expr::parse_coeff;
use sketchmor::io::{read_system, write_system, AnySystem};
use sketchmor::system::{AffineOperator, AffineParametricSystem};
use sketchmor::Field;

fn riesz<T: Field>(sys: &AffineParametricSystem<T>) {
    let x = random_mat::<T>(sys.n(), 20, 1);
    for c in x.column_iter() {
        let c = c.into_owned();
        let y = sys.ip.matrix().mul_vec(&c).unwrap();
        assert!(rel(sys.ip.dual_norm(&y).unwrap(), sys.ip.norm(&c).unwrap()) < 1e-10);
    }
}

#[test]
fn riesz_duality() {
    riesz(&coercive(300, 2, 1));
    riesz(&noncoercive(300, 2));
}

fn truth_residual<T: Field>(sys: &AffineParametricSystem<T>) {
    for mu in sys.params.sample(10, 3) {
        let u = sys.truth_solve(&mu).unwrap();
        let r = sys.ip.dual_norm(&sys.residual(&u, &mu).unwrap()).unwrap();
        assert!(r <= 1e-10 * sys.ip.dual_norm(&sys.rhs(&mu).unwrap()).unwrap());
    }
}

#[test]
fn truth_solve_has_negligible_residual() {
    truth_residual(&coercive(500, 3, 4));
    truth_residual(&noncoercive(500, 5));
}

#[test]
fn operator_is_linear_in_its_coefficients() {
    let sys = coercive(100, 1, 2);
    let term = sys.a.terms()[0].clone();
    let op = AffineOperator::new(vec![(term, parse_coeff("mu[0]", 1).unwrap())]).unwrap();
    let x = random_mat::<f64>(100, 3, 9);
    for c in x.column_iter() {
        let c = c.into_owned();
        let once = op.apply(&[0.7], &c).unwrap();
        let twice = op.apply(&[1.4], &c).unwrap();
        assert!((twice - once * 2.0).amax() <= 1e-14 * c.amax().max(1.0) * 10.0);
    }
}

fn sandwich<T: Field>(sys: &AffineParametricSystem<T>) {
    let mu = sys.params.sample(1, 7).remove(0);
    let (alpha, beta) = sys.spectral_bounds(&mu, 4096).unwrap();
    let a = sys.operator(&mu).unwrap();
    let x = random_mat::<T>(sys.n(), 100, 8);
    for c in x.column_iter() {
        let c = c.into_owned();
        let ratio = sys.ip.dual_norm(&a.mul_vec(&c).unwrap()).unwrap() / sys.ip.norm(&c).unwrap();
        assert!(ratio >= alpha * (1.0 - 1e-10) && ratio <= beta * (1.0 + 1e-10));
    }
}

#[test]
fn spectral_bounds_sandwich() {
    sandwich(&coercive(120, 2, 6));
    sandwich(&noncoercive(120, 6));
}

#[test]
fn dense_limit_is_enforced() {
    let sys = coercive(200, 1, 0);
    assert!(sys.spectral_bounds(&[0.5], 100).is_err());
}

#[test]
fn system_bundle_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let sys = noncoercive(64, 3);
    write_system(dir.path(), &AnySystem::Complex(sys.clone())).unwrap();
    let AnySystem::Complex(back) = read_system(dir.path()).unwrap() else {
        panic!("field changed");
    };
    assert_eq!(back.params, sys.params);
    for mu in sys.params.sample(3, 1) {
        let x = DVector::from_fn(64, |i, _| sketchmor::Complex64::new(i as f64, 1.0));
        assert!((back.a.apply(&mu, &x).unwrap() - sys.a.apply(&mu, &x).unwrap()).norm() < 1e-10);
        assert!((back.rhs(&mu).unwrap() - sys.rhs(&mu).unwrap()).norm() < 1e-14);
    }
}
