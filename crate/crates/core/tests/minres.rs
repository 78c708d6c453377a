mod common;

use common::{coercive, noncoercive, snapshots};
use nalgebra::DMatrix;
use sketchmor::dense::{cond, thin_qr};
use sketchmor::embeddings::{omega_exact, EmbeddingKind, UEmbedding};
use sketchmor::minres::{
    greedy_rb, minres_classic, minres_sketched, online_batch, quasiopt_constants, u_orthonormal, GammaPolicy,
    GreedyOptions,
};
use sketchmor::sketch::{self, Sketched};
use sketchmor::system::AffineParametricSystem;
use sketchmor::Field;

fn quasi_optimality<T: Field>(sys: &AffineParametricSystem<T>) {
    let ur = u_orthonormal(sys, &snapshots(sys, 6, 1)).unwrap();
    let theta = UEmbedding::draw(EmbeddingKind::Srht, 128, 2, sys.ip.clone()).unwrap();
    let sk = sketch::build(sys, &ur, &theta).unwrap();
    let rq = sys.ip.q_mul_mat(&ur).unwrap();
    for mu in sys.params.sample(10, 3) {
        let u = sys.truth_solve(&mu).unwrap();
        let c = quasiopt_constants(sys, &ur, &mu, &u, Some(&theta)).unwrap();
        let ur_a = &ur * minres_sketched(&sk, &mu).unwrap().coords;
        let err = sys.ip.norm(&(&u - ur_a)).unwrap();
        // U-orthogonal projection onto span(U_r)
        let coef = rq.adjoint() * sys.ip.q_mul(&u).unwrap();
        let best = sys.ip.norm(&(&u - &ur * coef)).unwrap();
        let factor = c.iota_theta.unwrap() / c.zeta_theta.unwrap();
        assert!(err <= factor * best * (1.0 + 1e-8) + 1e-14, "{err} > {factor} * {best}");
    }
}

#[test]
fn sketched_minres_is_quasi_optimal() {
    quasi_optimality(&coercive(400, 2, 3));
    quasi_optimality(&noncoercive(400, 4));
}

fn condition_bound<T: Field>(sys: &AffineParametricSystem<T>) {
    let theta = UEmbedding::draw(EmbeddingKind::Srht, 128, 5, sys.ip.clone()).unwrap();
    let raw = u_orthonormal(sys, &snapshots(sys, 6, 2)).unwrap();
    // Θ-orthonormal basis of the same span
    let (_, r) = thin_qr(&theta.apply(&raw).unwrap());
    let ur = &raw * r.try_inverse().unwrap();
    let eps = omega_exact(&theta, &ur).unwrap();
    let sk = sketch::build(sys, &ur, &theta).unwrap();
    for mu in sys.params.sample(10, 6) {
        let u = sys.truth_solve(&mu).unwrap();
        let c = quasiopt_constants(sys, &ur, &mu, &u, Some(&theta)).unwrap();
        let (v, _) = sk.blocks().assemble(&mu).unwrap();
        let bound = ((1.0 + eps) / (1.0 - eps)).sqrt() * c.iota_theta.unwrap() / c.zeta_theta.unwrap();
        assert!(cond(&v) <= bound * (1.0 + 1e-8));
    }
}

#[test]
fn sketched_condition_number_bound() {
    condition_bound(&coercive(300, 2, 7));
    condition_bound(&noncoercive(300, 8));
}

#[test]
fn full_size_srht_reproduces_classical_minres() {
    let sys = coercive(256, 2, 1);
    let ur = u_orthonormal(&sys, &snapshots(&sys, 5, 1)).unwrap();
    let theta = UEmbedding::draw(EmbeddingKind::Srht, 256, 2, sys.ip.clone()).unwrap();
    let sk = sketch::build(&sys, &ur, &theta).unwrap();
    for mu in sys.params.sample(5, 2) {
        let a = minres_sketched(&sk, &mu).unwrap().coords;
        let b = minres_classic(&sys, &ur, &mu).unwrap().coords;
        assert!((a - &b).norm() <= 1e-9 * b.norm());
    }
}

#[test]
fn greedy_max_estimator_does_not_increase() {
    let sys = coercive(300, 3, 11);
    let train = sys.params.sample(80, 1);
    let theta = UEmbedding::draw(EmbeddingKind::Srht, 200, 3, sys.ip.clone()).unwrap();
    let rb = greedy_rb(
        &sys,
        &train,
        &theta,
        &GreedyOptions {
            r_max: 8,
            ..Default::default()
        },
    )
    .unwrap();
    let maxima: Vec<f64> = rb.log.iter().filter_map(|e| e.max_estimator).collect();
    assert!(maxima.len() >= 2);
    for w in maxima.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-10), "{maxima:?}");
    }
    // selected parameters are never picked twice
    let mut sel: Vec<usize> = rb.log.iter().map(|e| e.selected).collect();
    sel.sort();
    sel.dedup();
    assert_eq!(sel.len(), rb.log.len());
}

#[test]
fn online_batch_is_seeded_and_isolates_failures() {
    let sys = coercive(200, 2, 2);
    let ur = u_orthonormal(&sys, &snapshots(&sys, 4, 1)).unwrap();
    let theta = UEmbedding::draw(EmbeddingKind::Srht, 64, 3, sys.ip.clone()).unwrap();
    let sk = sketch::build(&sys, &ur, &theta).unwrap();
    let mut params = sys.params.sample(4, 9);
    params.insert(2, vec![0.5]); // wrong dimension
    let a = online_batch(&sk, EmbeddingKind::Srht, 24, 7, &params).unwrap();
    let b = online_batch(&sk, EmbeddingKind::Srht, 24, 7, &params).unwrap();
    assert!(a.solutions[2].is_err());
    for (i, (x, y)) in a.solutions.iter().zip(&b.solutions).enumerate() {
        if i != 2 {
            assert_eq!(x.as_ref().unwrap().coords, y.as_ref().unwrap().coords);
        }
    }
    let fresh = GammaPolicy::Fresh {
        kind: EmbeddingKind::Srht,
        k_prime: 24,
        master_seed: 7,
    };
    let p0 = fresh.phi(&sk, 0).unwrap().unwrap();
    let p1 = fresh.phi(&sk, 1).unwrap().unwrap();
    assert_ne!(p0.blocks.u, p1.blocks.u);
    let _ = DMatrix::<f64>::zeros(0, 0);
}
