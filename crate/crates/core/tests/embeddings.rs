mod common;

use common::{coercive, random_mat};
use nalgebra::DMatrix;
use sketchmor::embeddings::{make_l2, oblivious_size, omega_exact, omega_exact_mapped, EmbeddingKind, UEmbedding};
use sketchmor::Complex64;

const KINDS: [EmbeddingKind; 3] = [EmbeddingKind::Gaussian, EmbeddingKind::Srht, EmbeddingKind::RowSampling];

#[test]
fn seeded_determinism() {
    let x = random_mat::<f64>(100, 4, 3);
    for kind in KINDS {
        let a = make_l2(kind, 40, 100, 17).unwrap();
        let b = make_l2(kind, 40, 100, 17).unwrap();
        assert_eq!(a.apply_real(&x).unwrap(), b.apply_real(&x).unwrap());
        let c = make_l2(kind, 40, 100, 18).unwrap();
        assert_ne!(a.apply_real(&x).unwrap(), c.apply_real(&x).unwrap());
    }
}

#[test]
fn norm_sandwich_on_the_subspace() {
    let sys = coercive(400, 1, 2);
    let v = random_mat::<f64>(400, 5, 4);
    for kind in [EmbeddingKind::Gaussian, EmbeddingKind::Srht] {
        let theta = UEmbedding::draw(kind, 120, 5, sys.ip.clone()).unwrap();
        let w = omega_exact(&theta, &v).unwrap();
        assert!(w < 1.0);
        let coefs = random_mat::<f64>(5, 100, 6);
        for c in coefs.column_iter() {
            let x = &v * c;
            let exact = sys.ip.norm(&x).unwrap().powi(2);
            let sk = theta.apply_vec(&x).unwrap().norm_squared();
            assert!(sk >= (1.0 - w) * exact * (1.0 - 1e-10) && sk <= (1.0 + w) * exact * (1.0 + 1e-10));
        }
    }
}

#[test]
fn oblivious_size_concentrates() {
    let (eps, delta, d, n) = (0.75, 0.01, 2, 4096);
    let k = oblivious_size(EmbeddingKind::Gaussian, eps, delta, d, n).unwrap();
    let v = random_mat::<f64>(n, d, 1);
    let failures = (0..100u64)
        .filter(|&t| omega_exact_mapped(&make_l2(EmbeddingKind::Gaussian, k, n, t).unwrap(), &v).unwrap() > eps)
        .count();
    assert!(failures <= 5, "{failures} of 100 draws exceeded ε (k = {k})");
    assert!(oblivious_size(EmbeddingKind::RowSampling, eps, delta, d, n).is_none());
}

#[test]
fn complex_data_is_sketched_componentwise() {
    let e = make_l2(EmbeddingKind::Srht, 24, 50, 3).unwrap();
    let re = random_mat::<f64>(50, 3, 1);
    let im = random_mat::<f64>(50, 3, 2);
    let z = DMatrix::from_fn(50, 3, |i, j| Complex64::new(re[(i, j)], im[(i, j)]));
    let sz = e.apply(&z).unwrap();
    let (sr, si) = (e.apply_real(&re).unwrap(), e.apply_real(&im).unwrap());
    assert!((sz.map(|c| c.re) - sr).amax() < 1e-14);
    assert!((sz.map(|c| c.im) - si).amax() < 1e-14);
}

#[test]
fn srht_with_full_rows_is_an_isometry() {
    let v = random_mat::<f64>(64, 6, 9);
    let e = make_l2(EmbeddingKind::Srht, 64, 64, 2).unwrap();
    assert!(omega_exact_mapped(&e, &v).unwrap() < 1e-12);
}
