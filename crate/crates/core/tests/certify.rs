mod common;

use common::random_mat;
use nalgebra::DVector;
use sketchmor::certify::{
    adaptive_k, certify_inner, certify_omega, gaussian_eps_star, omega_bar, AdaptiveOptions,
};
use sketchmor::embeddings::{make_l2, omega_exact_mapped, EmbeddingKind};
use sketchmor::Complex64;

#[test]
fn omega_bar_covers_the_truth_when_eps_star_is_exact() {
    for t in 0..30u64 {
        let v = random_mat::<f64>(512, 6, t);
        let theta = make_l2(EmbeddingKind::Srht, 60, 512, 2 * t).unwrap();
        let star = make_l2(EmbeddingKind::Gaussian, 120, 512, 2 * t + 1).unwrap();
        let eps = omega_exact_mapped(&star, &v).unwrap();
        let (wbar, _) = omega_bar(&theta.apply(&v).unwrap(), &star.apply(&v).unwrap(), eps).unwrap();
        assert!(wbar >= omega_exact_mapped(&theta, &v).unwrap() * (1.0 - 1e-12));
        assert!(wbar >= eps);
    }
}

#[test]
fn inner_product_interval_contains_the_discrepancy() {
    for t in 0..30u64 {
        let xy = random_mat::<Complex64>(256, 2, 100 + t);
        let theta = make_l2(EmbeddingKind::Gaussian, 30, 256, 3 * t).unwrap();
        let star = make_l2(EmbeddingKind::Srht, 80, 256, 3 * t + 1).unwrap();
        let eps = omega_exact_mapped(&star, &xy).unwrap();
        let (st, ss) = (theta.apply(&xy).unwrap(), star.apply(&xy).unwrap());
        let col = |m: &nalgebra::DMatrix<Complex64>, j: usize| -> DVector<Complex64> { m.column(j).into_owned() };
        let c = certify_inner(
            &col(&st, 0),
            &col(&st, 1),
            &col(&ss, 0),
            &col(&ss, 1),
            eps,
            0.01,
            theta.descriptor(),
            star.descriptor(),
        )
        .unwrap();
        let exact = col(&xy, 1).dotc(&col(&xy, 0));
        let sketched = col(&st, 1).dotc(&col(&st, 0));
        let d = (exact - sketched).norm();
        assert!(d <= c.value * (1.0 + 1e-10));
        assert!(d >= c.lower.unwrap() * (1.0 - 1e-10) - 1e-14);
    }
}

#[test]
fn shared_streams_are_rejected() {
    let e = make_l2(EmbeddingKind::Gaussian, 10, 40, 1).unwrap();
    let v = random_mat::<f64>(40, 2, 1);
    let s = e.apply(&v).unwrap();
    assert!(certify_omega(&s, &s, 0.1, 0.01, false, e.descriptor(), e.descriptor()).is_err());
}

#[test]
fn chi_square_eps_decreases_with_k() {
    let ks = [20, 40, 80, 160, 320];
    let e: Vec<f64> = ks.iter().map(|&k| gaussian_eps_star(k, 0.01).unwrap()).collect();
    assert!(e.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn adaptive_k_doubles_until_the_target() {
    let n = 1024;
    let v = random_mat::<f64>(n, 4, 3);
    let opts = AdaptiveOptions {
        k0: 8,
        tau: 0.5,
        eps_star: 0.1,
        master_seed: 5,
        ..Default::default()
    };
    let out = adaptive_k(n, |om| om.apply(&v), &opts).unwrap();
    assert!(out.omega_bar <= 0.5);
    assert_eq!(out.history.len(), out.iterations);
    for w in out.history.windows(2) {
        assert_eq!(w[1].0, 2 * w[0].0);
    }
    assert_eq!(out.theta.k(), out.history.last().unwrap().0);
    // τ ≤ ε* is rejected
    let bad = AdaptiveOptions { tau: 0.05, ..opts };
    assert!(adaptive_k(n, |om| om.apply(&v), &bad).is_err());
}
