mod common;

use common::{coercive, noncoercive, snapshots};
use sketchmor::dictionary::{
    binomial, for_each_support, omp_exact, omp_on_sketch, omp_sketched, rip_constants, u_normalize, Dictionary,
    OmpOptions, RipMethod,
};
use sketchmor::embeddings::{EmbeddingKind, UEmbedding};
use sketchmor::minres::GammaPolicy;
use sketchmor::sketch::Sketched;

#[test]
fn members_are_recovered_across_seeds() {
    let sys = coercive(300, 3, 4);
    for seed in 0..20u64 {
        let mus = sys.params.sample(15, 50 + seed);
        let theta = UEmbedding::draw(EmbeddingKind::Srht, 200, seed, sys.ip.clone()).unwrap();
        let dict = Dictionary::from_columns(&sys, &snapshots(&sys, 15, 50 + seed), &theta).unwrap();
        let sols = omp_sketched(&dict.sketch, &GammaPolicy::None, 0, &mus, &OmpOptions::default()).unwrap();
        for (j, s) in sols.into_iter().enumerate() {
            let s = s.unwrap();
            let (_, b) = dict.sketch.blocks().assemble(&mus[j]).unwrap();
            assert_eq!(s.support, vec![j], "seed {seed}");
            assert!(s.delta <= 1e-8 * b.norm());
        }
    }
}

#[test]
fn omp_residual_is_monotone_in_sparsity() {
    let sys = noncoercive(300, 2);
    let theta = UEmbedding::draw(EmbeddingKind::Srht, 128, 1, sys.ip.clone()).unwrap();
    let dict = Dictionary::from_columns(&sys, &snapshots(&sys, 12, 4), &theta).unwrap();
    for mu in sys.params.sample(5, 8) {
        let mut last = f64::INFINITY;
        let mut prefix: Vec<usize> = vec![];
        for r in 1..=6 {
            let opts = OmpOptions {
                r,
                rtol: 0.0,
                ..Default::default()
            };
            let s = omp_on_sketch(&dict.sketch, &mu, &opts).unwrap();
            assert!(s.delta <= last * (1.0 + 1e-10));
            assert!(s.support.len() <= r);
            assert_eq!(&s.support[..prefix.len().min(s.support.len())], &prefix[..prefix.len().min(s.support.len())]);
            last = s.delta;
            prefix = s.support.clone();
        }
    }
}

#[test]
fn exact_omp_recovers_members() {
    let sys = coercive(200, 2, 9);
    let mus = sys.params.sample(8, 3);
    let cols = u_normalize(&sys, &snapshots(&sys, 8, 3)).unwrap();
    for (j, mu) in mus.iter().enumerate() {
        let s = omp_exact(&sys, &cols, mu, &OmpOptions::default()).unwrap();
        assert_eq!(s.support, vec![j]);
    }
}

#[test]
fn support_enumeration_counts() {
    for (n, r) in [(5, 2), (8, 3), (6, 6), (7, 1)] {
        let mut count = 0u128;
        let mut last: Option<Vec<usize>> = None;
        for_each_support(n, r, |s| {
            assert_eq!(s.len(), r);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            if let Some(l) = &last {
                assert!(l.as_slice() < s);
            }
            last = Some(s.to_vec());
            count += 1;
        });
        assert_eq!(count, binomial(n, r));
    }
}

#[test]
fn sampled_rip_lies_inside_exhaustive_range() {
    let sys = coercive(150, 2, 1);
    let cols = u_normalize(&sys, &snapshots(&sys, 9, 2)).unwrap();
    let exact = rip_constants(&sys, &cols, 3, 1_000, 0).unwrap();
    assert_eq!(exact.method, RipMethod::ExactEnumeration);
    let sampled = rip_constants(&sys, &cols, 3, 20, 4).unwrap();
    assert_eq!(sampled.method, RipMethod::Sampled);
    assert!(sampled.sigma_min >= exact.sigma_min * (1.0 - 1e-12));
    assert!(sampled.sigma_max <= exact.sigma_max * (1.0 + 1e-12));
    assert!(exact.sigma_min <= 1.0 + 1e-12 && exact.sigma_max >= 1.0 - 1e-12);
}
