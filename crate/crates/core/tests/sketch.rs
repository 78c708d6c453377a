mod common;

use common::{coercive, noncoercive, snapshots};
use nalgebra::DMatrix;
use sketchmor::embeddings::{EmbeddingKind, UEmbedding};
use sketchmor::minres::u_orthonormal;
use sketchmor::ops::OpCount;
use sketchmor::sketch::{self, Sketched};
use sketchmor::system::AffineParametricSystem;
use sketchmor::Field;

fn affine_consistency<T: Field>(sys: &AffineParametricSystem<T>) {
    let ur = u_orthonormal(sys, &snapshots(sys, 5, 1)).unwrap();
    let theta = UEmbedding::draw(EmbeddingKind::Srht, 64, 3, sys.ip.clone()).unwrap();
    let sk = sketch::build(sys, &ur, &theta).unwrap();
    for mu in sys.params.sample(20, 2) {
        let (v, b) = sk.blocks().assemble(&mu).unwrap();
        let a = sys.operator(&mu).unwrap();
        let v_ref = theta.sketch_dual(&a.mul_mat(&ur).unwrap()).unwrap();
        let b_ref = theta.sketch_dual_vec(&sys.rhs(&mu).unwrap()).unwrap();
        assert!((v - &v_ref).norm() <= 1e-10 * v_ref.norm());
        assert!((b - &b_ref).norm() <= 1e-10 * b_ref.norm());
    }
}

#[test]
fn assembled_sketch_matches_sketch_of_assembled_system() {
    affine_consistency(&coercive(256, 3, 1));
    affine_consistency(&noncoercive(256, 1));
}

#[test]
fn append_equals_build() {
    let sys = coercive(200, 2, 5);
    let cols = snapshots(&sys, 6, 3);
    let theta = UEmbedding::draw(EmbeddingKind::Gaussian, 48, 1, sys.ip.clone()).unwrap();
    let first = sketch::build(&sys, &cols.columns(0, 4).into_owned(), &theta).unwrap();
    let grown = sketch::append(&first, &sys, &cols.columns(4, 2).into_owned(), &theta).unwrap();
    let full = sketch::build(&sys, &cols, &theta).unwrap();
    assert!((grown.blocks.u.clone() - &full.blocks.u).amax() < 1e-12);
    for (g, f) in grown.blocks.v_terms.iter().zip(&full.blocks.v_terms) {
        assert!((g - f).amax() <= 1e-12 * f.amax());
    }
}

#[test]
fn append_refuses_a_different_embedding() {
    let sys = coercive(64, 1, 5);
    let theta = UEmbedding::draw(EmbeddingKind::Gaussian, 16, 1, sys.ip.clone()).unwrap();
    let other = UEmbedding::draw(EmbeddingKind::Gaussian, 16, 2, sys.ip.clone()).unwrap();
    let sk = sketch::build(&sys, &DMatrix::zeros(64, 0), &theta).unwrap();
    assert!(sketch::append(&sk, &sys, &snapshots(&sys, 1, 0), &other).is_err());
}

#[test]
fn online_assembly_reads_only_sketch_sized_data() {
    for n in [500, 1000] {
        let sys = coercive(n, 2, 1);
        let ur = u_orthonormal(&sys, &snapshots(&sys, 4, 1)).unwrap();
        let theta = UEmbedding::draw(EmbeddingKind::Srht, 40, 3, sys.ip.clone()).unwrap();
        let sk = sketch::build(&sys, &ur, &theta).unwrap();
        let mut ops = OpCount::default();
        sk.blocks().assemble_counted(&[0.5, 0.5], &mut ops).unwrap();
        assert!(ops.max_len <= 40 && ops.flops > 0);
    }
}
