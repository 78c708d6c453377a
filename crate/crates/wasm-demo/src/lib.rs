//! Browser bindings for three small experiments. Each returns a flat
//! `Float64Array` of fixed-width rows.

use nalgebra::DMatrix;
use sketchmor::bench::{self, BenchmarkSpec, Family};
use sketchmor::dictionary::{omp_sketched, Dictionary, OmpOptions};
use sketchmor::embeddings::{make_l2, omega_exact_mapped, EmbeddingKind, UEmbedding};
use sketchmor::io::AnySystem;
use sketchmor::minres::{minres_classic, minres_sketched, u_orthonormal, GammaPolicy};
use sketchmor::sketch;
use sketchmor::system::AffineParametricSystem;
use wasm_bindgen::prelude::*;

type Out = Result<Vec<f64>, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn kind(name: &str) -> Result<EmbeddingKind, String> {
    match name {
        "gaussian" => Ok(EmbeddingKind::Gaussian),
        "srht" => Ok(EmbeddingKind::Srht),
        "row-sampling" => Ok(EmbeddingKind::RowSampling),
        other => Err(format!("unknown embedding `{other}`")),
    }
}

fn coercive(n: usize, p: usize, seed: u64) -> Result<AffineParametricSystem<f64>, String> {
    let mut spec = BenchmarkSpec::new(Family::CoerciveDiffusion, n, seed);
    spec.p = p;
    spec.m_a = p + 1;
    match bench::generate(&spec).map_err(err)? {
        AnySystem::Real(s) => Ok(s),
        AnySystem::Complex(_) => Err("unexpected complex system".into()),
    }
}

fn snapshots(sys: &AffineParametricSystem<f64>, mus: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let cols = mus
        .iter()
        .map(|m| sys.truth_solve(m))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    Ok(DMatrix::from_columns(&cols))
}

/// Rows `[k, min ω, median ω, max ω]`: exact embedding distortion of a random
/// `d`-dimensional subspace of `R^n` over `trials` draws per sketch size.
pub fn omega_curve(n: usize, d: usize, kind_name: &str, ks: &[usize], trials: usize, seed: u64) -> Out {
    let kind = kind(kind_name)?;
    if d == 0 || d > n || trials == 0 {
        return Err("need 0 < d <= n and trials > 0".into());
    }
    let v = make_l2(EmbeddingKind::Gaussian, d, n, seed).map_err(err)?.to_dense().transpose();
    let mut out = Vec::with_capacity(4 * ks.len());
    for &k in ks {
        let mut w = (0..trials as u64)
            .map(|t| {
                let theta = make_l2(kind, k, n, seed + 1 + t)?;
                omega_exact_mapped(&theta, &v)
            })
            .collect::<Result<Vec<f64>, _>>()
            .map_err(err)?;
        w.sort_by(f64::total_cmp);
        out.extend([k as f64, w[0], w[w.len() / 2], w[w.len() - 1]]);
    }
    Ok(out)
}

/// Rows `[µ, classical residual, sketched-solution residual, sketched
/// estimate]` along the one-dimensional parameter range of a diffusion
/// problem with an `r`-dimensional snapshot basis.
pub fn residual_curve(n: usize, r: usize, k: usize, points: usize, seed: u64) -> Out {
    let sys = coercive(n, 1, seed)?;
    let ur = u_orthonormal(&sys, &snapshots(&sys, &sys.params.sample(r, seed + 1))?).map_err(err)?;
    let theta = UEmbedding::draw(EmbeddingKind::Srht, k, seed + 2, sys.ip.clone()).map_err(err)?;
    let sk = sketch::build(&sys, &ur, &theta).map_err(err)?;
    let (lo, hi) = (sys.params.lower[0], sys.params.upper[0]);
    let res = |a: &nalgebra::DVector<f64>, mu: &[f64]| -> Result<f64, String> {
        sys.ip.dual_norm(&sys.residual(&(&ur * a), mu).map_err(err)?).map_err(err)
    };
    let mut out = Vec::with_capacity(4 * points);
    for i in 0..points {
        let t = if points > 1 { i as f64 / (points - 1) as f64 } else { 0.5 };
        let mu = vec![lo + t * (hi - lo)];
        let classic = minres_classic(&sys, &ur, &mu).map_err(err)?;
        let sketched = minres_sketched(&sk, &mu).map_err(err)?;
        out.extend([mu[0], res(&classic.coords, &mu)?, res(&sketched.coords, &mu)?, sketched.delta]);
    }
    Ok(out)
}

/// Rows `[j, recovered, relative Δ, support size]` for each dictionary member
/// `j` used as the truth, with sparsity `r` and a fresh `Γ` of `k_prime` rows.
pub fn omp_recovery(n: usize, size: usize, r: usize, k: usize, k_prime: usize, seed: u64) -> Out {
    let sys = coercive(n, 2, seed)?;
    let mus = sys.params.sample(size, seed + 1);
    let theta = UEmbedding::draw(EmbeddingKind::Srht, k, seed + 2, sys.ip.clone()).map_err(err)?;
    let dict = Dictionary::from_columns(&sys, &snapshots(&sys, &mus)?, &theta).map_err(err)?;
    let gamma = GammaPolicy::Fresh {
        kind: EmbeddingKind::Srht,
        k_prime,
        master_seed: seed + 3,
    };
    let opts = OmpOptions {
        r,
        ..Default::default()
    };
    let sols = omp_sketched(&dict.sketch, &gamma, 0, &mus, &opts).map_err(err)?;
    let phi = gamma.phi(&dict.sketch, 0).map_err(err)?.ok_or("no Γ")?;
    let mut out = Vec::with_capacity(4 * size);
    for (j, s) in sols.into_iter().enumerate() {
        let s = s.map_err(err)?;
        let (_, b) = phi.blocks.assemble(&mus[j]).map_err(err)?;
        let recovered = s.support == [j];
        out.extend([j as f64, recovered as u8 as f64, s.delta / b.norm(), s.support.len() as f64]);
    }
    Ok(out)
}

fn js(r: Out) -> Result<Vec<f64>, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = omegaCurve)]
pub fn omega_curve_js(n: usize, d: usize, kind: &str, ks: Vec<usize>, trials: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    js(omega_curve(n, d, kind, &ks, trials, seed))
}

#[wasm_bindgen(js_name = residualCurve)]
pub fn residual_curve_js(n: usize, r: usize, k: usize, points: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    js(residual_curve(n, r, k, points, seed))
}

#[wasm_bindgen(js_name = ompRecovery)]
pub fn omp_recovery_js(n: usize, size: usize, r: usize, k: usize, k_prime: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    js(omp_recovery(n, size, r, k, k_prime, seed))
}
