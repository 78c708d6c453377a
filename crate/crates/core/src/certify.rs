//! A posteriori certification of sketches from an independent second sketch.
//!
//! Every bound compares a quantity sketched with `Θ` to the same quantity
//! sketched with an independent `Θ*` assumed to satisfy the concentration
//! property with accuracy `ε*` and failure probability `δ*`. `δ*` is only
//! bookkeeping: it is copied into the certificate together with the
//! resulting success probability.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dense::{r_is_deficient, sv_extremes, thin_qr};
use crate::embeddings::{derive_seed, make_l2, padded_len, EmbeddingDescriptor, EmbeddingKind, L2Embedding};
use crate::error::{check_dim, Error, Result};
use crate::sketch::Sketched;
use crate::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateKind {
    InnerProduct,
    Residual,
    OmegaTwoSided,
    OmegaOneSided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    /// Upper bound (or `ω̄`).
    pub value: f64,
    /// Lower bound, for inner products.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lower: Option<f64>,
    pub eps_star: f64,
    pub delta_star: f64,
    /// Probability with which the statement holds.
    pub probability: f64,
    pub theta: EmbeddingDescriptor,
    pub theta_star: EmbeddingDescriptor,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma: Option<(f64, f64)>,
}

impl Certificate {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!("ε* must lie in [0, 1), got {eps}")));
    }
    Ok(())
}

fn check_streams(theta: &EmbeddingDescriptor, star: &EmbeddingDescriptor) -> Result<()> {
    if theta.shares_stream(star) {
        return Err(Error::EmbeddingMismatch(
            "Θ and Θ* share a random stream; the certificate needs independent draws".into(),
        ));
    }
    Ok(())
}

/// Interval for `|⟨x,y⟩_U − ⟨x,y⟩^Θ_U|`:
/// `|⟨x,y⟩^{Θ*} − ⟨x,y⟩^Θ| ∓ ε*/(1−ε*) ‖x‖^{Θ*} ‖y‖^{Θ*}`.
pub fn inner_bounds<T: Field>(
    x_t: &DVector<T>,
    y_t: &DVector<T>,
    x_s: &DVector<T>,
    y_s: &DVector<T>,
    eps: f64,
) -> Result<(f64, f64)> {
    check_eps(eps)?;
    check_dim("sketched y", x_t.len(), y_t.len())?;
    check_dim("sketched y (Θ*)", x_s.len(), y_s.len())?;
    let d = (y_s.dotc(x_s) - y_t.dotc(x_t)).modulus();
    let c = eps / (1.0 - eps) * x_s.norm() * y_s.norm();
    Ok((d - c, d + c))
}

#[allow(clippy::too_many_arguments)]
pub fn certify_inner<T: Field>(
    x_t: &DVector<T>,
    y_t: &DVector<T>,
    x_s: &DVector<T>,
    y_s: &DVector<T>,
    eps: f64,
    delta: f64,
    theta: &EmbeddingDescriptor,
    theta_star: &EmbeddingDescriptor,
) -> Result<Certificate> {
    check_streams(theta, theta_star)?;
    let (lo, hi) = inner_bounds(x_t, y_t, x_s, y_s, eps)?;
    Ok(Certificate {
        kind: CertificateKind::InnerProduct,
        value: hi,
        lower: Some(lo),
        eps_star: eps,
        delta_star: delta,
        probability: (1.0 - 4.0 * delta).max(0.0),
        theta: theta.clone(),
        theta_star: theta_star.clone(),
        sigma: None,
    })
}

/// `(|s*² − s²| + ε*/(1−ε*) s*²)^{1/2}` for the sketched residual norms `s`
/// (Θ) and `s*` (Θ*).
pub fn residual_bound(norm_theta: f64, norm_star: f64, eps: f64) -> f64 {
    let s2 = norm_star * norm_star;
    ((s2 - norm_theta * norm_theta).abs() + eps / (1.0 - eps) * s2).sqrt()
}

/// Bound on `|‖r‖²_{U'} − (‖r‖^Θ_{U'})²|^{1/2}` for `u_r = U_r a_r`, from the
/// Θ- and Θ*-sketches of the same reduced model.
pub fn certify_residual<T: Field, S1: Sketched<T>, S2: Sketched<T>>(
    sk: &S1,
    sk_star: &S2,
    a: &DVector<T>,
    mu: &[f64],
    eps: f64,
    delta: f64,
) -> Result<Certificate> {
    check_eps(eps)?;
    check_streams(sk.embedding(), sk_star.embedding())?;
    let res = |blocks: &crate::sketch::SketchBlocks<T>| -> Result<f64> {
        let (v, b) = blocks.assemble(mu)?;
        check_dim("coordinates", v.ncols(), a.len())?;
        Ok((v * a - b).norm())
    };
    let s = res(sk.blocks())?;
    let s_star = res(sk_star.blocks())?;
    Ok(Certificate {
        kind: CertificateKind::Residual,
        value: residual_bound(s, s_star, eps),
        lower: None,
        eps_star: eps,
        delta_star: delta,
        probability: (1.0 - 4.0 * delta).max(0.0),
        theta: sk.embedding().clone(),
        theta_star: sk_star.embedding().clone(),
        sigma: None,
    })
}

/// Extreme singular values of `V^Θ T*`, where `V^{Θ*} T*` is orthonormal.
pub fn relative_singular_values<T: Field>(v_t: &DMatrix<T>, v_s: &DMatrix<T>) -> Result<(f64, f64)> {
    check_dim("sketched basis columns", v_t.ncols(), v_s.ncols())?;
    if v_s.nrows() < v_s.ncols() {
        return Err(Error::RankDeficient("Θ*-sketch has fewer rows than columns"));
    }
    let (_, r) = thin_qr(v_s);
    if r_is_deficient(&r) {
        return Err(Error::RankDeficient("Θ*-sketch of V"));
    }
    // X = V^Θ R^{-1}  <=>  R^H X^H = (V^Θ)^H
    let xh = r
        .adjoint()
        .solve_lower_triangular(&v_t.adjoint())
        .ok_or(Error::RankDeficient("Θ*-sketch of V"))?;
    Ok(sv_extremes(&xh.adjoint()))
}

/// Two-sided `ω̄ = max{1 − (1−ε*)σ²_min, (1+ε*)σ²_max − 1}`.
pub fn omega_bar<T: Field>(v_t: &DMatrix<T>, v_s: &DMatrix<T>, eps: f64) -> Result<(f64, (f64, f64))> {
    check_eps(eps)?;
    let (lo, hi) = relative_singular_values(v_t, v_s)?;
    let w = (1.0 - (1.0 - eps) * lo * lo).max((1.0 + eps) * hi * hi - 1.0);
    // ω̄ ≥ ε* holds identically since σ_min ≤ σ_max; clamp round-off
    Ok((w.max(eps), (lo, hi)))
}

/// One-sided `1 − (1−ε*)σ²_min`.
pub fn omega_bar_lower<T: Field>(v_t: &DMatrix<T>, v_s: &DMatrix<T>, eps: f64) -> Result<(f64, (f64, f64))> {
    check_eps(eps)?;
    let (lo, hi) = relative_singular_values(v_t, v_s)?;
    Ok((1.0 - (1.0 - eps) * lo * lo, (lo, hi)))
}

pub fn certify_omega<T: Field>(
    v_t: &DMatrix<T>,
    v_s: &DMatrix<T>,
    eps: f64,
    delta: f64,
    one_sided: bool,
    theta: &EmbeddingDescriptor,
    theta_star: &EmbeddingDescriptor,
) -> Result<Certificate> {
    check_streams(theta, theta_star)?;
    let (value, sigma) = if one_sided {
        omega_bar_lower(v_t, v_s, eps)?
    } else {
        omega_bar(v_t, v_s, eps)?
    };
    Ok(Certificate {
        kind: if one_sided {
            CertificateKind::OmegaOneSided
        } else {
            CertificateKind::OmegaTwoSided
        },
        value,
        lower: None,
        eps_star: eps,
        delta_star: delta,
        probability: (1.0 - delta).max(0.0),
        theta: theta.clone(),
        theta_star: theta_star.clone(),
        sigma: Some(sigma),
    })
}

/// Right-hand side of the effectivity bound `(1+ε*)(1+ω)/(1−ω*) − 1`.
pub fn effectivity_bound(eps: f64, omega: f64, omega_star: f64) -> f64 {
    (1.0 + eps) * (1.0 + omega) / (1.0 - omega_star) - 1.0
}

/// Smallest `ε*` with `P(|χ²_k/k − 1| > ε*) ≤ δ*`: the concentration
/// accuracy of a Gaussian `Θ*` with `k` rows on a single vector.
pub fn gaussian_eps_star(k: usize, delta: f64) -> Result<f64> {
    if k == 0 || !(0.0 < delta && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("need k >= 1 and δ* in (0,1), got {k}, {delta}")));
    }
    let chi = ChiSquared::new(k as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let lo = chi.inverse_cdf(delta / 2.0) / k as f64;
    let hi = chi.inverse_cdf(1.0 - delta / 2.0) / k as f64;
    Ok((1.0 - lo).max(hi - 1.0))
}

#[derive(Debug, Clone)]
pub struct AdaptiveOptions {
    pub kind: EmbeddingKind,
    pub k0: usize,
    pub tau: f64,
    pub eps_star: f64,
    pub growth: f64,
    pub master_seed: u64,
    /// Fold the previous `Θ` and `Θ*` into the next `Θ`.
    pub recycle: bool,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions {
            kind: EmbeddingKind::Srht,
            k0: 16,
            tau: 0.5,
            eps_star: 0.05,
            growth: 2.0,
            master_seed: 0,
            recycle: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdaptiveK<T> {
    pub theta: L2Embedding,
    pub theta_star: L2Embedding,
    pub v_theta: DMatrix<T>,
    pub v_theta_star: DMatrix<T>,
    pub omega_bar: f64,
    pub iterations: usize,
    /// `(k, ω̄)` per iteration.
    pub history: Vec<(usize, f64)>,
}

/// Grows `k` until `ω̄ ≤ τ`. `sketch(Ω)` returns `Ω V` for the subspace of
/// interest (`V` mapped to `ℓ2`, i.e. `Q V` or `Q R_U^{-1} V`); `n` is its
/// row count. Iteration `t` draws `Θ*` from `derive_seed(master, 2t + 1)`
/// and fresh `Θ` rows from `derive_seed(master, 2t)`.
pub fn adaptive_k<T: Field>(
    n: usize,
    mut sketch: impl FnMut(&L2Embedding) -> Result<DMatrix<T>>,
    opts: &AdaptiveOptions,
) -> Result<AdaptiveK<T>> {
    if opts.tau <= opts.eps_star {
        return Err(Error::InvalidArgument(format!(
            "τ = {} must exceed ε* = {}",
            opts.tau, opts.eps_star
        )));
    }
    check_eps(opts.eps_star)?;
    if opts.k0 == 0 || opts.growth <= 1.0 {
        return Err(Error::InvalidArgument("need k0 >= 1 and growth > 1".into()));
    }
    let cap = match opts.kind {
        EmbeddingKind::RowSampling => n,
        _ => padded_len(n),
    };
    let mut k = opts.k0;
    let mut history = Vec::new();
    let mut prev: Option<(L2Embedding, L2Embedding)> = None;
    for t in 0u64.. {
        if k > cap {
            return Err(Error::InvalidArgument(format!(
                "adaptive_k: k = {k} exceeds the limit {cap} without reaching ω̄ ≤ {}; history (k, ω̄): {history:?}",
                opts.tau
            )));
        }
        let theta = match prev.take() {
            Some((th, st)) if opts.recycle && th.k() + st.k() <= k => {
                let mut parts = vec![th, st];
                let used: usize = parts.iter().map(|p| p.k()).sum();
                if k > used {
                    parts.push(make_l2(opts.kind, k - used, n, derive_seed(opts.master_seed, 2 * t))?);
                }
                L2Embedding::stack(parts)?
            }
            _ => make_l2(opts.kind, k, n, derive_seed(opts.master_seed, 2 * t))?,
        };
        let star = make_l2(opts.kind, k, n, derive_seed(opts.master_seed, 2 * t + 1))?;
        let v_t = sketch(&theta)?;
        let v_s = sketch(&star)?;
        let (w, _) = omega_bar(&v_t, &v_s, opts.eps_star)?;
        history.push((k, w));
        if w <= opts.tau {
            return Ok(AdaptiveK {
                theta,
                theta_star: star,
                v_theta: v_t,
                v_theta_star: v_s,
                omega_bar: w,
                iterations: t as usize + 1,
                history,
            });
        }
        let next = ((k as f64) * opts.growth).ceil() as usize;
        // one step past the cap is allowed to land exactly on it
        k = if k < cap && next > cap { cap } else { next.max(k + 1) };
        prev = Some((theta, star));
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desc(seed: u64) -> EmbeddingDescriptor {
        EmbeddingDescriptor {
            kind: EmbeddingKind::Gaussian,
            k: 4,
            n: 8,
            seed,
            parts: vec![],
        }
    }

    #[test]
    fn zero_vector_bounds() {
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let z = DVector::zeros(2);
        assert_eq!(inner_bounds(&x, &z, &x, &z, 0.1).unwrap(), (0.0, 0.0));
        assert!(inner_bounds(&x, &z, &x, &z, 1.0).is_err());
    }

    #[test]
    fn isometric_sketches_give_eps() {
        let v = DMatrix::<f64>::identity(5, 3);
        let (w, _) = omega_bar(&v, &v, 0.07).unwrap();
        assert!((w - 0.07).abs() < 1e-15);
        let (wl, _) = omega_bar_lower(&v, &v, 0.07).unwrap();
        assert!((wl - 0.07).abs() < 1e-14);
    }

    #[test]
    fn stream_guard() {
        let v = DMatrix::<f64>::identity(5, 3);
        assert!(certify_omega(&v, &v, 0.1, 0.01, false, &desc(1), &desc(1)).is_err());
        assert!(certify_omega(&v, &v, 0.1, 0.01, false, &desc(1), &desc(2)).is_ok());
    }

    #[test]
    fn chi_square_eps() {
        let e = gaussian_eps_star(1000, 0.01).unwrap();
        // about 2.6 * sqrt(2/k)
        assert!(e > 0.1 && e < 0.13, "{e}");
    }
}
