//! Oblivious `ℓ2 → ℓ2` embeddings (Gaussian, SRHT, row sampling) and their
//! lift `Θ = Ω Q` to the solution space.
//!
//! All random draws come from ChaCha streams keyed by `(seed, stream)`, so an
//! embedding is a pure function of its descriptor.
//!
//! SRHT action, bit for bit: zero-pad to `n_pad = 2^⌈log2 n⌉`, flip signs,
//! apply the unnormalized Walsh-Hadamard butterfly, multiply by
//! `1/sqrt(n_pad)`, keep the sampled rows in increasing order, multiply by
//! `sqrt(n_pad/k)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::{r_is_deficient, sv_extremes, thin_qr};
use crate::error::{check_dim, Error, Result};
use crate::system::InnerProduct;
use crate::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingKind {
    Gaussian,
    Srht,
    RowSampling,
    /// Row concatenation of earlier embeddings, see [`L2Embedding::stack`].
    Stacked,
}

/// Serializable identity of an embedding: enough to regenerate it exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingDescriptor {
    pub kind: EmbeddingKind,
    pub k: usize,
    pub n: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parts: Vec<EmbeddingDescriptor>,
}

impl EmbeddingDescriptor {
    /// The `(kind, seed)` random streams this embedding draws from.
    pub fn streams(&self) -> Vec<(EmbeddingKind, u64)> {
        if self.kind == EmbeddingKind::Stacked {
            self.parts.iter().flat_map(|p| p.streams()).collect()
        } else {
            vec![(self.kind, self.seed)]
        }
    }

    /// True if the two embeddings share a random stream.
    pub fn shares_stream(&self, other: &EmbeddingDescriptor) -> bool {
        let mine = self.streams();
        other.streams().iter().any(|s| mine.contains(s))
    }
}

#[derive(Debug, Clone)]
enum State {
    /// Row-major `k x n`.
    Gaussian(Vec<f64>),
    Srht {
        n_pad: usize,
        signs: Vec<f64>,
        rows: Vec<usize>,
    },
    Rows(Vec<usize>),
    Stacked(Vec<(f64, L2Embedding)>),
}

/// An oblivious embedding `Ω: K^n → K^k` with real entries.
#[derive(Debug, Clone)]
pub struct L2Embedding {
    desc: EmbeddingDescriptor,
    state: State,
}

pub fn padded_len(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Builds an embedding with `k` rows acting on `K^n`.
pub fn make_l2(kind: EmbeddingKind, k: usize, n: usize, seed: u64) -> Result<L2Embedding> {
    let cap = match kind {
        EmbeddingKind::Gaussian | EmbeddingKind::Srht => padded_len(n),
        EmbeddingKind::RowSampling => n,
        EmbeddingKind::Stacked => {
            return Err(Error::InvalidArgument("stacked embeddings are built with stack()".into()))
        }
    };
    if k == 0 || k > cap {
        return Err(Error::InvalidArgument(format!(
            "embedding size k = {k} must lie in [1, {cap}] for n = {n}"
        )));
    }
    let state = match kind {
        EmbeddingKind::Gaussian => {
            let scale = 1.0 / (k as f64).sqrt();
            let rows: Vec<Vec<f64>> = (0..k)
                .into_par_iter()
                .map(|i| {
                    let mut rng = stream(seed, i as u64);
                    (0..n)
                        .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
                        .collect()
                })
                .collect();
            State::Gaussian(rows.concat())
        }
        EmbeddingKind::Srht => {
            let n_pad = padded_len(n);
            let mut rng = stream(seed, 0);
            let signs = (0..n_pad)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let mut rng = stream(seed, 1);
            let mut rows = rand::seq::index::sample(&mut rng, n_pad, k).into_vec();
            rows.sort_unstable();
            State::Srht { n_pad, signs, rows }
        }
        EmbeddingKind::RowSampling => {
            let mut rng = stream(seed, 1);
            let mut rows = rand::seq::index::sample(&mut rng, n, k).into_vec();
            rows.sort_unstable();
            State::Rows(rows)
        }
        EmbeddingKind::Stacked => unreachable!(),
    };
    Ok(L2Embedding {
        desc: EmbeddingDescriptor {
            kind,
            k,
            n,
            seed,
            parts: Vec::new(),
        },
        state,
    })
}

/// In-place unnormalized fast Walsh-Hadamard transform; `x.len()` must be a
/// power of two.
pub fn fwht(x: &mut [f64]) {
    let n = x.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for i in (0..n).step_by(2 * h) {
            for j in i..i + h {
                let (a, b) = (x[j], x[j + h]);
                x[j] = a + b;
                x[j + h] = a - b;
            }
        }
        h *= 2;
    }
}

impl L2Embedding {
    pub fn from_descriptor(d: &EmbeddingDescriptor) -> Result<Self> {
        if d.kind == EmbeddingKind::Stacked {
            let parts = d
                .parts
                .iter()
                .map(Self::from_descriptor)
                .collect::<Result<Vec<_>>>()?;
            return Self::stack(parts);
        }
        make_l2(d.kind, d.k, d.n, d.seed)
    }

    /// Row concatenation `[sqrt(k_1/k) Ω_1; sqrt(k_2/k) Ω_2; ...]`, the
    /// rescaling that keeps `E[Ω^H Ω] = I`.
    pub fn stack(parts: Vec<L2Embedding>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("nothing to stack".into()));
        }
        let n = parts[0].n();
        for p in &parts {
            check_dim("stacked embedding columns", n, p.n())?;
        }
        let k: usize = parts.iter().map(|p| p.k()).sum();
        let desc = EmbeddingDescriptor {
            kind: EmbeddingKind::Stacked,
            k,
            n,
            seed: parts[0].desc.seed,
            parts: parts.iter().map(|p| p.desc.clone()).collect(),
        };
        let scaled = parts
            .into_iter()
            .map(|p| (((p.k() as f64) / k as f64).sqrt(), p))
            .collect();
        Ok(L2Embedding {
            desc,
            state: State::Stacked(scaled),
        })
    }

    pub fn descriptor(&self) -> &EmbeddingDescriptor {
        &self.desc
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.desc.kind
    }

    pub fn k(&self) -> usize {
        self.desc.k
    }

    pub fn n(&self) -> usize {
        self.desc.n
    }

    pub fn seed(&self) -> u64 {
        self.desc.seed
    }

    /// Signs and sampled rows of an SRHT, for building dense references.
    pub fn srht_parts(&self) -> Option<(&[f64], &[usize])> {
        match &self.state {
            State::Srht { signs, rows, .. } => Some((signs, rows)),
            _ => None,
        }
    }

    fn apply_col(&self, x: &[f64], out: &mut [f64]) {
        match &self.state {
            State::Gaussian(g) => {
                let n = x.len();
                for (o, row) in out.iter_mut().zip(g.chunks_exact(n)) {
                    *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
                }
            }
            State::Srht { n_pad, signs, rows } => {
                let mut w = vec![0.0; *n_pad];
                for (i, &v) in x.iter().enumerate() {
                    w[i] = v * signs[i];
                }
                fwht(&mut w);
                let norm = 1.0 / (*n_pad as f64).sqrt();
                let scale = (*n_pad as f64 / rows.len() as f64).sqrt();
                for (o, &r) in out.iter_mut().zip(rows) {
                    *o = (w[r] * norm) * scale;
                }
            }
            State::Rows(rows) => {
                let scale = (x.len() as f64 / rows.len() as f64).sqrt();
                for (o, &r) in out.iter_mut().zip(rows) {
                    *o = x[r] * scale;
                }
            }
            State::Stacked(_) => unreachable!(),
        }
    }

    /// `Ω M` for a real matrix.
    pub fn apply_real(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("embedding input rows", self.n(), m.nrows())?;
        let k = self.k();
        Ok(match &self.state {
            State::Stacked(parts) => {
                let mut out = DMatrix::zeros(k, m.ncols());
                let mut row = 0;
                for (s, p) in parts {
                    let y = p.apply_real(m)? * *s;
                    out.rows_mut(row, p.k()).copy_from(&y);
                    row += p.k();
                }
                out
            }
            _ => {
                let cols: Vec<Vec<f64>> = (0..m.ncols())
                    .into_par_iter()
                    .map(|j| {
                        let mut o = vec![0.0; k];
                        self.apply_col(m.column(j).as_slice(), &mut o);
                        o
                    })
                    .collect();
                DMatrix::from_fn(k, m.ncols(), |i, j| cols[j][i])
            }
        })
    }

    /// `Ω M`, acting on real and imaginary parts separately.
    pub fn apply<T: Field>(&self, m: &DMatrix<T>) -> Result<DMatrix<T>> {
        let parts = T::split(m)
            .iter()
            .map(|p| self.apply_real(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(T::join(parts))
    }

    pub fn apply_vec<T: Field>(&self, x: &DVector<T>) -> Result<DVector<T>> {
        let m = self.apply(&crate::field::col_to_mat(x))?;
        Ok(m.column(0).into_owned())
    }

    /// Dense `k x n` matrix of the action (oracle use).
    pub fn to_dense(&self) -> DMatrix<f64> {
        self.apply_real(&DMatrix::identity(self.n(), self.n())).unwrap()
    }
}

/// `Θ = Ω Q`: an embedding of the solution space equipped with `⟨·,·⟩_U`.
#[derive(Debug, Clone)]
pub struct UEmbedding<T> {
    pub core: L2Embedding,
    ip: Arc<InnerProduct<T>>,
}

impl<T: Field> UEmbedding<T> {
    pub fn new(core: L2Embedding, ip: Arc<InnerProduct<T>>) -> Result<Self> {
        check_dim("embedding columns vs rows of Q", ip.s(), core.n())?;
        Ok(UEmbedding { core, ip })
    }

    /// Draws a fresh `Θ` of the given kind for `ip`.
    pub fn draw(kind: EmbeddingKind, k: usize, seed: u64, ip: Arc<InnerProduct<T>>) -> Result<Self> {
        let core = make_l2(kind, k, ip.s(), seed)?;
        Self::new(core, ip)
    }

    pub fn k(&self) -> usize {
        self.core.k()
    }

    pub fn n(&self) -> usize {
        self.ip.n()
    }

    pub fn descriptor(&self) -> &EmbeddingDescriptor {
        self.core.descriptor()
    }

    pub fn inner_product(&self) -> &Arc<InnerProduct<T>> {
        &self.ip
    }

    /// `Θ M = Ω Q M`.
    pub fn apply(&self, m: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.core.apply(&self.ip.q_mul_mat(m)?)
    }

    pub fn apply_vec(&self, x: &DVector<T>) -> Result<DVector<T>> {
        self.core.apply_vec(&self.ip.q_mul(x)?)
    }

    /// `Θ R_U^{-1} Y`, computed as `Ω (Q R_U^{-1} Y)` with one solve per column.
    pub fn sketch_dual(&self, y: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.core.apply(&self.ip.dual_map_mat(y)?)
    }

    pub fn sketch_dual_vec(&self, y: &DVector<T>) -> Result<DVector<T>> {
        self.core.apply_vec(&self.ip.dual_map(y)?)
    }
}

/// Seed of the `counter`-th embedding drawn from a master seed
/// (splitmix64 of `master + (counter + 1) * 0x9e3779b97f4a7c15`).
pub fn derive_seed(master: u64, counter: u64) -> u64 {
    let mut z = master.wrapping_add(counter.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Constants of the oblivious size bounds. The defaults reproduce the
/// Gaussian and SRHT sizes quoted for `ε = 0.6, δ = 1e-6, d = 151` on a
/// 400k-dimensional space (45700 and 102900 rows).
#[derive(Debug, Clone, Copy)]
pub struct ObliviousConstants {
    pub gaussian: f64,
    pub srht: f64,
}

impl Default for ObliviousConstants {
    fn default() -> Self {
        ObliviousConstants {
            gaussian: 99.82,
            srht: 1.17292,
        }
    }
}

/// A priori number of rows for an `(ε, δ, d)` oblivious embedding:
///
/// * Gaussian: `⌈C_g ε^{-2} (d + ln(1/δ))⌉`
/// * SRHT: `⌈C_s ε^{-2} (d + ln(n/δ))^2⌉`
///
/// Row sampling has no oblivious guarantee and returns `None`.
pub fn oblivious_size(kind: EmbeddingKind, eps: f64, delta: f64, d: usize, n: usize) -> Option<usize> {
    oblivious_size_with(ObliviousConstants::default(), kind, eps, delta, d, n)
}

pub fn oblivious_size_with(
    c: ObliviousConstants,
    kind: EmbeddingKind,
    eps: f64,
    delta: f64,
    d: usize,
    n: usize,
) -> Option<usize> {
    let d = d as f64;
    let k = match kind {
        EmbeddingKind::Gaussian => c.gaussian / (eps * eps) * (d + (1.0 / delta).ln()),
        EmbeddingKind::Srht => {
            let t = d + (n as f64 / delta).ln();
            c.srht / (eps * eps) * t * t
        }
        _ => return None,
    };
    Some(k.ceil() as usize)
}

/// `max(1 − σ_min², σ_max² − 1)` for a sketch of an orthonormal basis.
pub fn omega_from_sketch<T: Field>(sketched: &DMatrix<T>) -> f64 {
    let (lo, hi) = sv_extremes(sketched);
    (1.0 - lo * lo).max(hi * hi - 1.0)
}

/// Smallest `ω` such that `Θ` is an `ω`-embedding of `span(V)` (dense oracle).
pub fn omega_exact<T: Field>(theta: &UEmbedding<T>, v: &DMatrix<T>) -> Result<f64> {
    omega_exact_mapped(&theta.core, &theta.ip.q_mul_mat(v)?)
}

/// As [`omega_exact`] for a basis already mapped by `Q` (e.g. dual vectors
/// mapped by [`InnerProduct::dual_map`]).
pub fn omega_exact_mapped<T: Field>(core: &L2Embedding, w: &DMatrix<T>) -> Result<f64> {
    if w.ncols() == 0 {
        return Ok(0.0);
    }
    let (q, r) = thin_qr(w);
    if r_is_deficient(&r) {
        return Err(Error::RankDeficient("basis for omega_exact"));
    }
    Ok(omega_from_sketch(&core.apply(&q)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hadamard(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 })
    }

    #[test]
    fn fwht_matches_dense() {
        let x: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut y = x.clone();
        fwht(&mut y);
        let d = hadamard(16) * DVector::from_vec(x);
        for i in 0..16 {
            assert!((y[i] - d[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn full_srht_is_orthogonal() {
        let e = make_l2(EmbeddingKind::Srht, 16, 16, 9).unwrap();
        let m = e.to_dense();
        assert!((m.transpose() * &m - DMatrix::<f64>::identity(16, 16)).amax() < 1e-12);
    }

    #[test]
    fn k_bounds() {
        assert!(make_l2(EmbeddingKind::Srht, 17, 10, 0).is_err());
        assert!(make_l2(EmbeddingKind::Srht, 16, 10, 0).is_ok());
        assert!(make_l2(EmbeddingKind::Gaussian, 0, 10, 0).is_err());
        assert!(make_l2(EmbeddingKind::RowSampling, 11, 10, 0).is_err());
    }

    #[test]
    fn row_sampling_full_is_identity() {
        let e = make_l2(EmbeddingKind::RowSampling, 12, 12, 5).unwrap();
        assert_eq!(e.to_dense(), DMatrix::identity(12, 12));
    }

    #[test]
    fn stacked_descriptor_roundtrip() {
        let a = make_l2(EmbeddingKind::Gaussian, 3, 8, 1).unwrap();
        let b = make_l2(EmbeddingKind::Gaussian, 5, 8, 2).unwrap();
        let s = L2Embedding::stack(vec![a.clone(), b]).unwrap();
        let json = serde_json::to_string(s.descriptor()).unwrap();
        let d: EmbeddingDescriptor = serde_json::from_str(&json).unwrap();
        let s2 = L2Embedding::from_descriptor(&d).unwrap();
        assert_eq!(s.to_dense(), s2.to_dense());
        assert!(s.descriptor().shares_stream(a.descriptor()));
        let top = s.to_dense().rows(0, 3).into_owned();
        assert!((top - a.to_dense() * (3.0f64 / 8.0).sqrt()).amax() < 1e-15);
    }

    #[test]
    fn complex_componentwise() {
        let e = make_l2(EmbeddingKind::Srht, 4, 6, 3).unwrap();
        let x = DVector::from_fn(6, |i, _| crate::Complex64::new(i as f64, 1.0 - i as f64));
        let y = e.apply_vec(&x).unwrap();
        let re = e.apply_vec(&x.map(|z| z.re)).unwrap();
        let im = e.apply_vec(&x.map(|z| z.im)).unwrap();
        for i in 0..4 {
            assert_eq!(y[i].re, re[i]);
            assert_eq!(y[i].im, im[i]);
        }
    }

    #[test]
    fn omega_of_zero_sketch() {
        assert_eq!(omega_from_sketch(&DMatrix::<f64>::zeros(5, 3)), 1.0);
    }
}
