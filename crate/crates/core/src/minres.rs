//! Minimal-residual projections (classical and sketched), online batches
//! with a second-level embedding, quasi-optimality oracles and the sketched
//! greedy reduced-basis generator.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::{lstsq, sv_extremes};
use crate::embeddings::{derive_seed, make_l2, EmbeddingKind, UEmbedding};
use crate::error::{check_dim, Error, Result};
use crate::expr::CoeffExpr;
use crate::ops::OpCount;
use crate::sketch::{self, PhiSketch, Sketched, ThetaSketch};
use crate::system::AffineParametricSystem;
use crate::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orthonormality {
    None,
    U,
    Theta,
}

#[derive(Debug, Clone)]
pub struct ReducedBasis<T> {
    pub u: DMatrix<T>,
    pub orth: Orthonormality,
    pub log: Vec<GreedyLogEntry>,
}

impl<T: Field> ReducedBasis<T> {
    pub fn r(&self) -> usize {
        self.u.ncols()
    }
}

/// Reduced coordinates at one parameter value.
#[derive(Debug, Clone)]
pub struct ReducedSolution<T> {
    pub mu: Vec<f64>,
    pub coords: DVector<T>,
    pub support: Vec<usize>,
    /// Residual norm estimate divided by `η(µ)`.
    pub delta: f64,
    pub rank_deficient: bool,
    pub ops: OpCount,
}

/// Residual-norm scaling `η(µ)`; `None` means `η = 1`.
#[derive(Debug, Clone, Default)]
pub struct Eta(pub Option<CoeffExpr>);

impl Eta {
    pub fn at(&self, mu: &[f64]) -> Result<f64> {
        match &self.0 {
            None => Ok(1.0),
            Some(e) => {
                let v = e.eval(mu)?;
                if v.im != 0.0 || !(v.re > 0.0) {
                    return Err(Error::InvalidArgument(format!("η(µ) = {v} must be positive")));
                }
                Ok(v.re)
            }
        }
    }
}

/// `Q^{-H} A(µ) U_r` and `Q^{-H} b(µ)`: the exact dual residual map.
fn mapped_reduced<T: Field>(
    sys: &AffineParametricSystem<T>,
    ur: &DMatrix<T>,
    mu: &[f64],
) -> Result<(DMatrix<T>, DVector<T>)> {
    check_dim("basis rows", sys.n(), ur.nrows())?;
    let a = sys.operator(mu)?;
    let v = sys.ip.dual_map_mat(&a.mul_mat(ur)?)?;
    let c = sys.ip.dual_map(&sys.rhs(mu)?)?;
    Ok((v, c))
}

/// Reduced normal system `A_r a = b_r` with `A_r = U^H A^H R_U^{-1} A U`.
pub fn minres_classic<T: Field>(
    sys: &AffineParametricSystem<T>,
    ur: &DMatrix<T>,
    mu: &[f64],
) -> Result<ReducedSolution<T>> {
    let (v, c) = mapped_reduced(sys, ur, mu)?;
    let r = ur.ncols();
    let coords = if r == 0 {
        DVector::zeros(0)
    } else {
        let ar = v.adjoint() * &v;
        let br = v.adjoint() * &c;
        let kappa = crate::dense::cond(&ar);
        match ar.clone().cholesky() {
            Some(ch) if kappa < 1e16 => ch.solve(&br),
            _ => {
                return Err(Error::Singular {
                    what: "reduced normal matrix",
                    cond: kappa,
                })
            }
        }
    };
    let delta = (&v * &coords - &c).norm();
    Ok(ReducedSolution {
        mu: mu.to_vec(),
        coords,
        support: (0..r).collect(),
        delta,
        rank_deficient: false,
        ops: OpCount::default(),
    })
}

/// Condition number of the reduced normal matrix `A_r(µ)` (oracle).
pub fn reduced_normal_cond<T: Field>(sys: &AffineParametricSystem<T>, ur: &DMatrix<T>, mu: &[f64]) -> Result<f64> {
    let (v, _) = mapped_reduced(sys, ur, mu)?;
    Ok(crate::dense::cond(&(v.adjoint() * &v)))
}

/// `argmin ‖V(µ) x − b(µ)‖` on a Θ- or Φ-sketch, by Householder QR.
pub fn minres_sketched<T: Field, S: Sketched<T>>(sk: &S, mu: &[f64]) -> Result<ReducedSolution<T>> {
    let blocks = sk.blocks();
    let mut ops = OpCount::default();
    let (v, b) = blocks.assemble_counted(mu, &mut ops)?;
    if !v.iter().chain(b.iter()).all(|x| x.is_finite()) {
        return Err(Error::NonFinite("assembled sketch".into()));
    }
    let (coords, rank_deficient) = lstsq(&v, &b);
    ops.lstsq(v.nrows(), v.ncols());
    let res = &v * &coords - &b;
    ops.add(2 * (v.nrows() * v.ncols() + v.nrows()) as u64);
    Ok(ReducedSolution {
        mu: mu.to_vec(),
        delta: res.norm(),
        support: (0..coords.len()).collect(),
        coords,
        rank_deficient,
        ops,
    })
}

/// `‖V(µ) a − b(µ)‖ / η`.
pub fn delta_estimator<T: Field, S: Sketched<T>>(sk: &S, a: &DVector<T>, mu: &[f64], eta: f64) -> Result<f64> {
    delta_estimator_counted(sk, a, mu, eta, &mut OpCount::default())
}

pub fn delta_estimator_counted<T: Field, S: Sketched<T>>(
    sk: &S,
    a: &DVector<T>,
    mu: &[f64],
    eta: f64,
    ops: &mut OpCount,
) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument("η must be positive".into()));
    }
    let (v, b) = sk.blocks().assemble_counted(mu, ops)?;
    check_dim("coordinates", v.ncols(), a.len())?;
    ops.add(2 * (v.nrows() * v.ncols() + v.nrows()) as u64);
    Ok((v * a - b).norm() / eta)
}

/// How the second-level `Γ` is drawn for online batches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum GammaPolicy {
    /// Solve at the Θ level.
    None,
    /// A fresh `Γ` of `k_prime` rows per batch; batch `c` uses
    /// `derive_seed(master_seed, c)`.
    Fresh {
        kind: EmbeddingKind,
        k_prime: usize,
        master_seed: u64,
    },
}

impl GammaPolicy {
    pub fn k_prime(&self) -> Option<usize> {
        match self {
            GammaPolicy::None => None,
            GammaPolicy::Fresh { k_prime, .. } => Some(*k_prime),
        }
    }

    /// Φ-sketch for batch number `counter`, or `None` at the Θ level.
    pub fn phi<T: Field>(&self, sk: &ThetaSketch<T>, counter: u64) -> Result<Option<PhiSketch<T>>> {
        match *self {
            GammaPolicy::None => Ok(None),
            GammaPolicy::Fresh {
                kind,
                k_prime,
                master_seed,
            } => {
                if k_prime >= sk.blocks.k() && kind != EmbeddingKind::RowSampling {
                    return Err(Error::InvalidArgument(format!(
                        "k' = {k_prime} must be smaller than k = {}",
                        sk.blocks.k()
                    )));
                }
                let gamma = make_l2(kind, k_prime, sk.blocks.k(), derive_seed(master_seed, counter))?;
                Ok(Some(sketch::second_level(sk, &gamma)?))
            }
        }
    }
}

/// Result of [`online_batch`].
#[derive(Debug)]
pub struct Batch<T> {
    pub phi: PhiSketch<T>,
    /// Cost of forming the Φ-sketch.
    pub phi_ops: OpCount,
    pub solutions: Vec<Result<ReducedSolution<T>>>,
}

/// Draws `Γ` (`k_prime x k`) from `gamma_seed`, forms the Φ-sketch once and
/// solves every parameter of the batch. Per-parameter failures are returned
/// in place.
pub fn online_batch<T: Field>(
    sk: &ThetaSketch<T>,
    kind: EmbeddingKind,
    k_prime: usize,
    gamma_seed: u64,
    p_test: &[Vec<f64>],
) -> Result<Batch<T>> {
    let k = sk.blocks.k();
    if k_prime > k || (k_prime == k && kind != EmbeddingKind::RowSampling) {
        return Err(Error::InvalidArgument(format!("k' = {k_prime} must be below k = {k}")));
    }
    let gamma = make_l2(kind, k_prime, k, gamma_seed)?;
    let phi = sketch::second_level(sk, &gamma)?;
    let mut phi_ops = OpCount::default();
    phi_ops.read(k);
    let cols = (sk.blocks.v_terms.len() * sk.blocks.r() + sk.blocks.b_terms.len()) as u64;
    phi_ops.add(match kind {
        EmbeddingKind::RowSampling => k_prime as u64 * cols,
        _ => 2 * (k_prime * k) as u64 * cols,
    });
    let solutions = p_test.par_iter().map(|mu| minres_sketched(&phi, mu)).collect();
    Ok(Batch {
        phi,
        phi_ops,
        solutions,
    })
}

/// Quasi-optimality constants over `span{u(µ)} + U_r`.
#[derive(Debug, Clone, Copy)]
pub struct QuasiOpt {
    pub zeta: f64,
    pub iota: f64,
    pub zeta_theta: Option<f64>,
    pub iota_theta: Option<f64>,
}

/// U-orthonormal basis of `span(X)`, dropping numerically dependent
/// directions.
pub fn u_orthonormal<T: Field>(sys: &AffineParametricSystem<T>, x: &DMatrix<T>) -> Result<DMatrix<T>> {
    if x.ncols() == 0 {
        return Ok(x.clone());
    }
    let w = sys.ip.q_mul_mat(x)?;
    let svd = w.svd(false, true);
    let vt = svd.v_t.unwrap();
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-10 * smax)
        .collect();
    let mut t = DMatrix::zeros(x.ncols(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let s = svd.singular_values[i];
        for row in 0..x.ncols() {
            t[(row, c)] = vt[(i, row)].conjugate() / T::from_re(s);
        }
    }
    Ok(x * t)
}

/// `ζ_r, ι_r` (exact) and, with `theta`, `ζ^Θ_r, ι^Θ_r` (sketched numerator,
/// exact denominator).
pub fn quasiopt_constants<T: Field>(
    sys: &AffineParametricSystem<T>,
    ur: &DMatrix<T>,
    mu: &[f64],
    u_truth: &DVector<T>,
    theta: Option<&UEmbedding<T>>,
) -> Result<QuasiOpt> {
    let mut x = DMatrix::zeros(sys.n(), ur.ncols() + 1);
    x.set_column(0, u_truth);
    x.columns_mut(1, ur.ncols()).copy_from(ur);
    let w = u_orthonormal(sys, &x)?;
    let a = sys.operator(mu)?;
    let m = sys.ip.dual_map_mat(&a.mul_mat(&w)?)?;
    let (zeta, iota) = sv_extremes(&m);
    let (zeta_theta, iota_theta) = match theta {
        Some(th) => {
            let (lo, hi) = sv_extremes(&th.core.apply(&m)?);
            (Some(lo), Some(hi))
        }
        None => (None, None),
    };
    Ok(QuasiOpt {
        zeta,
        iota,
        zeta_theta,
        iota_theta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyLogEntry {
    pub iteration: usize,
    pub selected: usize,
    pub mu: Vec<f64>,
    /// Estimator at the selected parameter.
    pub estimator: f64,
    /// Largest estimator over the training set, when it was fully evaluated.
    pub max_estimator: Option<f64>,
    pub k: usize,
    pub k_prime: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct GreedyOptions {
    pub r_max: usize,
    pub tau: f64,
    pub gamma: GammaPolicy,
    pub relaxed: bool,
    /// With `relaxed`, do a full argmax every this many iterations.
    pub full_every: usize,
    pub eta: Eta,
    /// Rebuild the sketch from the full basis after this many appends.
    pub rebuild_every: usize,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        GreedyOptions {
            r_max: 50,
            tau: 0.0,
            gamma: GammaPolicy::None,
            relaxed: false,
            full_every: 250,
            eta: Eta::default(),
            rebuild_every: 50,
        }
    }
}

/// Lazy selection state for the relaxed rule: `stale[i]` is the smallest
/// estimator seen so far at parameter `i`.
pub(crate) struct Selector {
    stale: Vec<f64>,
    excluded: Vec<bool>,
    iteration: usize,
    relaxed: bool,
    full_every: usize,
}

pub(crate) struct Selection {
    pub index: usize,
    pub value: f64,
    pub max: Option<f64>,
}

impl Selector {
    pub fn new(n: usize, relaxed: bool, full_every: usize) -> Self {
        Selector {
            stale: vec![f64::INFINITY; n],
            excluded: vec![false; n],
            iteration: 0,
            relaxed,
            full_every: full_every.max(1),
        }
    }

    pub fn exclude(&mut self, i: usize) {
        self.excluded[i] = true;
    }

    /// Picks the next parameter. `eval(idx)` returns the current estimators
    /// at the given training indices (per-entry failures are excluded).
    pub fn select(
        &mut self,
        mut eval: impl FnMut(&[usize]) -> Vec<Result<f64>>,
    ) -> Option<Selection> {
        let live: Vec<usize> = (0..self.stale.len()).filter(|&i| !self.excluded[i]).collect();
        if live.is_empty() {
            return None;
        }
        let full = !self.relaxed || self.iteration % self.full_every == 0;
        self.iteration += 1;
        if full {
            let vals = eval(&live);
            let mut best: Option<(usize, f64)> = None;
            for (&i, v) in live.iter().zip(vals) {
                match v {
                    Ok(v) => {
                        self.stale[i] = self.stale[i].min(v);
                        if best.is_none_or(|(_, b)| v > b) {
                            best = Some((i, v));
                        }
                    }
                    Err(_) => self.excluded[i] = true,
                }
            }
            return best.map(|(index, value)| Selection {
                index,
                value,
                max: Some(value),
            });
        }
        // Relaxed: any µ with Δ(µ) ≥ max_µ min_j Δ_j(µ) will do. Visit
        // parameters by decreasing stale bound until one qualifies.
        let mut order = live;
        order.sort_by(|&a, &b| self.stale[b].total_cmp(&self.stale[a]).then(a.cmp(&b)));
        let mut seen_max = f64::NEG_INFINITY;
        let mut best: Option<(usize, f64)> = None;
        let chunk = 8;
        let mut pos = 0;
        while pos < order.len() {
            let end = (pos + chunk).min(order.len());
            let vals = eval(&order[pos..end]);
            for (&i, v) in order[pos..end].iter().zip(vals) {
                match v {
                    Ok(v) => {
                        self.stale[i] = self.stale[i].min(v);
                        seen_max = seen_max.max(self.stale[i]);
                        if best.is_none_or(|(bi, b)| v > b || (v == b && i < bi)) {
                            best = Some((i, v));
                        }
                    }
                    Err(_) => self.excluded[i] = true,
                }
            }
            pos = end;
            let rest = order.get(pos).map_or(f64::NEG_INFINITY, |&i| self.stale[i]);
            if let Some((i, v)) = best {
                if v >= seen_max.max(rest) {
                    return Some(Selection {
                        index: i,
                        value: v,
                        max: None,
                    });
                }
            }
        }
        best.map(|(index, value)| Selection {
            index,
            value,
            max: None,
        })
    }
}

/// Appends `u` to a Θ-orthonormal basis: two passes of Gram-Schmidt in the
/// sketched inner product. Returns `None` if `u` is numerically in the span.
pub(crate) fn theta_orthonormalize<T: Field>(
    theta: &UEmbedding<T>,
    basis: &DMatrix<T>,
    basis_sk: &DMatrix<T>,
    u: &DVector<T>,
) -> Result<Option<DVector<T>>> {
    let mut w = u.clone();
    let mut ws = theta.apply_vec(&w)?;
    let n0 = ws.norm();
    if n0 == 0.0 {
        return Ok(None);
    }
    for _ in 0..2 {
        if basis.ncols() == 0 {
            break;
        }
        let c = basis_sk.adjoint() * &ws;
        w -= basis * &c;
        ws -= basis_sk * &c;
    }
    let ws = theta.apply_vec(&w)?;
    let nrm = ws.norm();
    if nrm <= 1e-10 * n0 {
        return Ok(None);
    }
    Ok(Some(w / T::from_re(nrm)))
}

/// Sketched greedy construction of a Θ-orthonormal reduced basis.
pub fn greedy_rb<T: Field>(
    sys: &AffineParametricSystem<T>,
    p_train: &[Vec<f64>],
    theta: &UEmbedding<T>,
    opts: &GreedyOptions,
) -> Result<ReducedBasis<T>> {
    let n = sys.n();
    let mut basis = DMatrix::<T>::zeros(n, 0);
    let mut sk = sketch::build(sys, &basis, theta)?;
    let mut sel = Selector::new(p_train.len(), opts.relaxed, opts.full_every);
    let mut log = Vec::new();
    let etas: Vec<f64> = p_train.iter().map(|m| opts.eta.at(m)).collect::<Result<_>>()?;
    let mut iteration = 0u64;
    loop {
        let phi = opts.gamma.phi(&sk, iteration)?;
        let eval = |idx: &[usize]| -> Vec<Result<f64>> {
            idx.par_iter()
                .map(|&i| {
                    let s = match &phi {
                        Some(p) => minres_sketched(p, &p_train[i])?,
                        None => minres_sketched(&sk, &p_train[i])?,
                    };
                    Ok(s.delta / etas[i])
                })
                .collect()
        };
        let Some(pick) = sel.select(eval) else { break };
        if pick.value < opts.tau || basis.ncols() >= opts.r_max {
            break;
        }
        iteration += 1;
        let mu = &p_train[pick.index];
        let u = match sys.truth_solve(mu) {
            Ok(u) => u,
            Err(_) => {
                sel.exclude(pick.index);
                continue;
            }
        };
        let Some(w) = theta_orthonormalize(theta, &basis, &sk.blocks.u, &u)? else {
            break;
        };
        let r = basis.ncols();
        basis = basis.insert_column(r, T::zero());
        basis.set_column(r, &w);
        sk = if sk.appended + 1 >= opts.rebuild_every {
            sketch::build(sys, &basis, theta)?
        } else {
            sketch::append(&sk, sys, &crate::field::col_to_mat(&w), theta)?
        };
        sel.exclude(pick.index);
        log.push(GreedyLogEntry {
            iteration: log.len() + 1,
            selected: pick.index,
            mu: mu.clone(),
            estimator: pick.value,
            max_estimator: pick.max,
            k: theta.k(),
            k_prime: opts.gamma.k_prime(),
        });
    }
    Ok(ReducedBasis {
        u: basis,
        orth: Orthonormality::Theta,
        log,
    })
}
