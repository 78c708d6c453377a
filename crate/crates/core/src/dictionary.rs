//! Dictionary-based sparse minimal-residual approximation.
//!
//! For each parameter, `r` vectors are picked from a dictionary of `K`
//! candidates by orthogonal greedy selection, either on full vectors (exact
//! oracle) or on a Θ/Φ-sketch of the dictionary (online path).

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::{columns, lstsq, sv_extremes, thin_qr};
use crate::embeddings::UEmbedding;
use crate::error::{check_dim, Error, Result};
use crate::minres::{quasiopt_constants, Eta, GammaPolicy, GreedyLogEntry, Selector};
use crate::ops::OpCount;
use crate::sketch::{self, Sketched, ThetaSketch};
use crate::system::AffineParametricSystem;
use crate::Field;

/// Relative threshold under which a (deflated) column is considered to lie
/// in the span of the selected ones.
const DEAD_COL: f64 = 1e-10;
/// Minimal relative residual decrease per iteration before stopping.
const STAGNATION: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Dictionary<T> {
    /// Full columns (U-normalized); not needed online.
    pub u: Option<DMatrix<T>>,
    pub sketch: ThetaSketch<T>,
    pub log: Vec<GreedyLogEntry>,
}

/// Scales the columns to unit U-norm.
pub fn u_normalize<T: Field>(sys: &AffineParametricSystem<T>, cols: &DMatrix<T>) -> Result<DMatrix<T>> {
    let mut out = cols.clone();
    for j in 0..cols.ncols() {
        let c = cols.column(j).into_owned();
        let nrm = sys.ip.norm(&c)?;
        if nrm == 0.0 {
            return Err(Error::InvalidArgument(format!("dictionary column {j} is zero")));
        }
        out.set_column(j, &(c / T::from_re(nrm)));
    }
    Ok(out)
}

impl<T: Field> Dictionary<T> {
    pub fn from_columns(sys: &AffineParametricSystem<T>, cols: &DMatrix<T>, theta: &UEmbedding<T>) -> Result<Self> {
        if cols.ncols() == 0 {
            return Err(Error::InvalidArgument("dictionary needs K >= 1".into()));
        }
        let u = u_normalize(sys, cols)?;
        let sketch = sketch::build(sys, &u, theta)?;
        Ok(Dictionary {
            u: Some(u),
            sketch,
            log: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.sketch.blocks.r()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn full(&self) -> Result<&DMatrix<T>> {
        self.u
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("dictionary has no full columns".into()))
    }
}

#[derive(Debug, Clone)]
pub struct SparseSolution<T> {
    pub mu: Vec<f64>,
    pub support: Vec<usize>,
    pub coords: DVector<T>,
    pub delta: f64,
    pub iterations: usize,
    /// Stopped because the residual no longer decreased.
    pub stagnated: bool,
    pub ops: OpCount,
}

#[derive(Debug, Clone)]
pub struct OmpOptions {
    pub r: usize,
    pub tau: f64,
    pub eta: Eta,
    /// Deflate the remaining columns against the selected ones.
    pub step8: bool,
    /// Stop once `‖r‖ ≤ rtol ‖b‖` (round-off floor).
    pub rtol: f64,
}

impl Default for OmpOptions {
    fn default() -> Self {
        OmpOptions {
            r: 5,
            tau: 0.0,
            eta: Eta::default(),
            step8: true,
            rtol: 1e-10,
        }
    }
}

/// Orthogonal greedy selection on the columns of `v` to approximate `b` in
/// the Euclidean norm. Returns the support in selection order, the final
/// residual norm and the stagnation flag.
fn greedy_select<T: Field>(
    v: &DMatrix<T>,
    b: &DVector<T>,
    r: usize,
    tau_abs: f64,
    rtol: f64,
    step8: bool,
    ops: &mut OpCount,
) -> (Vec<usize>, bool) {
    let (m, kk) = v.shape();
    let mut cols: Vec<DVector<T>> = Vec::with_capacity(kk);
    let mut alive = vec![true; kk];
    for j in 0..kk {
        let c = v.column(j).into_owned();
        let nrm = c.norm();
        if nrm > 0.0 {
            cols.push(c / T::from_re(nrm));
        } else {
            alive[j] = false;
            cols.push(c);
        }
    }
    ops.add(3 * (m * kk) as u64);
    let mut res = b.clone();
    let mut res_norm = res.norm();
    let floor = rtol * res_norm;
    let mut support = Vec::new();
    let mut ortho: Vec<DVector<T>> = Vec::new();
    let mut stagnated = false;
    while res_norm >= tau_abs && res_norm > floor && res_norm > 0.0 && support.len() < r {
        // selection: largest |v_j^H r|, smallest index on ties
        let mut best: Option<(usize, f64)> = None;
        for j in 0..kk {
            if !alive[j] {
                continue;
            }
            let s = cols[j].dotc(&res).modulus();
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((j, s));
            }
        }
        ops.add(2 * (m * kk) as u64);
        let Some((p, _)) = best else { break };
        // Gram-Schmidt against the selected block, repeated once if
        // orthogonality was lost
        let mut w = cols[p].clone();
        let before = w.norm();
        for pass in 0..2 {
            for q in &ortho {
                let c = q.dotc(&w);
                w.axpy(-c, q, T::one());
            }
            ops.add(4 * (m * ortho.len()) as u64);
            if pass == 0 && w.norm() > 0.5 * before {
                break;
            }
        }
        let wn = w.norm();
        alive[p] = false;
        if wn <= DEAD_COL * before {
            continue;
        }
        let w = w / T::from_re(wn);
        let c = w.dotc(&res);
        let new_res = &res - &w * c;
        let new_norm = new_res.norm();
        ops.add(6 * m as u64);
        if new_norm > (1.0 - STAGNATION) * res_norm {
            stagnated = true;
            break;
        }
        support.push(p);
        res = new_res;
        res_norm = new_norm;
        if step8 {
            for j in 0..kk {
                if !alive[j] {
                    continue;
                }
                let c = w.dotc(&cols[j]);
                cols[j].axpy(-c, &w, T::one());
                let nrm = cols[j].norm();
                if nrm <= DEAD_COL {
                    alive[j] = false;
                } else {
                    cols[j] /= T::from_re(nrm);
                }
            }
            ops.add(7 * (m * kk) as u64);
        }
        ortho.push(w);
    }
    (support, stagnated)
}

fn finish<T: Field>(
    v: &DMatrix<T>,
    b: &DVector<T>,
    support: Vec<usize>,
    stagnated: bool,
    eta: f64,
    mu: &[f64],
    mut ops: OpCount,
) -> SparseSolution<T> {
    let vs = columns(v, &support);
    let (coords, _) = lstsq(&vs, b);
    ops.lstsq(vs.nrows(), vs.ncols());
    let delta = (&vs * &coords - b).norm() / eta;
    ops.add(2 * (vs.nrows() * vs.ncols() + vs.nrows()) as u64);
    SparseSolution {
        mu: mu.to_vec(),
        iterations: support.len(),
        support,
        coords,
        delta,
        stagnated,
        ops,
    }
}

/// Orthogonal greedy algorithm on full vectors: columns `v_j = A(µ) w_j`
/// normalized in `‖·‖_{U'}`, selection and residuals in `⟨·,·⟩_{U'}`.
pub fn omp_exact<T: Field>(
    sys: &AffineParametricSystem<T>,
    dict: &DMatrix<T>,
    mu: &[f64],
    opts: &OmpOptions,
) -> Result<SparseSolution<T>> {
    check_dim("dictionary rows", sys.n(), dict.nrows())?;
    let eta = opts.eta.at(mu)?;
    let a = sys.operator(mu)?;
    // mapped Euclidean space: ⟨x, y⟩_{U'} = (Q R^{-1} y)^H (Q R^{-1} x)
    let v = sys.ip.dual_map_mat(&a.mul_mat(dict)?)?;
    let b = sys.ip.dual_map(&sys.rhs(mu)?)?;
    let mut ops = OpCount::default();
    let (support, stagnated) = greedy_select(&v, &b, opts.r, opts.tau * eta, opts.rtol, opts.step8, &mut ops);
    if !support.is_empty() {
        let vs = columns(&v, &support);
        let g = vs.adjoint() * &vs;
        if g.clone().cholesky().is_none() {
            return Err(Error::Singular {
                what: "reduced system of the selected columns",
                cond: crate::dense::cond(&g),
            });
        }
    }
    Ok(finish(&v, &b, support, stagnated, eta, mu, ops))
}

/// Sketched orthogonal greedy selection at one parameter value.
pub fn omp_on_sketch<T: Field, S: Sketched<T>>(sk: &S, mu: &[f64], opts: &OmpOptions) -> Result<SparseSolution<T>> {
    let eta = opts.eta.at(mu)?;
    let mut ops = OpCount::default();
    let (v, b) = sk.blocks().assemble_counted(mu, &mut ops)?;
    if !v.iter().chain(b.iter()).all(|x| x.is_finite()) {
        return Err(Error::NonFinite("assembled sketch".into()));
    }
    let (support, stagnated) = greedy_select(&v, &b, opts.r, opts.tau * eta, opts.rtol, opts.step8, &mut ops);
    Ok(finish(&v, &b, support, stagnated, eta, mu, ops))
}

/// Sketched orthogonal greedy algorithm over a test set. With a `Fresh` Γ
/// policy, one Γ is drawn for the batch (counter `batch`) and the Φ-sketch
/// is formed once.
pub fn omp_sketched<T: Field>(
    sk: &ThetaSketch<T>,
    gamma: &GammaPolicy,
    batch: u64,
    p_test: &[Vec<f64>],
    opts: &OmpOptions,
) -> Result<Vec<Result<SparseSolution<T>>>> {
    if let Some(kp) = gamma.k_prime() {
        if kp < opts.r + 1 {
            return Err(Error::InvalidArgument(format!("k' = {kp} must be at least r + 1")));
        }
    }
    Ok(match gamma.phi(sk, batch)? {
        Some(phi) => p_test.par_iter().map(|mu| omp_on_sketch(&phi, mu, opts)).collect(),
        None => p_test.par_iter().map(|mu| omp_on_sketch(sk, mu, opts)).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct DictGreedyOptions {
    pub k_max: usize,
    pub r: usize,
    pub tau: f64,
    pub gamma: GammaPolicy,
    pub relaxed: bool,
    pub full_every: usize,
    pub eta: Eta,
    pub step8: bool,
    pub rtol: f64,
}

impl Default for DictGreedyOptions {
    fn default() -> Self {
        DictGreedyOptions {
            k_max: 50,
            r: 5,
            tau: 0.0,
            gamma: GammaPolicy::None,
            relaxed: false,
            full_every: 250,
            eta: Eta::default(),
            step8: true,
            rtol: 1e-10,
        }
    }
}

/// Greedy dictionary generation: snapshots at the worst-approximated
/// parameter, with sketched OMP (`r := min(i, r)`) as provisional solver.
pub fn dict_greedy<T: Field>(
    sys: &AffineParametricSystem<T>,
    p_train: &[Vec<f64>],
    theta: &UEmbedding<T>,
    opts: &DictGreedyOptions,
) -> Result<Dictionary<T>> {
    let mut cols = DMatrix::<T>::zeros(sys.n(), 0);
    let mut sk = sketch::build(sys, &cols, theta)?;
    let mut sel = Selector::new(p_train.len(), opts.relaxed, opts.full_every);
    let mut log = Vec::new();
    let mut iteration = 0u64;
    loop {
        let omp = OmpOptions {
            r: cols.ncols().min(opts.r),
            tau: opts.tau,
            eta: opts.eta.clone(),
            step8: opts.step8,
            rtol: opts.rtol,
        };
        let phi = opts.gamma.phi(&sk, iteration)?;
        let eval = |idx: &[usize]| -> Vec<Result<f64>> {
            idx.par_iter()
                .map(|&i| {
                    let s = match &phi {
                        Some(p) => omp_on_sketch(p, &p_train[i], &omp)?,
                        None => omp_on_sketch(&sk, &p_train[i], &omp)?,
                    };
                    Ok(s.delta)
                })
                .collect()
        };
        let Some(pick) = sel.select(eval) else { break };
        if pick.value < opts.tau || cols.ncols() >= opts.k_max {
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
        let nrm = sys.ip.norm(&u)?;
        if nrm == 0.0 {
            sel.exclude(pick.index);
            continue;
        }
        let w = u / T::from_re(nrm);
        let k = cols.ncols();
        cols = cols.insert_column(k, T::zero());
        cols.set_column(k, &w);
        sk = sketch::append(&sk, sys, &crate::field::col_to_mat(&w), theta)?;
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
    Ok(Dictionary {
        u: Some(cols),
        sketch: sk,
        log,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RipMethod {
    ExactEnumeration,
    Sampled,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RipConstants {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub method: RipMethod,
    pub supports: u64,
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

/// Calls `f` on every `r`-subset of `0..n` in lexicographic order.
pub fn for_each_support(n: usize, r: usize, mut f: impl FnMut(&[usize])) {
    if r > n {
        return;
    }
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        f(&idx);
        let Some(i) = (0..r).rev().find(|&i| idx[i] != i + n - r) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn all_supports(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for_each_support(n, r, |s| out.push(s.to_vec()));
    out
}

/// Extreme values of `‖U_K z‖_U / ‖z‖` over `r`-sparse `z`. Exact when all
/// `C(K, r) <= limit` supports can be enumerated; otherwise `limit` random
/// supports give an upper bound on the minimum and a lower bound on the
/// maximum.
pub fn rip_constants<T: Field>(
    sys: &AffineParametricSystem<T>,
    dict: &DMatrix<T>,
    r: usize,
    limit: u64,
    seed: u64,
) -> Result<RipConstants> {
    let k = dict.ncols();
    if r == 0 || r > k {
        return Err(Error::InvalidArgument(format!("need 1 <= r <= K (r = {r}, K = {k})")));
    }
    let (_, rk) = thin_qr(&sys.ip.q_mul_mat(dict)?);
    let count = binomial(k, r);
    let (supports, method) = if count <= limit as u128 {
        (all_supports(k, r), RipMethod::ExactEnumeration)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (0..limit)
            .map(|_| {
                let mut v = rand::seq::index::sample(&mut rng, k, r).into_vec();
                v.sort_unstable();
                v
            })
            .collect();
        (s, RipMethod::Sampled)
    };
    let (lo, hi) = supports
        .par_iter()
        .map(|s| sv_extremes(&columns(&rk, s)))
        .reduce(|| (f64::INFINITY, 0.0), |a, b| (a.0.min(b.0), a.1.max(b.1)));
    Ok(RipConstants {
        sigma_min: lo,
        sigma_max: hi,
        method,
        supports: supports.len() as u64,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StabilityReport {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub zeta_theta: f64,
    pub iota_theta: f64,
    pub rip: RipConstants,
    pub lower: f64,
    pub upper: f64,
    pub lower_holds: bool,
    pub upper_holds: bool,
}

/// Checks `ζ^Θ_{r,K} Σ^min ≤ σ(V^Θ_r(µ)) ≤ ι^Θ_{r,K} Σ^max` for the block
/// of `support`, with `ζ^Θ_{r,K}, ι^Θ_{r,K}` enumerated over all `r`-subsets.
pub fn stability_bounds_check<T: Field>(
    sys: &AffineParametricSystem<T>,
    dict: &DMatrix<T>,
    theta: &UEmbedding<T>,
    mu: &[f64],
    support: &[usize],
    r: usize,
) -> Result<StabilityReport> {
    let k = dict.ncols();
    let count = binomial(k, r);
    if count > 100_000 {
        return Err(Error::CombinatorialLimit { count, limit: 100_000 });
    }
    let rip = rip_constants(sys, dict, r, 100_000, 0)?;
    let u = sys.truth_solve(mu)?;
    let supports = all_supports(k, r);
    let consts = supports
        .par_iter()
        .map(|s| quasiopt_constants(sys, &columns(dict, s), mu, &u, Some(theta)))
        .collect::<Result<Vec<_>>>()?;
    let zeta_theta = consts.iter().map(|q| q.zeta_theta.unwrap()).fold(f64::INFINITY, f64::min);
    let iota_theta = consts.iter().map(|q| q.iota_theta.unwrap()).fold(0.0, f64::max);
    let a = sys.operator(mu)?;
    let block = theta.sketch_dual(&a.mul_mat(&columns(dict, support))?)?;
    let (sigma_min, sigma_max) = sv_extremes(&block);
    let lower = zeta_theta * rip.sigma_min;
    let upper = iota_theta * rip.sigma_max;
    let slack = 1e-10;
    Ok(StabilityReport {
        sigma_min,
        sigma_max,
        zeta_theta,
        iota_theta,
        rip,
        lower,
        upper,
        lower_holds: sigma_min >= lower * (1.0 - slack) - slack * sigma_max,
        upper_holds: sigma_max <= upper * (1.0 + slack),
    })
}

/// `sup_u min_{|S| = r} ‖u − P_{span(U_S)} u‖_U` for a fixed dictionary, by
/// enumerating supports.
pub fn width_oracle<T: Field>(
    sys: &AffineParametricSystem<T>,
    samples: &[DVector<T>],
    dict: &DMatrix<T>,
    r: usize,
    limit: u64,
) -> Result<f64> {
    let k = dict.ncols();
    let r = r.min(k);
    let count = binomial(k, r);
    if count > limit as u128 {
        return Err(Error::CombinatorialLimit {
            count,
            limit: limit as u128,
        });
    }
    let qd = sys.ip.q_mul_mat(dict)?;
    let supports = all_supports(k, r);
    let blocks: Vec<DMatrix<T>> = supports.iter().map(|s| columns(&qd, s)).collect();
    let errs = samples
        .par_iter()
        .map(|u| {
            let qu = sys.ip.q_mul(u)?;
            let mut best = qu.norm();
            for b in &blocks {
                let (x, _) = lstsq(b, &qu);
                best = best.min((b * x - &qu).norm());
            }
            Ok(best)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn supports_enumeration() {
        let mut n = 0;
        for_each_support(6, 2, |s| {
            assert!(s[0] < s[1]);
            n += 1
        });
        assert_eq!(n, 15);
        assert_eq!(binomial(8, 3), 56);
        let mut v = Vec::new();
        for_each_support(3, 3, |s| v.push(s.to_vec()));
        assert_eq!(v, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn greedy_select_exact_member() {
        let v = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.1]);
        let b = v.column(2).into_owned() * 3.0;
        let mut ops = OpCount::default();
        let (s, stag) = greedy_select(&v, &b, 2, 0.0, 1e-10, true, &mut ops);
        assert_eq!(s, vec![2]);
        assert!(!stag);
    }
}
