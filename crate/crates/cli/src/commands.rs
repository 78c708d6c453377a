use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sketchmor::bench::{self, BenchmarkSpec};
use sketchmor::certify::{certify_omega, certify_residual, Certificate};
use sketchmor::dictionary::{dict_greedy, omp_sketched, DictGreedyOptions, OmpOptions};
use sketchmor::embeddings::{EmbeddingDescriptor, EmbeddingKind, L2Embedding, UEmbedding};
use sketchmor::io::{self, AnySystem, QoiRow, SolutionRecord};
use sketchmor::minres::{greedy_rb as rb_greedy, minres_sketched, online_batch, u_orthonormal, GammaPolicy, GreedyLogEntry, GreedyOptions};
use sketchmor::qoi::{build_extraction, qoi_corrected, wp_coarse, wp_pod, WBasis};
use sketchmor::sketch::{self, ThetaSketch};
use sketchmor::system::{AffineParametricSystem, ParameterBox};
use sketchmor::{Complex64, Field};

use crate::failure::Failure;
use crate::{
    CertifyArgs, DictArgs, EmbeddingArgs, GammaArgs, GenArgs, GreedyArgs, QoiArgs, ReportArgs, SketchArgs, SolveArgs,
    TrainArgs,
};

type Res<T = ()> = std::result::Result<T, Failure>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    ReducedBasis,
    Dictionary,
}

/// `DIR/model/model.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    pub kind: ModelKind,
    pub field: String,
    pub params: ParameterBox,
    /// Columns of `basis.bin`.
    pub columns: usize,
    pub embedding: EmbeddingDescriptor,
    /// OMP sparsity, for dictionaries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<usize>,
    pub log: Vec<GreedyLogEntry>,
}

/// `DIR/certificates.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificates {
    pub omega: Certificate,
    pub residual: Vec<ResidualCert>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualCert {
    pub mu: Vec<f64>,
    pub estimator: f64,
    pub certificate: Certificate,
}

pub fn system_dir(dir: &Path) -> PathBuf {
    dir.join("system")
}

fn model_dir(dir: &Path) -> PathBuf {
    dir.join("model")
}

fn load_system(dir: &Path) -> Res<AnySystem> {
    let path = system_dir(dir);
    if !path.join("system.json").exists() {
        return Err(Failure::config(format!("no system in {}", path.display())));
    }
    Ok(io::read_system(&path)?)
}

fn read_model(dir: &Path) -> Res<Model> {
    let path = model_dir(dir).join("model.json");
    let f = fs::File::open(&path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

fn read_solutions(dir: &Path) -> Res<Vec<SolutionRecord>> {
    let path = dir.join("solutions.json");
    let f = fs::File::open(&path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

fn theta<T: Field>(sys: &AffineParametricSystem<T>, e: &EmbeddingArgs) -> Res<UEmbedding<T>> {
    Ok(UEmbedding::draw(e.embedding.into(), e.k, e.seed, sys.ip.clone())?)
}

fn gamma_policy(g: &GammaArgs) -> GammaPolicy {
    match g.k_prime {
        None => GammaPolicy::None,
        Some(k_prime) => GammaPolicy::Fresh {
            kind: g.gamma_embedding.into(),
            k_prime,
            master_seed: g.gamma_seed,
        },
    }
}

fn build_sketch<T: Field>(
    sys: &AffineParametricSystem<T>,
    u: &DMatrix<T>,
    theta: &UEmbedding<T>,
) -> Res<ThetaSketch<T>> {
    Ok(if sys.l.is_some() {
        sketch::build_with_output(sys, u, theta)?
    } else {
        sketch::build(sys, u, theta)?
    })
}

fn save_model<T: Field>(
    dir: &Path,
    sys: &AffineParametricSystem<T>,
    u: &DMatrix<T>,
    sk: &ThetaSketch<T>,
    model: &Model,
) -> Res {
    let md = model_dir(dir);
    fs::create_dir_all(&md)?;
    io::save_block(&md.join("basis.bin"), u)?;
    io::write_sketch(&md.join("sketch"), sk, sys.p())?;
    io::write_greedy_log(fs::File::create(md.join("greedy_log.csv"))?, &model.log)?;
    io::write_json(&md.join("model.json"), model)?;
    Ok(())
}

macro_rules! on_system {
    ($any:expr, $s:ident => $body:expr) => {
        match $any {
            AnySystem::Real($s) => $body,
            AnySystem::Complex($s) => $body,
        }
    };
}

macro_rules! on_field {
    ($field:expr, $t:ident => $body:expr) => {
        match $field.as_str() {
            "real" => {
                type $t = f64;
                $body
            }
            "complex" => {
                type $t = Complex64;
                $body
            }
            other => Err(Failure::config(format!("unknown field `{other}`"))),
        }
    };
}

pub fn gen(a: &GenArgs) -> Res {
    let mut spec = BenchmarkSpec::new(a.family.into(), a.n, a.seed);
    if let Some(p) = a.p {
        spec.p = p;
    }
    if let Some(m) = a.m_a {
        spec.m_a = m;
    }
    if let Some(k) = a.knob {
        spec.knob = k;
    }
    let sys = bench::generate(&spec)?;
    io::write_system(&system_dir(&a.dir.dir), &sys)?;
    io::write_json(&a.dir.dir.join("benchmark.json"), &spec)?;
    Ok(())
}

fn train_set(params: &ParameterBox, t: &TrainArgs) -> Vec<Vec<f64>> {
    params.sample(t.train, t.train_seed)
}

pub fn greedy_rb(a: &GreedyArgs) -> Res {
    let dir = &a.dir.dir;
    on_system!(load_system(dir)?, sys => {
        let theta = theta(&sys, &a.embedding)?;
        let opts = GreedyOptions {
            r_max: a.r_max,
            tau: a.train.tau,
            gamma: gamma_policy(&a.gamma),
            relaxed: a.train.relaxed,
            ..Default::default()
        };
        let rb = rb_greedy(&sys, &train_set(&sys.params, &a.train), &theta, &opts)?;
        let sk = build_sketch(&sys, &rb.u, &theta)?;
        let model = Model {
            kind: ModelKind::ReducedBasis,
            field: sys_field(&sys),
            params: sys.params.clone(),
            columns: rb.u.ncols(),
            embedding: theta.descriptor().clone(),
            sparsity: None,
            log: rb.log,
        };
        save_model(dir, &sys, &rb.u, &sk, &model)
    })
}

fn sys_field<T: Field>(_: &AffineParametricSystem<T>) -> String {
    T::NAME.to_string()
}

pub fn greedy_dict(a: &DictArgs) -> Res {
    let dir = &a.dir.dir;
    on_system!(load_system(dir)?, sys => {
        let theta = theta(&sys, &a.embedding)?;
        let opts = DictGreedyOptions {
            k_max: a.k_max,
            r: a.r,
            tau: a.train.tau,
            gamma: gamma_policy(&a.gamma),
            relaxed: a.train.relaxed,
            ..Default::default()
        };
        let dict = dict_greedy(&sys, &train_set(&sys.params, &a.train), &theta, &opts)?;
        let cols = dict.full()?.clone();
        let sk = build_sketch(&sys, &cols, &theta)?;
        let model = Model {
            kind: ModelKind::Dictionary,
            field: sys_field(&sys),
            params: sys.params.clone(),
            columns: cols.ncols(),
            embedding: theta.descriptor().clone(),
            sparsity: Some(a.r),
            log: dict.log,
        };
        save_model(dir, &sys, &cols, &sk, &model)
    })
}

pub fn sketch(a: &SketchArgs) -> Res {
    let dir = &a.dir.dir;
    let mut model = read_model(dir)?;
    on_system!(load_system(dir)?, sys => {
        let u = io::load_block(&model_dir(dir).join("basis.bin"))?;
        let theta = theta(&sys, &a.embedding)?;
        let sk = build_sketch(&sys, &u, &theta)?;
        model.embedding = theta.descriptor().clone();
        io::write_sketch(&model_dir(dir).join("sketch"), &sk, sys.p())?;
        io::write_json(&model_dir(dir).join("model.json"), &model)?;
        Ok(())
    })
}

fn solve_typed<T: Field>(dir: &Path, model: &Model, params: &[Vec<f64>], g: &GammaArgs) -> Res<Vec<SolutionRecord>> {
    let sk: ThetaSketch<T> = io::read_sketch(&model_dir(dir).join("sketch"))?;
    let record = |mu: &Vec<f64>, r: sketchmor::Result<SolutionRecord>| match r {
        Ok(s) => s,
        Err(e) => SolutionRecord::failed(mu, &e),
    };
    Ok(match model.kind {
        ModelKind::ReducedBasis => {
            let sols = match g.k_prime {
                Some(kp) => online_batch(&sk, g.gamma_embedding.into(), kp, g.gamma_seed, params)?.solutions,
                None => params.par_iter().map(|mu| minres_sketched(&sk, mu)).collect(),
            };
            params
                .iter()
                .zip(sols)
                .map(|(mu, s)| record(mu, s.map(|s| SolutionRecord::from_reduced(&s))))
                .collect()
        }
        ModelKind::Dictionary => {
            let opts = OmpOptions {
                r: model.sparsity.unwrap_or(5),
                ..Default::default()
            };
            omp_sketched(&sk, &gamma_policy(g), 0, params, &opts)?
                .into_iter()
                .zip(params)
                .map(|(s, mu)| record(mu, s.map(|s| SolutionRecord::from_sparse(&s))))
                .collect()
        }
    })
}

pub fn solve(a: &SolveArgs) -> Res {
    let dir = &a.dir.dir;
    let model = read_model(dir)?;
    let params = match &a.params {
        Some(p) => io::read_params(p)?,
        None => model.params.sample(a.count, a.seed),
    };
    for mu in &params {
        if mu.len() != model.params.dim() {
            return Err(Failure::config(format!(
                "parameter {mu:?} has dimension {}, expected {}",
                mu.len(),
                model.params.dim()
            )));
        }
    }
    let records = on_field!(model.field, T => solve_typed::<T>(dir, &model, &params, &a.gamma))?;
    io::write_json(&dir.join("solutions.json"), &records)?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        return Err(Failure::Numeric(anyhow!("{failed} of {} parameters failed", records.len())));
    }
    Ok(())
}

/// Coordinates of a record with respect to all model columns.
fn full_coords<T: Field>(model: &Model, rec: &SolutionRecord) -> Res<DVector<T>> {
    let c = rec.coords_as::<T>()?;
    match model.kind {
        ModelKind::ReducedBasis => Ok(c),
        ModelKind::Dictionary => {
            let mut full = DVector::zeros(model.columns);
            for (&j, v) in rec.support.iter().zip(c.iter()) {
                if j >= model.columns {
                    return Err(Failure::config(format!("support index {j} out of range")));
                }
                full[j] = *v;
            }
            Ok(full)
        }
    }
}

fn star_embedding(desc: &EmbeddingDescriptor, k_star: Option<usize>, seed: u64) -> (EmbeddingKind, usize, u64) {
    let kind = match desc.kind {
        EmbeddingKind::Stacked => EmbeddingKind::Srht,
        k => k,
    };
    (kind, k_star.unwrap_or(desc.k), seed)
}

fn certify_typed<T: Field>(
    dir: &Path,
    model: &Model,
    sys: &AffineParametricSystem<T>,
    a: &CertifyArgs,
) -> Res<Certificates> {
    let sk: ThetaSketch<T> = io::read_sketch(&model_dir(dir).join("sketch"))?;
    let u: DMatrix<T> = io::load_block(&model_dir(dir).join("basis.bin"))?;
    let (kind, k_star, seed) = star_embedding(&sk.desc, a.k_star, a.seed_star);
    let star = UEmbedding::draw(kind, k_star, seed, sys.ip.clone())?;
    let sk_star = sketch::build(sys, &u, &star)?;
    // a well-conditioned basis of the same span; dictionary columns are often nearly dependent
    let span = u_orthonormal(sys, &u)?;
    let theta = UEmbedding::new(L2Embedding::from_descriptor(&sk.desc)?, sys.ip.clone())?;
    let omega = certify_omega(
        &theta.apply(&span)?,
        &star.apply(&span)?,
        a.eps_star,
        a.delta,
        false,
        &sk.desc,
        &sk_star.desc,
    )?;
    let mut residual = Vec::new();
    if dir.join("solutions.json").exists() {
        for rec in read_solutions(dir)?.iter().filter(|r| r.error.is_none()) {
            let coords = full_coords::<T>(model, rec)?;
            let certificate = certify_residual(&sk, &sk_star, &coords, &rec.mu, a.eps_star, a.delta)?;
            residual.push(ResidualCert {
                mu: rec.mu.clone(),
                estimator: rec.delta,
                certificate,
            });
        }
    }
    Ok(Certificates { omega, residual })
}

pub fn certify(a: &CertifyArgs) -> Res {
    let dir = &a.dir.dir;
    let model = read_model(dir)?;
    let certs = on_system!(load_system(dir)?, sys => certify_typed(dir, &model, &sys, a))?;
    io::write_json(&dir.join("certificates.json"), &certs)?;
    if !(certs.omega.value <= a.max_omega) {
        return Err(Failure::Certification(format!(
            "ω̄ = {:.4} exceeds {}",
            certs.omega.value, a.max_omega
        )));
    }
    Ok(())
}

fn qoi_typed<T: Field>(dir: &Path, model: &Model, sys: &AffineParametricSystem<T>, a: &QoiArgs) -> Res<Vec<QoiRow>> {
    if sys.l.is_none() {
        return Err(Failure::config("the system has no output functional"));
    }
    let sk: ThetaSketch<T> = io::read_sketch(&model_dir(dir).join("sketch"))?;
    let u: DMatrix<T> = io::load_block(&model_dir(dir).join("basis.bin"))?;
    let records: Vec<SolutionRecord> = read_solutions(dir)?.into_iter().filter(|r| r.error.is_none()).collect();
    let coords = records
        .iter()
        .map(|r| full_coords::<T>(model, r))
        .collect::<Res<Vec<_>>>()?;
    let w = match &a.w {
        Some(path) => wp_coarse(io::read_wp::<T>(path)?, sys.n())?,
        None => {
            if coords.is_empty() {
                return Err(Failure::config("no solutions to build W_p from"));
            }
            let t = wp_pod(&sk.blocks.u, &DMatrix::from_columns(&coords), a.p)?;
            WBasis::Dense(&u * t)
        }
    };
    let theta = UEmbedding::new(L2Embedding::from_descriptor(&sk.desc)?, sys.ip.clone())?;
    let eb = build_extraction(sys, &u, w, &theta)?;
    let (kind, k_star, seed) = star_embedding(&sk.desc, a.k_star, a.seed_star);
    let star = UEmbedding::draw(kind, k_star, seed, sys.ip.clone())?;
    records
        .par_iter()
        .zip(coords.par_iter())
        .map(|(rec, c)| {
            let s = qoi_corrected(&eb, c, &rec.mu)?.to_c64();
            let l = sys.output(&rec.mu)?;
            let d = &u * c - eb.w_p(c)?;
            let d_norm = sys.ip.norm(&d)?;
            let bound = if d_norm == 0.0 {
                Some(0.0)
            } else {
                let span = |e: &UEmbedding<T>| -> sketchmor::Result<DMatrix<T>> {
                    Ok(DMatrix::from_columns(&[e.sketch_dual_vec(&l)?, e.apply_vec(&d)?]))
                };
                certify_omega(
                    &span(&theta)?,
                    &span(&star)?,
                    a.eps_star,
                    0.01,
                    false,
                    theta.descriptor(),
                    star.descriptor(),
                )
                .ok()
                .map(|c| c.value * sys.ip.dual_norm(&l).unwrap_or(f64::NAN) * d_norm)
            };
            Ok(QoiRow {
                mu: rec.mu.clone(),
                s_re: s.re,
                s_im: s.im,
                bound,
            })
        })
        .collect()
}

pub fn qoi(a: &QoiArgs) -> Res {
    let dir = &a.dir.dir;
    let model = read_model(dir)?;
    let rows = on_system!(load_system(dir)?, sys => qoi_typed(dir, &model, &sys, a))?;
    io::write_qoi_csv(fs::File::create(dir.join("qoi.csv"))?, &rows)?;
    Ok(())
}

/// Values at probabilities 1, 0.9, 0.5 and 0.1 of the empirical distribution.
pub fn quantiles(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return vec![];
    }
    v.sort_by(f64::total_cmp);
    [1.0, 0.9, 0.5, 0.1]
        .iter()
        .map(|&p| {
            let i = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
            (p, v[i])
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct Summary {
    solutions: usize,
    failed: usize,
    delta_quantiles: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    omega_bar: Option<f64>,
    residual_bound_quantiles: Vec<(f64, f64)>,
    greedy_iterations: usize,
    qoi_rows: usize,
}

#[derive(Debug, Serialize)]
struct PlotData {
    /// `(iteration, estimator at the selected parameter)`.
    greedy: Vec<(usize, f64)>,
    delta: Vec<f64>,
    residual_bound: Vec<f64>,
}

pub fn report(a: &ReportArgs) -> Res {
    let dir = &a.dir.dir;
    let out = dir.join("report");
    fs::create_dir_all(&out)?;
    let records = if dir.join("solutions.json").exists() {
        read_solutions(dir)?
    } else {
        vec![]
    };
    let certs: Option<Certificates> = if dir.join("certificates.json").exists() {
        Some(serde_json::from_reader(std::io::BufReader::new(fs::File::open(
            dir.join("certificates.json"),
        )?))?)
    } else {
        None
    };
    let log = if model_dir(dir).join("model.json").exists() {
        read_model(dir)?.log
    } else {
        vec![]
    };
    let qoi_rows = fs::read_to_string(dir.join("qoi.csv"))
        .map(|s| s.lines().count().saturating_sub(1))
        .unwrap_or(0);

    let delta: Vec<f64> = records.iter().filter(|r| r.error.is_none()).map(|r| r.delta).collect();
    let bounds: Vec<f64> = certs
        .iter()
        .flat_map(|c| c.residual.iter().map(|r| r.certificate.value))
        .collect();
    let summary = Summary {
        solutions: records.len(),
        failed: records.iter().filter(|r| r.error.is_some()).count(),
        delta_quantiles: quantiles(&delta),
        omega_bar: certs.as_ref().map(|c| c.omega.value),
        residual_bound_quantiles: quantiles(&bounds),
        greedy_iterations: log.len(),
        qoi_rows,
    };
    io::write_json(&out.join("summary.json"), &summary)?;

    let mut csv = String::from("index,delta,mu\n");
    for (i, r) in records.iter().enumerate() {
        let mu: Vec<String> = r.mu.iter().map(|x| format!("{x:e}")).collect();
        csv.push_str(&format!("{i},{:e},{}\n", r.delta, mu.join(";")));
    }
    fs::write(out.join("delta.csv"), csv)?;

    let mut curve = String::from("iteration,selected,estimator,max_estimator\n");
    for e in &log {
        let max = e.max_estimator.map_or(String::new(), |m| format!("{m:e}"));
        curve.push_str(&format!("{},{},{:e},{max}\n", e.iteration, e.selected, e.estimator));
    }
    fs::write(out.join("greedy.csv"), curve)?;

    let plot = PlotData {
        greedy: log.iter().map(|e| (e.iteration, e.estimator)).collect(),
        delta,
        residual_bound: bounds,
    };
    io::write_json(&out.join("plot_data.json"), &plot)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::quantiles;

    #[test]
    fn quantiles_pick_order_statistics() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(quantiles(&v), vec![(1.0, 10.0), (0.9, 9.0), (0.5, 5.0), (0.1, 1.0)]);
        assert!(quantiles(&[f64::NAN]).is_empty());
    }
}
