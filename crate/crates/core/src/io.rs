//! On-disk formats: system bundles, sketch bundles, binary dense blocks and
//! CSV reports.
//!
//! Binary block layout (little-endian):
//!
//! | bytes | content                               |
//! |-------|---------------------------------------|
//! | 4     | magic `SKMB`                          |
//! | 1     | version (1)                           |
//! | 1     | scalar type: 0 real, 1 complex        |
//! | 2     | reserved (0)                          |
//! | 8     | rows (u64)                            |
//! | 8     | cols (u64)                            |
//! | ...   | column-major `f64`, `re, im` pairs for complex |

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dictionary::SparseSolution;
use crate::embeddings::EmbeddingDescriptor;
use crate::error::{Error, Result};
use crate::expr::{parse_coeff, CoeffExpr};
use crate::minres::{GreedyLogEntry, ReducedSolution};
use crate::sketch::{SketchBlocks, ThetaSketch};
use crate::sparse::{read_dense, read_matrix_market, write_dense, write_matrix_market, CsrMatrix};
use crate::system::{AffineOperator, AffineParametricSystem, AffineVector, InnerProduct, ParameterBox};
use crate::{Complex64, Field};

pub const SKETCH_FORMAT: &str = "SKMOR1";
pub const SYSTEM_FORMAT: &str = "SKMOR-SYSTEM1";
const MAGIC: &[u8; 4] = b"SKMB";

/// A system in either field.
#[derive(Debug, Clone)]
pub enum AnySystem {
    Real(AffineParametricSystem<f64>),
    Complex(AffineParametricSystem<Complex64>),
}

impl AnySystem {
    pub fn n(&self) -> usize {
        match self {
            AnySystem::Real(s) => s.n(),
            AnySystem::Complex(s) => s.n(),
        }
    }

    pub fn params(&self) -> &ParameterBox {
        match self {
            AnySystem::Real(s) => &s.params,
            AnySystem::Complex(s) => &s.params,
        }
    }

    pub fn field(&self) -> &'static str {
        match self {
            AnySystem::Real(_) => f64::NAME,
            AnySystem::Complex(_) => Complex64::NAME,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermEntry {
    pub file: String,
    pub coeff: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemManifest {
    pub format: String,
    pub field: String,
    pub n: usize,
    pub p: usize,
    pub params: ParameterBox,
    pub a: Vec<TermEntry>,
    pub b: Vec<TermEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<Vec<TermEntry>>,
    pub r_u: String,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn write_system_typed<T: Field>(dir: &Path, sys: &AffineParametricSystem<T>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut a = Vec::new();
    for (i, (m, c)) in sys.a.terms().iter().zip(sys.a.coeffs()).enumerate() {
        let file = format!("A{i}.mtx");
        write_matrix_market(&mut create(&dir.join(&file))?, m)?;
        a.push(TermEntry {
            file,
            coeff: c.source().to_string(),
        });
    }
    let vecs = |name: &str, v: &AffineVector<T>| -> Result<Vec<TermEntry>> {
        let mut out = Vec::new();
        for (i, (t, c)) in v.terms().iter().zip(v.coeffs()).enumerate() {
            let file = format!("{name}{i}.mtx");
            write_dense(&mut create(&dir.join(&file))?, &crate::field::col_to_mat(t))?;
            out.push(TermEntry {
                file,
                coeff: c.source().to_string(),
            });
        }
        Ok(out)
    };
    let b = vecs("b", &sys.b)?;
    let l = sys.l.as_ref().map(|l| vecs("l", l)).transpose()?;
    write_matrix_market(&mut create(&dir.join("R_U.mtx"))?, sys.ip.matrix())?;
    let manifest = SystemManifest {
        format: SYSTEM_FORMAT.into(),
        field: T::NAME.into(),
        n: sys.n(),
        p: sys.p(),
        params: sys.params.clone(),
        a,
        b,
        l,
        r_u: "R_U.mtx".into(),
    };
    let mut w = create(&dir.join("system.json"))?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.flush()?;
    Ok(())
}

pub fn write_system(dir: &Path, sys: &AnySystem) -> Result<()> {
    match sys {
        AnySystem::Real(s) => write_system_typed(dir, s),
        AnySystem::Complex(s) => write_system_typed(dir, s),
    }
}

fn coeffs(entries: &[TermEntry], p: usize) -> Result<Vec<CoeffExpr>> {
    entries.iter().map(|e| parse_coeff(&e.coeff, p)).collect()
}

fn read_system_typed<T: Field>(dir: &Path, m: &SystemManifest) -> Result<AffineParametricSystem<T>> {
    let p = m.params.dim();
    if p != m.p {
        return Err(Error::Format(format!("manifest p = {} but box has dimension {p}", m.p)));
    }
    let mut a = Vec::new();
    for (e, c) in m.a.iter().zip(coeffs(&m.a, p)?) {
        a.push((read_matrix_market::<T, _>(open(&dir.join(&e.file))?)?, c));
    }
    let vecs = |entries: &[TermEntry]| -> Result<AffineVector<T>> {
        let mut out = Vec::new();
        for (e, c) in entries.iter().zip(coeffs(entries, p)?) {
            let d = read_dense::<T, _>(open(&dir.join(&e.file))?)?;
            if d.ncols() != 1 {
                return Err(Error::Format(format!("{} is not a column vector", e.file)));
            }
            out.push((d.column(0).into_owned(), c));
        }
        AffineVector::new(out)
    };
    let b = vecs(&m.b)?;
    let l = m.l.as_deref().map(vecs).transpose()?;
    let r = read_matrix_market::<T, _>(open(&dir.join(&m.r_u))?)?;
    let sys = AffineParametricSystem::new(
        AffineOperator::new(a)?,
        b,
        l,
        Arc::new(InnerProduct::new(r)?),
        m.params.clone(),
    )?;
    if sys.n() != m.n {
        return Err(Error::Format(format!("manifest n = {} but matrices have n = {}", m.n, sys.n())));
    }
    Ok(sys)
}

pub fn read_system(dir: &Path) -> Result<AnySystem> {
    let m: SystemManifest = serde_json::from_reader(open(&dir.join("system.json"))?)?;
    if m.format != SYSTEM_FORMAT {
        return Err(Error::Format(format!("unknown system format `{}`", m.format)));
    }
    match m.field.as_str() {
        "real" => Ok(AnySystem::Real(read_system_typed(dir, &m)?)),
        "complex" => Ok(AnySystem::Complex(read_system_typed(dir, &m)?)),
        f => Err(Error::Format(format!("unknown field `{f}`"))),
    }
}

pub fn write_block<T: Field, W: Write>(w: &mut W, m: &DMatrix<T>) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[1, T::IS_COMPLEX as u8, 0, 0])?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for v in m.iter() {
        let z = v.to_c64();
        w.write_all(&z.re.to_le_bytes())?;
        if T::IS_COMPLEX {
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_block<T: Field, R: Read>(r: &mut R) -> Result<DMatrix<T>> {
    let mut head = [0u8; 24];
    r.read_exact(&mut head)?;
    if &head[..4] != MAGIC {
        return Err(Error::Format("bad block magic".into()));
    }
    if head[4] != 1 {
        return Err(Error::Format(format!("unsupported block version {}", head[4])));
    }
    let complex = head[5] == 1;
    if complex && !T::IS_COMPLEX {
        return Err(Error::Format("complex block read into a real field".into()));
    }
    let rows = u64::from_le_bytes(head[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(head[16..24].try_into().unwrap()) as usize;
    let per = if complex { 2 } else { 1 };
    let mut buf = vec![0u8; rows * cols * per * 8];
    r.read_exact(&mut buf)?;
    let f: Vec<f64> = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let vals = (0..rows * cols)
        .map(|i| {
            let z = if complex {
                Complex64::new(f[2 * i], f[2 * i + 1])
            } else {
                Complex64::new(f[i], 0.0)
            };
            T::from_c64(z)
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(DMatrix::from_vec(rows, cols, vals))
}

pub fn save_block<T: Field>(path: &Path, m: &DMatrix<T>) -> Result<()> {
    let mut w = create(path)?;
    write_block(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load_block<T: Field>(path: &Path) -> Result<DMatrix<T>> {
    read_block(&mut open(path)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SketchManifest {
    pub format: String,
    pub field: String,
    pub embedding: EmbeddingDescriptor,
    pub k: usize,
    pub r: usize,
    pub appended: usize,
    pub a_coeffs: Vec<String>,
    pub b_coeffs: Vec<String>,
    #[serde(default)]
    pub l_coeffs: Vec<String>,
    pub p: usize,
    /// Block files in the order `u`, `v_i`, `b_j`, `l_j`.
    pub blocks: Vec<String>,
}

pub fn write_sketch<T: Field>(dir: &Path, sk: &ThetaSketch<T>, p: usize) -> Result<()> {
    fs::create_dir_all(dir)?;
    let bl = &sk.blocks;
    let mut files = Vec::new();
    let mut put = |name: String, m: &DMatrix<T>| -> Result<()> {
        save_block(&dir.join(&name), m)?;
        files.push(name);
        Ok(())
    };
    put("u.bin".into(), &bl.u)?;
    for (i, v) in bl.v_terms.iter().enumerate() {
        put(format!("v{i}.bin"), v)?;
    }
    for (i, b) in bl.b_terms.iter().enumerate() {
        put(format!("b{i}.bin"), &crate::field::col_to_mat(b))?;
    }
    if let Some(l) = &bl.l_terms {
        for (i, t) in l.iter().enumerate() {
            put(format!("l{i}.bin"), &crate::field::col_to_mat(t))?;
        }
    }
    let src = |c: &[CoeffExpr]| c.iter().map(|e| e.source().to_string()).collect();
    let manifest = SketchManifest {
        format: SKETCH_FORMAT.into(),
        field: T::NAME.into(),
        embedding: sk.desc.clone(),
        k: bl.k(),
        r: bl.r(),
        appended: sk.appended,
        a_coeffs: src(&bl.a_coeffs),
        b_coeffs: src(&bl.b_coeffs),
        l_coeffs: if bl.l_terms.is_some() { src(&bl.l_coeffs) } else { vec![] },
        p,
        blocks: files,
    };
    let mut w = create(&dir.join("sketch.json"))?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.flush()?;
    Ok(())
}

pub fn read_sketch_manifest(dir: &Path) -> Result<SketchManifest> {
    let m: SketchManifest = serde_json::from_reader(open(&dir.join("sketch.json"))?)?;
    if m.format != SKETCH_FORMAT {
        return Err(Error::Format(format!("unknown sketch format `{}`", m.format)));
    }
    Ok(m)
}

pub fn read_sketch<T: Field>(dir: &Path) -> Result<ThetaSketch<T>> {
    let m = read_sketch_manifest(dir)?;
    if m.field != T::NAME {
        return Err(Error::Format(format!("sketch field is {}, expected {}", m.field, T::NAME)));
    }
    let (na, nb, nl) = (m.a_coeffs.len(), m.b_coeffs.len(), m.l_coeffs.len());
    if m.blocks.len() != 1 + na + nb + nl {
        return Err(Error::Format("sketch manifest block count mismatch".into()));
    }
    let mut it = m.blocks.iter();
    let mut next = || load_block::<T>(&dir.join(it.next().unwrap()));
    let u = next()?;
    let v_terms = (0..na).map(|_| next()).collect::<Result<Vec<_>>>()?;
    let col = |x: DMatrix<T>| -> Result<DVector<T>> {
        if x.ncols() != 1 {
            return Err(Error::Format("expected a column block".into()));
        }
        Ok(x.column(0).into_owned())
    };
    let b_terms = (0..nb).map(|_| col(next()?)).collect::<Result<Vec<_>>>()?;
    let l_terms = (0..nl).map(|_| col(next()?)).collect::<Result<Vec<_>>>()?;
    let parse = |v: &[String]| v.iter().map(|s| parse_coeff(s, m.p)).collect::<Result<Vec<_>>>();
    for x in v_terms.iter().chain(std::iter::once(&u)) {
        if x.shape() != (m.k, m.r) {
            return Err(Error::Format("sketch block has wrong shape".into()));
        }
    }
    Ok(ThetaSketch {
        blocks: SketchBlocks {
            u,
            v_terms,
            a_coeffs: parse(&m.a_coeffs)?,
            b_terms: Arc::new(b_terms),
            b_coeffs: parse(&m.b_coeffs)?,
            l_terms: if nl > 0 { Some(Arc::new(l_terms)) } else { None },
            l_coeffs: parse(&m.l_coeffs)?,
        },
        desc: m.embedding,
        appended: m.appended,
    })
}

pub fn write_greedy_log<W: Write>(w: W, log: &[GreedyLogEntry]) -> Result<()> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["iteration", "selected", "mu", "estimator", "k", "k_prime"])
        .map_err(csv_err)?;
    for e in log {
        let mu = e.mu.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(";");
        c.write_record([
            e.iteration.to_string(),
            e.selected.to_string(),
            mu,
            format!("{:e}", e.estimator),
            e.k.to_string(),
            e.k_prime.map_or(String::new(), |k| k.to_string()),
        ])
        .map_err(csv_err)?;
    }
    c.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// JSON record of a reduced or sparse solution; complex coordinates are
/// written as `[re, im]` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub mu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub support: Vec<usize>,
    pub coords: Vec<[f64; 2]>,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn coords<T: Field>(a: &DVector<T>) -> Vec<[f64; 2]> {
    a.iter()
        .map(|v| {
            let z = v.to_c64();
            [z.re, z.im]
        })
        .collect()
}

impl SolutionRecord {
    pub fn from_reduced<T: Field>(s: &ReducedSolution<T>) -> Self {
        SolutionRecord {
            mu: s.mu.clone(),
            support: s.support.clone(),
            coords: coords(&s.coords),
            delta: s.delta,
            error: None,
        }
    }

    pub fn from_sparse<T: Field>(s: &SparseSolution<T>) -> Self {
        SolutionRecord {
            mu: s.mu.clone(),
            support: s.support.clone(),
            coords: coords(&s.coords),
            delta: s.delta,
            error: None,
        }
    }

    pub fn failed(mu: &[f64], e: &Error) -> Self {
        SolutionRecord {
            mu: mu.to_vec(),
            support: vec![],
            coords: vec![],
            delta: f64::NAN,
            error: Some(e.to_string()),
        }
    }

    pub fn coords_as<T: Field>(&self) -> Result<DVector<T>> {
        let v = self
            .coords
            .iter()
            .map(|&[re, im]| T::from_c64(Complex64::new(re, im)))
            .collect::<Result<Vec<T>>>()?;
        Ok(DVector::from_vec(v))
    }
}

/// One row of a QoI report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QoiRow {
    pub mu: Vec<f64>,
    pub s_re: f64,
    pub s_im: f64,
    pub bound: Option<f64>,
}

pub fn write_qoi_csv<W: Write>(w: W, rows: &[QoiRow]) -> Result<()> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["mu", "s_re", "s_im", "bound"]).map_err(csv_err)?;
    for r in rows {
        let mu = r.mu.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(";");
        c.write_record([
            mu,
            format!("{:e}", r.s_re),
            format!("{:e}", r.s_im),
            r.bound.map_or(String::new(), |b| format!("{b:e}")),
        ])
        .map_err(csv_err)?;
    }
    c.flush()?;
    Ok(())
}

/// Parameter sets as JSON arrays of arrays.
pub fn read_params(path: &Path) -> Result<Vec<Vec<f64>>> {
    Ok(serde_json::from_reader(open(path)?)?)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Reads `W_p` (sparse Matrix Market).
pub fn read_wp<T: Field>(path: &Path) -> Result<CsrMatrix<T>> {
    read_matrix_market(open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_roundtrip() {
        let m = DMatrix::from_fn(3, 2, |i, j| Complex64::new(i as f64, -(j as f64) * 0.5));
        let mut buf = Vec::new();
        write_block(&mut buf, &m).unwrap();
        assert_eq!(buf.len(), 24 + 6 * 16);
        let back: DMatrix<Complex64> = read_block(&mut buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert!(read_block::<f64, _>(&mut buf.as_slice()).is_err());
        buf[0] = b'X';
        assert!(read_block::<Complex64, _>(&mut buf.as_slice()).is_err());
    }
}
