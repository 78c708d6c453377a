//! Θ-sketches of a reduced basis and their second-level Φ-sketches.
//!
//! A sketch stores `Θ U_r`, the affine terms `Θ R_U^{-1} A_i U_r` and
//! `Θ R_U^{-1} b_j`, and optionally `Θ R_U^{-1} l_j`. Online quantities are
//! assembled from these blocks only.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::embeddings::{EmbeddingDescriptor, L2Embedding, UEmbedding};
use crate::error::{check_dim, Error, Result};
use crate::expr::CoeffExpr;
use crate::ops::OpCount;
use crate::system::AffineParametricSystem;
use crate::Field;

/// Dense sketched blocks shared by Θ- and Φ-sketches.
#[derive(Debug, Clone)]
pub struct SketchBlocks<T> {
    pub u: DMatrix<T>,
    pub v_terms: Vec<DMatrix<T>>,
    pub a_coeffs: Vec<CoeffExpr>,
    pub b_terms: Arc<Vec<DVector<T>>>,
    pub b_coeffs: Vec<CoeffExpr>,
    pub l_terms: Option<Arc<Vec<DVector<T>>>>,
    pub l_coeffs: Vec<CoeffExpr>,
}

impl<T: Field> SketchBlocks<T> {
    pub fn k(&self) -> usize {
        self.u.nrows()
    }

    pub fn r(&self) -> usize {
        self.u.ncols()
    }

    /// `V(µ) = Σ θ_i(µ) V_i` and `b(µ) = Σ λ_j(µ) b_j`.
    pub fn assemble(&self, mu: &[f64]) -> Result<(DMatrix<T>, DVector<T>)> {
        self.assemble_counted(mu, &mut OpCount::default())
    }

    pub fn assemble_counted(&self, mu: &[f64], ops: &mut OpCount) -> Result<(DMatrix<T>, DVector<T>)> {
        let (k, r) = (self.k(), self.r());
        let mut v = DMatrix::zeros(k, r);
        for (term, c) in self.v_terms.iter().zip(&self.a_coeffs) {
            let t: T = c.eval_field(mu)?;
            v.zip_apply(term, |a, b| *a += t * b);
        }
        let mut b = DVector::zeros(k);
        for (term, c) in self.b_terms.iter().zip(&self.b_coeffs) {
            let t: T = c.eval_field(mu)?;
            b.axpy(t, term, T::one());
        }
        ops.read(k);
        ops.add(2 * (self.v_terms.len() * k * r + self.b_terms.len() * k) as u64);
        Ok((v, b))
    }

    /// Sketched output functional `Θ R_U^{-1} l(µ)`, if present.
    pub fn assemble_l(&self, mu: &[f64], ops: &mut OpCount) -> Result<DVector<T>> {
        let terms = self
            .l_terms
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("sketch has no output terms".into()))?;
        let mut l = DVector::zeros(self.k());
        for (term, c) in terms.iter().zip(&self.l_coeffs) {
            let t: T = c.eval_field(mu)?;
            l.axpy(t, term, T::one());
        }
        ops.read(self.k());
        ops.add(2 * (terms.len() * self.k()) as u64);
        Ok(l)
    }

    fn map_rows(&self, f: impl Fn(&DMatrix<T>) -> Result<DMatrix<T>> + Sync) -> Result<Self> {
        let vecs = |vs: &Vec<DVector<T>>| -> Result<Vec<DVector<T>>> {
            if vs.is_empty() {
                return Ok(Vec::new());
            }
            let m = DMatrix::from_columns(vs);
            let y = f(&m)?;
            Ok(y.column_iter().map(|c| c.into_owned()).collect())
        };
        Ok(SketchBlocks {
            u: f(&self.u)?,
            v_terms: self.v_terms.par_iter().map(&f).collect::<Result<_>>()?,
            a_coeffs: self.a_coeffs.clone(),
            b_terms: Arc::new(vecs(&self.b_terms)?),
            b_coeffs: self.b_coeffs.clone(),
            l_terms: match &self.l_terms {
                Some(l) => Some(Arc::new(vecs(l)?)),
                None => None,
            },
            l_coeffs: self.l_coeffs.clone(),
        })
    }

    /// Blocks restricted to the given basis columns.
    pub fn select(&self, idx: &[usize]) -> Self {
        let pick = |m: &DMatrix<T>| crate::dense::columns(m, idx);
        SketchBlocks {
            u: pick(&self.u),
            v_terms: self.v_terms.iter().map(pick).collect(),
            a_coeffs: self.a_coeffs.clone(),
            b_terms: self.b_terms.clone(),
            b_coeffs: self.b_coeffs.clone(),
            l_terms: self.l_terms.clone(),
            l_coeffs: self.l_coeffs.clone(),
        }
    }

    /// Right-multiplies the basis blocks by `t` (change of reduced coordinates).
    pub fn transform(&self, t: &DMatrix<T>) -> Self {
        SketchBlocks {
            u: &self.u * t,
            v_terms: self.v_terms.iter().map(|v| v * t).collect(),
            a_coeffs: self.a_coeffs.clone(),
            b_terms: self.b_terms.clone(),
            b_coeffs: self.b_coeffs.clone(),
            l_terms: self.l_terms.clone(),
            l_coeffs: self.l_coeffs.clone(),
        }
    }
}

/// Anything holding sketch blocks (Θ- or Φ-level).
pub trait Sketched<T: Field>: Sync {
    fn blocks(&self) -> &SketchBlocks<T>;
    fn embedding(&self) -> &EmbeddingDescriptor;
}

/// The Θ-sketch of a reduced model.
#[derive(Debug, Clone)]
pub struct ThetaSketch<T> {
    pub blocks: SketchBlocks<T>,
    pub desc: EmbeddingDescriptor,
    /// Columns appended since the last full build.
    pub appended: usize,
}

/// `Φ = Γ Θ` applied to every block of a Θ-sketch.
#[derive(Debug, Clone)]
pub struct PhiSketch<T> {
    pub blocks: SketchBlocks<T>,
    pub parent: EmbeddingDescriptor,
    pub gamma: EmbeddingDescriptor,
}

impl<T: Field> Sketched<T> for ThetaSketch<T> {
    fn blocks(&self) -> &SketchBlocks<T> {
        &self.blocks
    }
    fn embedding(&self) -> &EmbeddingDescriptor {
        &self.desc
    }
}

impl<T: Field> Sketched<T> for PhiSketch<T> {
    fn blocks(&self) -> &SketchBlocks<T> {
        &self.blocks
    }
    fn embedding(&self) -> &EmbeddingDescriptor {
        &self.gamma
    }
}

fn sketch_columns<T: Field>(
    sys: &AffineParametricSystem<T>,
    ur: &DMatrix<T>,
    theta: &UEmbedding<T>,
) -> Result<(DMatrix<T>, Vec<DMatrix<T>>)> {
    check_dim("basis rows", sys.n(), ur.nrows())?;
    check_dim("embedding domain", sys.n(), theta.n())?;
    let u = theta.apply(ur)?;
    let v = sys
        .a
        .terms()
        .par_iter()
        .map(|ai| theta.sketch_dual(&ai.mul_mat(ur)?))
        .collect::<Result<Vec<_>>>()?;
    Ok((u, v))
}

fn sketch_vectors<T: Field>(theta: &UEmbedding<T>, vs: &[DVector<T>]) -> Result<Vec<DVector<T>>> {
    let y = theta.sketch_dual(&DMatrix::from_columns(vs))?;
    Ok(y.column_iter().map(|c| c.into_owned()).collect())
}

/// Θ-sketch of `U_r` for `sys`.
pub fn build<T: Field>(
    sys: &AffineParametricSystem<T>,
    ur: &DMatrix<T>,
    theta: &UEmbedding<T>,
) -> Result<ThetaSketch<T>> {
    build_impl(sys, ur, theta, false)
}

/// As [`build`], also sketching the output terms `Θ R_U^{-1} l_j`.
pub fn build_with_output<T: Field>(
    sys: &AffineParametricSystem<T>,
    ur: &DMatrix<T>,
    theta: &UEmbedding<T>,
) -> Result<ThetaSketch<T>> {
    build_impl(sys, ur, theta, true)
}

fn build_impl<T: Field>(
    sys: &AffineParametricSystem<T>,
    ur: &DMatrix<T>,
    theta: &UEmbedding<T>,
    with_l: bool,
) -> Result<ThetaSketch<T>> {
    let (u, v_terms) = sketch_columns(sys, ur, theta)?;
    let b_terms = sketch_vectors(theta, sys.b.terms())?;
    let (l_terms, l_coeffs) = match (&sys.l, with_l) {
        (Some(l), true) => (Some(Arc::new(sketch_vectors(theta, l.terms())?)), l.coeffs().to_vec()),
        (None, true) => return Err(Error::InvalidArgument("system has no output functional".into())),
        _ => (None, Vec::new()),
    };
    Ok(ThetaSketch {
        blocks: SketchBlocks {
            u,
            v_terms,
            a_coeffs: sys.a.coeffs().to_vec(),
            b_terms: Arc::new(b_terms),
            b_coeffs: sys.b.coeffs().to_vec(),
            l_terms,
            l_coeffs,
        },
        desc: theta.descriptor().clone(),
        appended: 0,
    })
}

/// Sketch of `[U_r, new_cols]` from the sketch of `U_r`.
pub fn append<T: Field>(
    sk: &ThetaSketch<T>,
    sys: &AffineParametricSystem<T>,
    new_cols: &DMatrix<T>,
    theta: &UEmbedding<T>,
) -> Result<ThetaSketch<T>> {
    if theta.descriptor() != &sk.desc {
        return Err(Error::EmbeddingMismatch(
            "append with an embedding different from the one that built the sketch".into(),
        ));
    }
    if new_cols.ncols() == 0 {
        return Ok(sk.clone());
    }
    let (u, v) = sketch_columns(sys, new_cols, theta)?;
    let hcat = |a: &DMatrix<T>, b: &DMatrix<T>| {
        let mut m = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
        m.columns_mut(0, a.ncols()).copy_from(a);
        m.columns_mut(a.ncols(), b.ncols()).copy_from(b);
        m
    };
    let old = &sk.blocks;
    Ok(ThetaSketch {
        blocks: SketchBlocks {
            u: hcat(&old.u, &u),
            v_terms: old.v_terms.iter().zip(&v).map(|(a, b)| hcat(a, b)).collect(),
            a_coeffs: old.a_coeffs.clone(),
            b_terms: old.b_terms.clone(),
            b_coeffs: old.b_coeffs.clone(),
            l_terms: old.l_terms.clone(),
            l_coeffs: old.l_coeffs.clone(),
        },
        desc: sk.desc.clone(),
        appended: sk.appended + new_cols.ncols(),
    })
}

/// `Φ = Γ Θ`: applies `Γ` to every block.
pub fn second_level<T: Field>(sk: &ThetaSketch<T>, gamma: &L2Embedding) -> Result<PhiSketch<T>> {
    check_dim("Γ columns", sk.blocks.k(), gamma.n())?;
    if gamma.descriptor().shares_stream(&sk.desc) {
        return Err(Error::EmbeddingMismatch("Γ reuses the stream of Θ".into()));
    }
    Ok(PhiSketch {
        blocks: sk.blocks.map_rows(|m| gamma.apply(m))?,
        parent: sk.desc.clone(),
        gamma: gamma.descriptor().clone(),
    })
}
