//! Compressed sparse row matrices and Matrix Market I/O.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{check_dim, Error, Result};
use crate::Field;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    pub(crate) nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Field> CsrMatrix<T> {
    /// Builds from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, trip: &[(usize, usize, T)]) -> Result<Self> {
        let mut order: Vec<usize> = (0..trip.len()).collect();
        for &(i, j, _) in trip {
            if i >= nrows || j >= ncols {
                return Err(Error::InvalidArgument(format!(
                    "entry ({i},{j}) outside {nrows}x{ncols}"
                )));
            }
        }
        order.sort_by_key(|&t| (trip[t].0, trip[t].1));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(trip.len());
        let mut values: Vec<T> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for t in order {
            let (i, j, v) = trip[t];
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![T::one(); n])
    }

    pub fn from_diagonal(d: &[T]) -> Self {
        let n = d.len();
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: d.to_vec(),
        }
    }

    pub fn from_dense(m: &DMatrix<T>) -> Self {
        let mut trip = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != T::zero() {
                    trip.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &trip).unwrap()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (idx, val) = self.row(i);
        match idx.binary_search(&j) {
            Ok(p) => val[p],
            Err(_) => T::zero(),
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (idx, val) = self.row(i);
            out.extend(idx.iter().zip(val).map(|(&j, &v)| (i, j, v)));
        }
        out
    }

    pub fn map<S: Field>(&self, f: impl Fn(T) -> S) -> CsrMatrix<S> {
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let trip: Vec<_> = self
            .triplets()
            .into_iter()
            .map(|(i, j, v)| (j, i, v.conjugate()))
            .collect();
        Self::from_triplets(self.ncols, self.nrows, &trip).unwrap()
    }

    pub fn mul_vec(&self, x: &DVector<T>) -> Result<DVector<T>> {
        check_dim("sparse matvec", self.ncols, x.len())?;
        let mut y = DVector::zeros(self.nrows);
        self.mul_vec_into(x.as_slice(), y.as_mut_slice());
        Ok(y)
    }

    pub(crate) fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = T::zero();
            for p in self.indptr[i]..self.indptr[i + 1] {
                s += self.values[p] * x[self.indices[p]];
            }
            *yi = s;
        }
    }

    /// `A^H x`.
    pub fn adjoint_mul_vec(&self, x: &DVector<T>) -> Result<DVector<T>> {
        check_dim("sparse adjoint matvec", self.nrows, x.len())?;
        let mut y = DVector::zeros(self.ncols);
        for i in 0..self.nrows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                y[self.indices[p]] += self.values[p].conjugate() * x[i];
            }
        }
        Ok(y)
    }

    pub fn mul_mat(&self, x: &DMatrix<T>) -> Result<DMatrix<T>> {
        check_dim("sparse matmul", self.ncols, x.nrows())?;
        let mut y = DMatrix::zeros(self.nrows, x.ncols());
        for c in 0..x.ncols() {
            let xc = x.column(c);
            let mut yc = y.column_mut(c);
            self.mul_vec_into(xc.as_slice(), yc.as_mut_slice());
        }
        Ok(y)
    }

    /// Largest entrywise deviation from Hermitian symmetry, relative to the largest entry.
    pub fn hermitian_defect(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        let scale = self.values.iter().map(|v| v.modulus()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for (i, j, v) in self.triplets() {
            worst = worst.max((v - self.get(j, i).conjugate()).modulus());
        }
        worst / scale
    }

    /// Sparsity pattern of `A + A^T` without the diagonal, as adjacency lists.
    pub fn symmetric_pattern(&self) -> Vec<Vec<usize>> {
        let n = self.nrows.max(self.ncols);
        let mut adj = vec![Vec::new(); n];
        for (i, j, _) in self.triplets() {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }

    /// `P A P^T` where `perm[new] = old`.
    pub fn permute_sym(&self, perm: &[usize]) -> Self {
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let trip: Vec<_> = self
            .triplets()
            .into_iter()
            .map(|(i, j, v)| (inv[i], inv[j], v))
            .collect();
        Self::from_triplets(self.nrows, self.ncols, &trip).unwrap()
    }
}

/// Union sparsity pattern of several same-shape matrices, with the position of
/// every term entry inside the union.
#[derive(Debug, Clone)]
pub(crate) struct UnionPattern {
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub maps: Vec<Vec<usize>>,
}

impl UnionPattern {
    pub fn new<T: Field>(mats: &[&CsrMatrix<T>]) -> Self {
        let n = mats[0].nrows;
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::new();
        for i in 0..n {
            let mut cols: Vec<usize> = mats.iter().flat_map(|m| m.row(i).0.iter().copied()).collect();
            cols.sort_unstable();
            cols.dedup();
            indices.extend_from_slice(&cols);
            indptr[i + 1] = indices.len();
        }
        let maps = mats
            .iter()
            .map(|m| {
                let mut map = Vec::with_capacity(m.nnz());
                for i in 0..n {
                    let u = &indices[indptr[i]..indptr[i + 1]];
                    for j in m.row(i).0 {
                        map.push(indptr[i] + u.binary_search(j).unwrap());
                    }
                }
                map
            })
            .collect();
        UnionPattern {
            indptr,
            indices,
            maps,
        }
    }

    pub fn combine<T: Field>(&self, ncols: usize, mats: &[&CsrMatrix<T>], coef: &[T]) -> CsrMatrix<T> {
        let mut values = vec![T::zero(); self.indices.len()];
        for ((m, map), &c) in mats.iter().zip(&self.maps).zip(coef) {
            for (v, &p) in m.values.iter().zip(map) {
                values[p] += c * *v;
            }
        }
        CsrMatrix {
            nrows: self.indptr.len() - 1,
            ncols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values,
        }
    }
}

// ---------------------------------------------------------------------------
// Matrix Market

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MmSymmetry {
    General,
    Symmetric,
    Hermitian,
    SkewSymmetric,
}

struct MmHeader {
    coordinate: bool,
    complex: bool,
    pattern: bool,
    symmetry: MmSymmetry,
}

fn parse_header(line: &str) -> Result<MmHeader> {
    let toks: Vec<String> = line.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    if toks.len() < 5 || toks[0] != "%%matrixmarket" || toks[1] != "matrix" {
        return Err(Error::Format(format!("bad Matrix Market header `{line}`")));
    }
    let coordinate = match toks[2].as_str() {
        "coordinate" => true,
        "array" => false,
        f => return Err(Error::Format(format!("unsupported storage `{f}`"))),
    };
    let (complex, pattern) = match toks[3].as_str() {
        "real" | "integer" | "double" => (false, false),
        "complex" => (true, false),
        "pattern" => (false, true),
        f => return Err(Error::Format(format!("unsupported field `{f}`"))),
    };
    let symmetry = match toks[4].as_str() {
        "general" => MmSymmetry::General,
        "symmetric" => MmSymmetry::Symmetric,
        "hermitian" => MmSymmetry::Hermitian,
        "skew-symmetric" => MmSymmetry::SkewSymmetric,
        f => return Err(Error::Format(format!("unsupported symmetry `{f}`"))),
    };
    Ok(MmHeader {
        coordinate,
        complex,
        pattern,
        symmetry,
    })
}

fn parse_num(tok: Option<&str>, line: usize) -> Result<f64> {
    tok.ok_or_else(|| Error::Format(format!("line {line}: missing value")))?
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: bad number")))
}

fn mm_body<R: BufRead>(r: R) -> Result<(MmHeader, Vec<(usize, String)>)> {
    let mut lines = r.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => parse_header(&l?)?,
        None => return Err(Error::Format("empty Matrix Market file".into())),
    };
    let mut body = Vec::new();
    for (no, l) in lines {
        let l = l?;
        let t = l.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        body.push((no + 1, t.to_string()));
    }
    Ok((header, body))
}

fn mm_value<T: Field>(h: &MmHeader, it: &mut std::str::SplitWhitespace, line: usize) -> Result<T> {
    if h.pattern {
        return Ok(T::one());
    }
    let re = parse_num(it.next(), line)?;
    let im = if h.complex { parse_num(it.next(), line)? } else { 0.0 };
    T::from_c64(Complex64::new(re, im))
}

/// Reads a sparse matrix in Matrix Market coordinate (or array) format.
pub fn read_matrix_market<T: Field, R: BufRead>(r: R) -> Result<CsrMatrix<T>> {
    let (h, body) = mm_body(r)?;
    let Some(((_, size), rest)) = body.split_first() else {
        return Err(Error::Format("missing size line".into()));
    };
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Format("bad size line".into())))
        .collect::<Result<_>>()?;
    if !h.coordinate {
        let d = read_dense_body::<T>(&h, &dims, rest)?;
        return Ok(CsrMatrix::from_dense(&d));
    }
    if dims.len() != 3 {
        return Err(Error::Format("coordinate size line needs rows cols nnz".into()));
    }
    let (nr, nc, nnz) = (dims[0], dims[1], dims[2]);
    if rest.len() != nnz {
        return Err(Error::Format(format!("expected {nnz} entries, found {}", rest.len())));
    }
    let mut trip = Vec::with_capacity(nnz * 2);
    for (line, l) in rest {
        let mut it = l.split_whitespace();
        let i: usize = parse_num(it.next(), *line)? as usize;
        let j: usize = parse_num(it.next(), *line)? as usize;
        if i == 0 || j == 0 || i > nr || j > nc {
            return Err(Error::Format(format!("line {line}: index out of range")));
        }
        let v: T = mm_value(&h, &mut it, *line)?;
        trip.push((i - 1, j - 1, v));
        if i != j {
            match h.symmetry {
                MmSymmetry::General => {}
                MmSymmetry::Symmetric => trip.push((j - 1, i - 1, v)),
                MmSymmetry::Hermitian => trip.push((j - 1, i - 1, v.conjugate())),
                MmSymmetry::SkewSymmetric => trip.push((j - 1, i - 1, -v)),
            }
        }
    }
    CsrMatrix::from_triplets(nr, nc, &trip)
}

fn read_dense_body<T: Field>(h: &MmHeader, dims: &[usize], rest: &[(usize, String)]) -> Result<DMatrix<T>> {
    if dims.len() != 2 {
        return Err(Error::Format("array size line needs rows cols".into()));
    }
    if h.symmetry != MmSymmetry::General {
        return Err(Error::Format("only general dense arrays are supported".into()));
    }
    let (nr, nc) = (dims[0], dims[1]);
    if rest.len() != nr * nc {
        return Err(Error::Format(format!("expected {} values, found {}", nr * nc, rest.len())));
    }
    let mut data = Vec::with_capacity(nr * nc);
    for (line, l) in rest {
        let mut it = l.split_whitespace();
        data.push(mm_value::<T>(h, &mut it, *line)?);
    }
    Ok(DMatrix::from_vec(nr, nc, data))
}

/// Reads a dense matrix (array format; coordinate files are densified).
pub fn read_dense<T: Field, R: BufRead>(r: R) -> Result<DMatrix<T>> {
    let (h, body) = mm_body(r)?;
    let Some(((_, size), rest)) = body.split_first() else {
        return Err(Error::Format("missing size line".into()));
    };
    if h.coordinate {
        let mut text = String::from("%%MatrixMarket matrix coordinate ");
        text += if h.pattern { "pattern" } else if h.complex { "complex" } else { "real" };
        text += match h.symmetry {
            MmSymmetry::General => " general\n",
            MmSymmetry::Symmetric => " symmetric\n",
            MmSymmetry::Hermitian => " hermitian\n",
            MmSymmetry::SkewSymmetric => " skew-symmetric\n",
        };
        text += size;
        text.push('\n');
        for (_, l) in rest {
            text += l;
            text.push('\n');
        }
        return Ok(read_matrix_market::<T, _>(text.as_bytes())?.to_dense());
    }
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Format("bad size line".into())))
        .collect::<Result<_>>()?;
    read_dense_body(&h, &dims, rest)
}

fn write_value<T: Field, W: Write>(w: &mut W, v: T) -> std::io::Result<()> {
    let z = v.to_c64();
    if T::IS_COMPLEX {
        write!(w, "{:e} {:e}", z.re, z.im)
    } else {
        write!(w, "{:e}", z.re)
    }
}

pub fn write_matrix_market<T: Field, W: Write>(w: &mut W, m: &CsrMatrix<T>) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate {} general", T::NAME)?;
    writeln!(w, "{} {} {}", m.nrows, m.ncols, m.nnz())?;
    for (i, j, v) in m.triplets() {
        write!(w, "{} {} ", i + 1, j + 1)?;
        write_value(w, v)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_dense<T: Field, W: Write>(w: &mut W, m: &DMatrix<T>) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix array {} general", T::NAME)?;
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for v in m.iter() {
        write_value(w, *v)?;
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::<f64>::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, 4.0)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 1), 0.0);
    }

    #[test]
    fn adjoint_matvec() {
        let m = CsrMatrix::from_triplets(
            2,
            3,
            &[(0, 0, Complex64::new(1.0, 1.0)), (1, 2, Complex64::new(0.0, 2.0))],
        )
        .unwrap();
        let x = DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]);
        let y = m.adjoint_mul_vec(&x).unwrap();
        let yd = m.to_dense().adjoint() * &x;
        assert!((y - yd).norm() < 1e-15);
    }

    #[test]
    fn matrix_market_roundtrip() {
        let m = CsrMatrix::from_triplets(
            3,
            3,
            &[(0, 0, Complex64::new(2.0, 0.0)), (2, 1, Complex64::new(-1.5, 0.25))],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&mut buf, &m).unwrap();
        let back: CsrMatrix<Complex64> = read_matrix_market(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert!(read_matrix_market::<f64, _>(buf.as_slice()).is_err());
    }

    #[test]
    fn matrix_market_symmetric() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n% c\n2 2 2\n1 1 4\n2 1 -1\n";
        let m: CsrMatrix<f64> = read_matrix_market(text.as_bytes()).unwrap();
        assert_eq!(m.get(0, 1), -1.0);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.hermitian_defect(), 0.0);
    }

    #[test]
    fn dense_roundtrip() {
        let d = DMatrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64 * 0.1);
        let mut buf = Vec::new();
        write_dense(&mut buf, &d).unwrap();
        let back: DMatrix<f64> = read_dense(buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }
}
