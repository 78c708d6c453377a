//! Scalar fields the solvers are generic over: `f64` and `Complex<f64>`.
//!
//! Embeddings have real entries; complex data is sketched by acting on the
//! real and imaginary parts separately.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub trait Field: ComplexField<RealField = f64> + Copy + Send + Sync + 'static {
    const IS_COMPLEX: bool;
    const NAME: &'static str;

    fn from_c64(z: Complex64) -> Result<Self>;
    fn to_c64(self) -> Complex64;

    /// Number of real parts (1 or 2).
    fn parts() -> usize {
        if Self::IS_COMPLEX {
            2
        } else {
            1
        }
    }

    /// Splits a matrix into its real (and imaginary) parts.
    fn split(m: &DMatrix<Self>) -> Vec<DMatrix<f64>>;
    fn join(parts: Vec<DMatrix<f64>>) -> DMatrix<Self>;

    fn from_re(x: f64) -> Self {
        Self::from_real(x)
    }
}

impl Field for f64 {
    const IS_COMPLEX: bool = false;
    const NAME: &'static str = "real";

    fn from_c64(z: Complex64) -> Result<Self> {
        if z.im != 0.0 {
            return Err(Error::ComplexInRealField { re: z.re, im: z.im });
        }
        Ok(z.re)
    }

    fn to_c64(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }

    fn split(m: &DMatrix<Self>) -> Vec<DMatrix<f64>> {
        vec![m.clone()]
    }

    fn join(mut parts: Vec<DMatrix<f64>>) -> DMatrix<Self> {
        parts.swap_remove(0)
    }
}

impl Field for Complex64 {
    const IS_COMPLEX: bool = true;
    const NAME: &'static str = "complex";

    fn from_c64(z: Complex64) -> Result<Self> {
        Ok(z)
    }

    fn to_c64(self) -> Complex64 {
        self
    }

    fn split(m: &DMatrix<Self>) -> Vec<DMatrix<f64>> {
        vec![m.map(|z| z.re), m.map(|z| z.im)]
    }

    fn join(parts: Vec<DMatrix<f64>>) -> DMatrix<Self> {
        let (re, im) = (&parts[0], &parts[1]);
        DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| Complex64::new(re[(i, j)], im[(i, j)]))
    }
}

pub(crate) fn col_to_mat<T: Field>(v: &DVector<T>) -> DMatrix<T> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

/// Plain Euclidean inner product `y^H x`.
pub fn dot<T: Field>(x: &DVector<T>, y: &DVector<T>) -> T {
    y.dotc(x)
}
