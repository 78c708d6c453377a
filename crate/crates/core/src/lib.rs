//! Random sketching for minimal-residual reduced order models.
//!
//! Offline, a reduced basis (or a dictionary of candidate vectors) is
//! compressed into a small sketch through an oblivious subspace embedding
//! `Θ = Ω Q`. Online, reduced solutions, residual estimates and outputs are
//! computed from the sketch alone, at a cost independent of the full
//! dimension. Sketch quality can be certified a posteriori with an
//! independent embedding.

pub mod bench;
pub mod certify;
pub mod dense;
pub mod dictionary;
pub mod embeddings;
pub mod error;
pub mod expr;
pub mod factor;
pub mod field;
pub mod io;
pub mod minres;
pub mod ops;
pub mod qoi;
pub mod sketch;
pub mod sparse;
pub mod system;

pub use error::{Error, Result};
pub use field::Field;
pub use num_complex::Complex64;
