use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("syntax error at byte {offset}: {msg}")]
    Syntax { offset: usize, msg: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("mu[{index}] out of range for parameter dimension {dim}")]
    MuIndexOutOfRange { index: usize, dim: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("complex value {re}{im:+}j in a real system")]
    ComplexInRealField { re: f64, im: f64 },
    #[error("singular {what} (estimated condition {cond:.3e})")]
    Singular { what: &'static str, cond: f64 },
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("rank-deficient {0}")]
    RankDeficient(&'static str),
    #[error("n = {n} exceeds the dense limit {limit}")]
    DenseLimit { n: usize, limit: usize },
    #[error("{count} supports exceed the enumeration limit {limit}")]
    CombinatorialLimit { count: u128, limit: u128 },
    #[error("embedding mismatch: {0}")]
    EmbeddingMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}
