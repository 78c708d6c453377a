use std::fmt;

use sketchmor::Error;

pub const CONFIG: u8 = 2;
pub const NUMERIC: u8 = 3;
pub const CERTIFICATION: u8 = 4;

/// A command failure mapped to an exit code.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Numeric(anyhow::Error),
    Certification(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => CONFIG,
            Failure::Numeric(_) => NUMERIC,
            Failure::Certification(_) => CERTIFICATION,
        }
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        Failure::Config(anyhow::anyhow!("{msg}"))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "{e:#}"),
            Failure::Numeric(e) => write!(f, "numeric failure: {e:#}"),
            Failure::Certification(m) => write!(f, "certification failed: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_)
            | Error::Format(_)
            | Error::InvalidArgument(_)
            | Error::Syntax { .. }
            | Error::UnknownIdentifier { .. }
            | Error::MuIndexOutOfRange { .. }
            | Error::DimensionMismatch { .. }
            | Error::EmbeddingMismatch(_) => Failure::Config(e.into()),
            _ => Failure::Numeric(e.into()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Config(e.into())
    }
}
