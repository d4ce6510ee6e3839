//! Error and diagnostic types shared across the crate.

use serde::Serialize;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The data do not determine the requested quantity (e.g. a flat
    /// difference spectrum leaves the scaling factor undefined).
    #[error("identifiability error: {0}")]
    Identifiability(String),

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("no interior minimum: {0}")]
    NoMinimum(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::Range(_)
            | Error::GridMismatch(_)
            | Error::Parse { .. } => 2,
            Error::Identifiability(_) | Error::Singularity(_) | Error::NoMinimum(_) => 3,
            Error::Io(_) => 4,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Non-fatal conditions attached to otherwise successful results.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// The difference spectrum still carries an NV⁰ zero-phonon-line feature,
    /// so the NV⁰ component changed between the two fields.
    ModelViolation { nv0_zpl_score: f64, threshold: f64 },
    /// A scaling factor came out non-positive.
    NonPhysical { f: f64 },
    /// Transmissivities too close for a stable 2×2 inversion.
    Conditioning { t0: f64, tminus: f64 },
    /// All candidate values are equal; the lowest field was chosen.
    Flat,
    /// A decomposed component has negative samples.
    NegativeExcursion { count: usize, min: f64 },
    /// Pixels whose total was too small to form a fraction.
    ZeroTotal { count: usize },
}

/// A value together with the warnings raised while computing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Flagged<T> {
    pub value: T,
    pub warnings: Vec<Warning>,
}

impl<T> Flagged<T> {
    pub fn clean(value: T) -> Self {
        Flagged {
            value,
            warnings: Vec::new(),
        }
    }

    pub fn with(value: T, warnings: Vec<Warning>) -> Self {
        Flagged { value, warnings }
    }

    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty()
    }
}
