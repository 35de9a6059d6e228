use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input: files, shapes, labels, configuration.
    Validation,
    /// Inputs were well formed but the numerics could not be carried out.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: entry {col} is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("row {row}: entry {col} is negative ({value})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("row {row}: probabilities sum to {sum}, outside 1 +/- 1e-4")]
    RowSumViolation { row: usize, sum: f64 },
    #[error("expected {expected} classes, found {found}")]
    ClassCountMismatch { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} {what}, got {got}")]
    TooFew {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("label {label} at position {index} is out of range for {k} classes")]
    LabelOutOfRange { index: usize, label: u32, k: usize },
    #[error("label file is empty")]
    EmptyLabels,
    #[error("line {line}: {message}")]
    BadLabel { line: usize, message: String },
    #[error("anchor model `{0}` is not in the model list")]
    AnchorNotFound(String),
    #[error("duplicate model id `{0}`")]
    DuplicateModel(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("missing split `{split}` for {owner}")]
    MissingSplit { split: String, owner: String },
    #[error("missing fit for notion {notion} on split `{split}`")]
    MissingNotionFit { split: String, notion: String },
    #[error("score kind {0} needs logits, but the prediction set has none")]
    MissingLogits(String),
    #[error("pair score needs rows from two models")]
    MissingSecondRow,
    #[error("score vector is empty")]
    EmptyScores,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("transform mismatch: fit uses {fit}, inputs use {inputs}")]
    TransformMismatch { fit: String, inputs: String },
    #[error("true value at position {index} is {value}; MAPE needs strictly positive truths")]
    ZeroTruth { index: usize, value: f64 },

    #[error("all abscissae are identical; the line is undetermined")]
    DegenerateAbscissa,
    #[error("least-squares system is singular")]
    SingularFit,
    #[error("model `{0}` is in no pair and the anchor weight is zero; system is underdetermined")]
    Underdetermined(String),

    #[error("bad magic {0:?}, expected \"DDPM\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    BadVersion(u16),
    #[error("unknown flag bits {0:#06x}")]
    UnknownFlags(u16),
    #[error("header truncated: {0} bytes")]
    TruncatedHeader(usize),
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("shape {n}x{k} exceeds 2^31 entries")]
    ShapeOverflow { n: u32, k: u32 },
    #[error("shape {n}x{k} has an empty dimension")]
    EmptyShape { n: u32, k: u32 },

    #[error("{path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("{path}: referenced file does not exist")]
    DanglingPath { path: PathBuf },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("refusing to overwrite {0} (pass --force)")]
    WouldOverwrite(PathBuf),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::DegenerateAbscissa | Error::SingularFit | Error::Underdetermined(_) | Error::ZeroTruth { .. } => {
                ErrorClass::Numerical
            }
            _ => ErrorClass::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
