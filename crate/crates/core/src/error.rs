use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid subscript: {0}")]
    InvalidSubscript(String),
    #[error("invalid tensor word: {0}")]
    InvalidWord(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("unsupported label: {0}")]
    UnsupportedLabel(String),
    #[error("not hermitian: {0}")]
    NotHermitian(String),
    #[error("center not abelian: {0}")]
    CenterNotAbelian(String),
    #[error("not commuting: {0}")]
    NotCommuting(String),
    #[error("linearly dependent generators: {0}")]
    LinearlyDependent(String),
    #[error("basis not closed: {0}")]
    BasisNotClosed(String),
    #[error("not binary partitioned: {0}")]
    NotBinaryPartitioned(String),
    #[error("unlabeled quotient algebra")]
    Unlabeled,
    #[error("target dimension out of range: {0}")]
    TargetOutOfRange(String),
    #[error("invalid choice: {0}")]
    InvalidChoice(String),
    #[error("cannot extend to maximal abelian: {0}")]
    CannotExtend(String),
    #[error("invalid override: {0}")]
    InvalidOverride(String),
    #[error("not unitary: deviation {0:e}")]
    NotUnitary(f64),
    #[error("not in abelian exponential: residual {0:e}")]
    NotInExponential(f64),
    #[error("decomposition failed at {context}: {reason}")]
    Decomposition { context: String, reason: String },
    #[error("not expressible over site structure: {0}")]
    NotExpressible(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
