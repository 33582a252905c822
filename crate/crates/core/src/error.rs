use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("loop is singular at sample lambda = {lambda}")]
    SingularLoop { lambda: Complex64 },

    #[error("pole: evaluation at {z} hits a denominator root")]
    Pole { z: Complex64 },

    #[error("integration path passes a pole near {z}")]
    PoleEncountered { z: Complex64 },

    #[error("Birkhoff system is numerically singular (condition {condition:.3e})")]
    BigCellViolation { condition: f64 },

    #[error("Iwasawa splitting failed: {0}")]
    CellBoundary(String),

    #[error("constant factor not in SO+(1,3)*S1 x SO(n)*S2 (residual {residual:.3e})")]
    NotInCell { residual: f64 },

    #[error("null condition violated (residual {residual:.3e})")]
    NullConditionViolated { residual: f64 },

    #[error("parse error at {line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("degenerate lift: |Y0| = {0:.3e}")]
    DegenerateLift(f64),

    #[error("branch point: |y_z| = {0:.3e}")]
    BranchPoint(f64),

    #[error("insufficient coverage: {0}")]
    InsufficientCoverage(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::SizeMismatch { .. } => "size_mismatch",
            Error::Numeric(_) => "numeric",
            Error::SingularLoop { .. } => "singular_loop",
            Error::Pole { .. } => "pole",
            Error::PoleEncountered { .. } => "pole_encountered",
            Error::BigCellViolation { .. } => "big_cell_violation",
            Error::CellBoundary(_) => "cell_boundary",
            Error::NotInCell { .. } => "not_in_cell",
            Error::NullConditionViolated { .. } => "null_condition_violated",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::DegenerateLift(_) => "degenerate_lift",
            Error::BranchPoint(_) => "branch_point",
            Error::InsufficientCoverage(_) => "insufficient_coverage",
        }
    }
}
