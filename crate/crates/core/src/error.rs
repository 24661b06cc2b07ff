use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("equality rows are linearly dependent (rank {rank} < {rows})")]
    RankDeficientEqualities { rank: usize, rows: usize },

    #[error("constraint set is infeasible: {0}")]
    Infeasible(String),

    #[error("no pivot set for the equality block has condition number below {threshold:e} (best {condition:e})")]
    PivotFailure { condition: f64, threshold: f64 },

    #[error("empty truncation interval [{lower}, {upper}]")]
    EmptyInterval { lower: f64, upper: f64 },

    #[error("empty conditional interval for coordinate {coord}: [{lower}, {upper}]")]
    EmptyConditionalInterval { coord: usize, lower: f64, upper: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("slice level {level} does not exceed the infimum of psi")]
    EmptySlice { level: f64 },

    #[error("singular system: {0}")]
    Singular(&'static str),

    #[error("Newton iterations did not converge after {iterations} steps (gradient inf-norm {gradient_norm:e})")]
    NoConvergence {
        iterations: usize,
        gradient_norm: f64,
        last: Vec<f64>,
    },

    #[error("at least {needed} retained draws are required, got {got}")]
    TooFewDraws { needed: usize, got: usize },

    #[error("value {value} outside the admissible range [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("retained draw {row} violates the constraint set (worst slack {slack:e})")]
    ConstraintViolation { row: usize, slack: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Broad failure class, used by the command-line front end for exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Infeasible(_) => ErrorKind::Infeasible,
            Error::Parse(_)
            | Error::MissingColumn(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::DimensionMismatch(_)
            | Error::InvalidConfig(_)
            | Error::OutOfRange { .. } => ErrorKind::Input,
            Error::Io(_) => ErrorKind::Io,
            _ => ErrorKind::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Infeasible,
    Input,
    Io,
    Numerical,
}
