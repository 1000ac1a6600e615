use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("column {column} of migration segment {segment} sums to {residual:e}, expected 0")]
    ColumnSumViolation {
        segment: usize,
        column: usize,
        residual: f64,
    },

    #[error("migration segment {segment} has negative off-diagonal entry ({i}, {j})")]
    NegativeOffDiagonal { segment: usize, i: usize, j: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersionMismatch { found: u64, expected: u64 },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("unknown integrator `{0}`")]
    UnknownMethod(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix exponential overflowed")]
    Overflow,

    #[error("matrix entry ({i}, {j}) is not strictly positive")]
    NotPositive { i: usize, j: usize },

    #[error("eigenvalue iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("matrix is reducible")]
    Reducible,

    #[error("monodromy matrix is not positive (smallest scaled entry {min_entry:e})")]
    NonPositiveMonodromy { min_entry: f64 },

    #[error("integration failed: {0}")]
    IntegrationFailure(String),

    #[error("periodic solution defect {defect:e} exceeds {tolerance:e}")]
    PeriodicityDefectExceeded { defect: f64, tolerance: f64 },

    #[error("migration matrix depends on time")]
    NonConstantMigration,

    #[error("expected {expected} patches, found {found}")]
    WrongDimension { expected: usize, found: usize },

    #[error("no sign change of the slow-regime limit in [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },

    #[error("growth rate does not change sign on the grid")]
    NoZeroCrossing,

    #[error("Markov generator is reducible")]
    ReducibleChain,

    #[error("only {jumps} jumps in the simulated horizon (at least 100 required)")]
    DegenerateHorizon { jumps: u64 },

    #[error("unknown figure `{0}`")]
    UnknownFigure(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by malformed input rather than numerical trouble.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::ColumnSumViolation { .. }
                | Error::NegativeOffDiagonal { .. }
                | Error::Schema(_)
                | Error::Parse { .. }
                | Error::SchemaVersionMismatch { .. }
                | Error::UnknownModel(_)
                | Error::UnknownMethod(_)
                | Error::UnknownFigure(_)
                | Error::InvalidParameter(_)
                | Error::WrongDimension { .. }
                | Error::NonConstantMigration
                | Error::Reducible
                | Error::ReducibleChain
        )
    }

    /// Short machine-readable tag used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ColumnSumViolation { .. } => "ColumnSumViolation",
            Error::NegativeOffDiagonal { .. } => "NegativeOffDiagonal",
            Error::Schema(_) => "SchemaError",
            Error::Parse { .. } => "ParseError",
            Error::SchemaVersionMismatch { .. } => "SchemaVersionMismatch",
            Error::UnknownModel(_) => "UnknownModel",
            Error::UnknownMethod(_) => "UnknownMethod",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::Overflow => "Overflow",
            Error::NotPositive { .. } => "NotPositive",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::Reducible => "Reducible",
            Error::NonPositiveMonodromy { .. } => "NonPositiveMonodromy",
            Error::IntegrationFailure(_) => "IntegrationFailure",
            Error::PeriodicityDefectExceeded { .. } => "PeriodicityDefectExceeded",
            Error::NonConstantMigration => "NonConstantMigration",
            Error::WrongDimension { .. } => "WrongDimension",
            Error::BracketFailure { .. } => "BracketFailure",
            Error::NoZeroCrossing => "NoZeroCrossing",
            Error::ReducibleChain => "ReducibleChain",
            Error::DegenerateHorizon { .. } => "DegenerateHorizon",
            Error::UnknownFigure(_) => "UnknownFigure",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
