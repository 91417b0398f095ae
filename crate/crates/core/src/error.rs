use crate::client::SampleId;

/// Errors raised anywhere in the unlearning engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not symmetric positive definite (pivot {index} = {pivot:e})")]
    NotSpd { index: usize, pivot: f64 },

    #[error("symmetric eigensolver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("relative deviation undefined: reference matrix has zero norm")]
    ZeroReference,

    #[error("sample count would become negative ({have} - {remove})")]
    NegativeCount { have: u64, remove: u64 },

    #[error("downdate infeasible: capacitance matrix I - U T U^T is not positive definite")]
    DowndateInfeasible,

    #[error("sample {0} is already retained")]
    DuplicateId(SampleId),

    #[error("sample {0} is not retained by this client")]
    UnknownDeleteId(SampleId),

    #[error("sample {0} was not ingested in the current round")]
    UnknownAddId(SampleId),

    #[error("messages belong to different rounds ({0} and {1})")]
    MixedRound(u32, u32),

    #[error("messages mix variants or precisions")]
    MixedVariant,

    #[error("deletion volume exceeds retained statistics: {0}")]
    InvalidDeletion(String),

    #[error("perturbation bound assumption violated: ||T_ap E||_2 = {contraction} >= 1")]
    AssumptionViolated { contraction: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("wire format: {0}")]
    Wire(String),

    #[error("i/o: {0}")]
    Io(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_mismatch(expected: (usize, usize), got: (usize, usize)) -> Error {
    Error::DimensionMismatch {
        expected: format!("{}x{}", expected.0, expected.1),
        got: format!("{}x{}", got.0, got.1),
    }
}
