use thiserror::Error;

use crate::estimation::FitReport;
use crate::matrix::IndexSet;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("index {0} appears more than once")]
    DuplicateIndex(usize),

    #[error("dimension {p} exceeds the enumeration cap {cap}")]
    DimensionTooLarge { p: usize, cap: usize },

    #[error("matrix is singular")]
    SingularMatrix,

    #[error("eliminated block is singular")]
    SingularBlock,

    #[error("sigma matrix is singular")]
    SingularSigma,

    #[error("mean parameter sigma[{index}][{index}] = {value} is outside (0, 1)")]
    MeanOutOfRange { index: usize, value: f64 },

    #[error("model is invalid: principal minor over {witness} is negative")]
    InvalidModel { witness: IndexSet },

    #[error("model is invalid: joint probability of state {state} is {value}")]
    NegativeProbability { state: u64, value: f64 },

    #[error("index set is empty")]
    EmptyIndexSet,

    #[error("observation has zero probability ({evidence})")]
    ZeroEvidence { evidence: f64 },

    #[error("indices must differ (got {0} twice)")]
    SameIndex(usize),

    #[error("index {0} is observed")]
    ObservedIndex(usize),

    #[error("conditional mean {mean} of variable {index} leaves [0, 1]")]
    InvalidConditionalMean { index: usize, mean: f64 },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("no valid parameterization matches the target moments")]
    InfeasibleTarget,

    #[error("invalid target moments: {0}")]
    InvalidTarget(String),

    #[error("optimizer did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize, report: Box<FitReport> },

    #[error("model assigns non-positive probability {value} to state {state}")]
    NonPositiveProbability { state: u64, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
