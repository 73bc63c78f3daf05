use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised anywhere in the core pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("regularized normal matrix is not positive definite (pivot {pivot:e}); increase the ridge lambda")]
    SolveFailure { pivot: f64 },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("{rows} equations for {unknowns} unknowns needs a positive ridge lambda")]
    UnderdeterminedWithoutRidge { rows: usize, unknowns: usize },
    #[error("{op} is undefined for input {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("decomposition weights at timestep {timestep} sum to zero")]
    DegenerateWeights { timestep: usize },
    #[error("weight pair ({alpha}, {beta}) carries no mass")]
    DegeneratePair { alpha: f64, beta: f64 },
    #[error("empty sequence")]
    EmptySequence,
    #[error("every target is zero; MAPE is undefined")]
    AllZeroTargets,
    #[error("loss became non-finite at epoch {epoch}; the learning rate is likely too high")]
    NonFiniteLoss { epoch: usize },
    #[error("table has {rows} rows but a window of length {window} needs at least {needed}")]
    TooShort {
        rows: usize,
        window: usize,
        needed: usize,
    },
    #[error("variable '{0}' has zero variance on the training split")]
    ZeroVariance(String),
    #[error("target column '{0}' not found")]
    MissingTarget(String),
    #[error("table has no usable rows")]
    EmptyTable,
    #[error("dataset has {got} variables but the model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn shape_err<T>(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Result<T> {
    Err(Error::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    })
}
