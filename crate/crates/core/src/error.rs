use thiserror::Error;

/// Errors raised anywhere in the vine toolkit.
#[derive(Debug, Error)]
pub enum VineError {
    #[error("invalid parameter for {family}: {reason}")]
    InvalidParameter { family: String, reason: String },

    #[error("value {value} outside the unit interval")]
    Domain { value: f64 },

    #[error("root finding did not converge after {iterations} iterations")]
    Convergence { iterations: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("Kendall's tau {tau} is incompatible with family {family}")]
    IncompatibleTau { family: String, tau: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid vine structure: {0}")]
    InvalidStructure(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("optimization failed for {edge}: {reason}")]
    Optimization { edge: String, reason: String },

    #[error("singular Hessian (condition number {condition:.3e})")]
    SingularHessian { condition: f64 },

    #[error("parameters were not estimated on this sample")]
    ParamsNotFitted,

    #[error("{failed} of {total} replicates failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("marginal fit failed: {0}")]
    MarginFit(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, VineError>;

impl From<csv::Error> for VineError {
    fn from(e: csv::Error) -> Self {
        VineError::Io(std::io::Error::other(e))
    }
}
