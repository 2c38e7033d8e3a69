use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid fractal: {0}")]
    InvalidFractal(String),

    #[error("vertex canonicalization collision at level {level}: {detail}")]
    Precision { level: usize, detail: String },

    #[error("fractal spec parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular trace: {0}")]
    SingularTrace(String),

    #[error("negative trace conductance {value:e} between boundary vertices {a} and {b}")]
    NegativeConductance { a: usize, b: usize, value: f64 },

    #[error("target unreachable: {0}")]
    Unreachable(String),

    #[error("cell labelling: {0}")]
    CellLabelling(String),

    #[error("renormalization did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("renormalization fixed point is not scalar: ratio spread {spread:e}")]
    NonScalarFixedPoint { spread: f64 },

    #[error("invalid conductance field: {0}")]
    InvalidField(String),

    #[error("insufficient trials: need at least {needed}, got {got}")]
    InsufficientTrials { needed: usize, got: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("malformed csv at line {line}: {msg}")]
    Csv { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
