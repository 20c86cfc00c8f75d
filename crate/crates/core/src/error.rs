use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("resolution too coarse: {0}")]
    ResolutionTooCoarse(String),

    #[error("invalid nonlinearity: {0}")]
    InvalidNonlinearity(String),

    /// `e^u` or `(1+u)^p` left the representable range; Newton must damp.
    #[error("nonlinearity overflow at u = {u}")]
    Overflow { u: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    /// The linear operator is not positive definite (or the iteration stalled,
    /// which is treated the same way by callers).
    #[error("indefinite operator: {0}")]
    IndefiniteOperator(String),

    #[error("eigenvalue iteration failed: {0}")]
    EigenFailure(String),

    #[error("undefined Rayleigh quotient: test function vanishes")]
    UndefinedQuotient,

    #[error("internal contradiction: {0}")]
    InternalContradiction(String),

    #[error("critical point too close to boundary at (r, z) = ({r}, {z})")]
    TooCloseToBoundary { r: f64, z: f64 },

    #[error("reflection leaves the domain for lambda = {0:?}")]
    GeometryViolation(Vec<f64>),

    #[error("continuation setup failed: {0}")]
    Setup(String),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("census mismatch: meridian reports {meridian} critical points, voxel scan finds {voxel} clusters")]
    CensusMismatch { meridian: usize, voxel: usize },

    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
