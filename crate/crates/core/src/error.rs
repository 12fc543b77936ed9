use thiserror::Error;

/// Errors produced by the solvers, the density machinery and the file readers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid exponent p = {0}: must satisfy p > 1")]
    InvalidExponent(f64),

    #[error("invalid power q = {0}: must satisfy q > 0")]
    InvalidPower(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("grid does not match parameters: {0}")]
    GridMismatch(String),

    #[error("density rejected: {0}")]
    InvalidDensity(String),

    #[error("density violates the MCP({curvature}, {dimension}) bounds (worst violation {violation:.3e})")]
    NotMcp {
        curvature: f64,
        dimension: f64,
        violation: f64,
    },

    #[error("integration step size underflow at x = {x}")]
    StepUnderflow { x: f64 },

    #[error("non-finite right-hand side at x = {x}")]
    NonFinite { x: f64 },

    #[error("integration exceeded {0} steps")]
    TooManySteps(usize),

    #[error("no eigenvalue bracket found below lambda = {lambda_max:e}")]
    Bracketing { lambda_max: f64 },

    #[error("trajectory is missing its {0} hitting point")]
    MissingHit(&'static str),

    #[error("oracle problem is degenerate: {0}")]
    DegenerateProblem(String),

    #[error("malformed density file at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status: 2 for rejected input, 3 for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::StepUnderflow { .. }
            | Error::NonFinite { .. }
            | Error::TooManySteps(_)
            | Error::Bracketing { .. }
            | Error::MissingHit(_)
            | Error::DegenerateProblem(_) => 3,
            _ => 2,
        }
    }
}
