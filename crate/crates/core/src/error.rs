use thiserror::Error;

/// Everything that can go wrong inside the library.
///
/// Variants are grouped by how the command-line front end reports them: bad
/// input (exit 1), failed numerical-health checks (exit 2) and I/O (exit 3).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {dim}: need at least {min}")]
    InvalidDimension { dim: usize, min: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "truncation: {what} carries probability {tail:.3e} beyond the representable tail \
         (limit {limit:.1e}, dim {dim})"
    )]
    Truncation { what: String, tail: f64, limit: f64, dim: usize },

    #[error("boundary leak: probability {leak:.3e} within the grid edge band at t = {t} (limit {limit:.1e})")]
    BoundaryLeak { leak: f64, t: f64, limit: f64 },

    #[error("Fock tail leak: probability {leak:.3e} in the top basis states at t = {t} (limit {limit:.1e})")]
    TailLeak { leak: f64, t: f64, limit: f64 },

    #[error("step size: halving dt changes the final state by fidelity deficit {deficit:.3e} (limit {limit:.1e})")]
    StepSize { deficit: f64, limit: f64 },

    #[error("basis conversion lost {lost:.3e} of the norm (limit {limit:.1e})")]
    BasisConversion { lost: f64, limit: f64 },

    #[error("state is not a parity eigenstate: minority-parity probability {weight:.3e}")]
    ParityViolation { weight: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used for process exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Numerical,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidDimension { .. }
            | Error::DimensionMismatch { .. }
            | Error::InvalidParameter { .. }
            | Error::InvalidInput(_)
            | Error::Config(_) => ErrorKind::Input,
            Error::Truncation { .. }
            | Error::BoundaryLeak { .. }
            | Error::TailLeak { .. }
            | Error::StepSize { .. }
            | Error::BasisConversion { .. }
            | Error::ParityViolation { .. } => ErrorKind::Numerical,
            Error::Io { .. } => ErrorKind::Io,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
