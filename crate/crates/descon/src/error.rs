//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide error enumeration.
///
/// The CLI maps variants onto exit codes: input/parse problems exit 2,
/// numerical failures exit 3, verdict failures (not errors) exit 1.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input (shape mismatch, non-finite entries,
    /// out-of-range argument).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A transformation matrix failed to produce the required zero pattern.
    #[error("decomposition invalid: block residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    DecompositionInvalid { residual: f64, tol: f64 },

    /// A certificate matrix violated a structural precondition (singular,
    /// asymmetric, indefinite weight).
    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),

    /// An analysis has no defined answer for the given data
    /// (e.g. detectability of an irregular pencil).
    #[error("analysis undefined: {0}")]
    AnalysisUndefined(String),

    /// A topology set violates the declared connectivity mode.
    #[error("mode violation: {0}")]
    ModeViolation(String),

    /// The cross-check oracle cannot be constructed for this input.
    #[error("oracle undefined: {0}")]
    OracleUndefined(String),

    /// An implicit integration step could not be solved.
    #[error("integration step failure: {0}")]
    StepFailure(String),

    /// Scenario file problem, with the offending field path.
    #[error("parse error at `{path}`: {msg}")]
    Parse { path: String, msg: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn parse(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code the CLI uses for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_)
            | Error::Parse { .. }
            | Error::InvalidCertificate(_)
            | Error::ModeViolation(_)
            | Error::Io(_) => 2,
            Error::DecompositionInvalid { .. }
            | Error::AnalysisUndefined(_)
            | Error::OracleUndefined(_)
            | Error::StepFailure(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
