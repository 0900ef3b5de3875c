//! Crate-wide error type.
//!
//! Every fallible operation in this crate returns [`Error`]. The variants
//! are grouped by what went wrong rather than by module, so callers (in
//! particular the CLI) can map them onto a small set of exit conditions:
//! bad input versus an internal consistency violation.

use std::fmt;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All error conditions reported by this crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A point index referred to a point that does not exist.
    IndexOutOfRange { index: usize, len: usize },
    /// Two points (or a point and a cloud) disagree on dimension.
    DimensionMismatch { expected: usize, found: usize },
    /// An operation received fewer data than it can meaningfully process.
    InsufficientData { what: &'static str, needed: usize, found: usize },
    /// A numeric argument was outside its documented domain.
    InvalidParameter { what: &'static str, detail: String },
    /// Input data contained a NaN or infinite value.
    NonFinite { what: &'static str },
    /// A simulated orbit left the guard region and is considered divergent.
    Divergence { step: usize },
    /// A series was constant (zero entropy) where variation is required.
    DegenerateInput { what: &'static str },
    /// Regime labeling found fewer overlap-graph components than regimes
    /// requested.
    Structure { requested: usize, found: usize },
    /// An internal invariant failed; this is a bug, not a user error.
    Integrity { detail: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range for {len} points")
            }
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::InsufficientData { what, needed, found } => {
                write!(f, "not enough {what}: need at least {needed}, found {found}")
            }
            Error::InvalidParameter { what, detail } => {
                write!(f, "invalid {what}: {detail}")
            }
            Error::NonFinite { what } => write!(f, "{what} contains a non-finite value"),
            Error::Divergence { step } => {
                write!(f, "orbit diverged at step {step} (coordinate exceeded guard bound)")
            }
            Error::DegenerateInput { what } => write!(f, "degenerate input: {what}"),
            Error::Structure { requested, found } => {
                write!(
                    f,
                    "requested {requested} regimes but the overlap graph has only {found} components"
                )
            }
            Error::Integrity { detail } => write!(f, "internal integrity violation: {detail}"),
        }
    }
}

impl std::error::Error for Error {}

impl Error {
    /// True when the error indicates an internal bug rather than bad input.
    pub fn is_integrity(&self) -> bool {
        matches!(self, Error::Integrity { .. })
    }
}
