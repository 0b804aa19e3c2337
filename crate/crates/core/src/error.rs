use core::fmt;

use crate::model::Interpretation;

/// Crate-wide error type. Every failure carries enough context to reproduce
/// it: offending time, dimensions, or path/step indices.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector or matrix dimension does not match the system.
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// Schedule evaluated outside its knot range.
    ScheduleRange { t: f64, lo: f64, hi: f64 },
    /// Malformed schedule construction (knot count, ordering, value shapes).
    Schedule(&'static str),
    /// Operation called on a system with the wrong calculus interpretation.
    WrongInterpretation {
        expected: Interpretation,
        got: Interpretation,
    },
    /// A state or coefficient became non-finite during integration.
    NonFinite {
        what: &'static str,
        t: f64,
        path_index: Option<u64>,
        step: Option<usize>,
    },
    /// Covariance lost numerical positive semidefiniteness.
    NotPsd { t: f64, min_eig: f64, trace: f64 },
    /// Matrix expected to be symmetric is not, beyond tolerance.
    NotSymmetric { what: &'static str, max_skew: f64 },
    /// Empty sample set where at least one sample is required.
    EmptySamples,
    /// exp(s.x) overflowed; the caller must pick a smaller s.
    ExpOverflow { arg: f64 },
    /// A time does not land on the grid.
    OffGrid { t: f64 },
    /// Invalid scalar argument or parameter (message says which).
    Invalid(&'static str),
    /// Linear solve hit a numerically singular matrix.
    Singular,
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension {
                what,
                expected,
                got,
            } => write!(f, "dimension mismatch for {what}: expected {expected}, got {got}"),
            Error::ScheduleRange { t, lo, hi } => {
                write!(f, "schedule evaluated at t={t} outside its range [{lo}, {hi}]")
            }
            Error::Schedule(msg) => write!(f, "invalid schedule: {msg}"),
            Error::WrongInterpretation { expected, got } => {
                write!(f, "system has {got:?} interpretation, operation requires {expected:?}")
            }
            Error::NonFinite {
                what,
                t,
                path_index,
                step,
            } => {
                write!(f, "non-finite {what} at t={t}")?;
                if let Some(p) = path_index {
                    write!(f, ", path {p}")?;
                }
                if let Some(s) = step {
                    write!(f, ", step {s}")?;
                }
                Ok(())
            }
            Error::NotPsd { t, min_eig, trace } => write!(
                f,
                "covariance lost positive semidefiniteness at t={t}: min eigenvalue {min_eig}, trace {trace}"
            ),
            Error::NotSymmetric { what, max_skew } => {
                write!(f, "{what} is not symmetric: max |M_ij - M_ji| = {max_skew}")
            }
            Error::EmptySamples => write!(f, "empty sample set"),
            Error::ExpOverflow { arg } => {
                write!(f, "exp({arg}) is not finite; use a smaller s vector")
            }
            Error::OffGrid { t } => write!(f, "t={t} does not land on the time grid"),
            Error::Invalid(msg) => write!(f, "{msg}"),
            Error::Singular => write!(f, "matrix is numerically singular"),
        }
    }
}

impl core::error::Error for Error {}
