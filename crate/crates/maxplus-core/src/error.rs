use thiserror::Error;

/// Errors raised by model validation, closed forms, simulation and lattice
/// construction. Numerical *disagreement* is never an error: verification
/// routines return reports with residuals so callers can decide.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor argument violates its documented constraint.
    #[error("invalid parameter `{name}` = {value}: {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    /// An operation was called outside its mathematical domain
    /// (e.g. an infinite-horizon formula with gamma <= 1).
    #[error("domain error: {0}")]
    Domain(String),

    /// Root bracketing or bisection could not certify a root.
    #[error("root finding failed: {0}")]
    RootFinding(String),

    /// A lattice is structurally malformed (probabilities, layering,
    /// reachability) or too large for exact path enumeration.
    #[error("lattice error: {0}")]
    Lattice(String),

    /// Lattice JSON could not be parsed or validated.
    #[error("lattice JSON error: {0}")]
    LatticeJson(String),

    /// A path bundle is in the wrong supremum mode for the requested
    /// operation (e.g. bridge-correcting a tail-augmented path).
    #[error("path state error: {0}")]
    PathState(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, constraint: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            constraint,
        }
    }
}
