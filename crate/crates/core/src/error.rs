use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
///
/// Every variant names the parameter or object that caused it so that callers
/// (in particular the CLI) can report the offending input verbatim.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("wrong regime for `{operation}`: {reason}")]
    WrongRegime {
        operation: &'static str,
        reason: String,
    },

    #[error("length mismatch: {what} (expected {expected}, got {got})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("eigensolver did not converge on {matrix} after {iterations} iterations (shift history tail: {shifts:?})")]
    NoConvergence {
        matrix: String,
        iterations: usize,
        shifts: Vec<f64>,
    },

    #[error("eigenvector matrix is near-defective (condition number {condition:.3e}); use RK4 instead")]
    Defective { condition: f64 },

    /// The eigenvector expansion does not reproduce the initial state, even
    /// though the eigenvector matrix passed the condition check.
    #[error("eigenbasis does not reproduce the initial state (relative error {error:.3e}); use RK4 instead")]
    Unrepresentable { error: f64 },

    #[error("integration blew up at tau = {tau}: non-finite state")]
    NonFinite { tau: f64 },

    #[error("propagated state is not real at tau = {tau}: imaginary residue {residue:.3e}")]
    NotReal { tau: f64, residue: f64 },

    #[error("step too large: dt*|G| = {product:.3} exceeds the stability bound {bound}")]
    UnstableStep { product: f64, bound: f64 },

    #[error("splitting not resolvable in double precision: predicted {predicted:.3e} is below {floor:.3e}")]
    Unresolvable { predicted: f64, floor: f64 },

    #[error("spectrum is not purely imaginary (max |Re| = {max_real:.3e}); the generator is not in the oscillatory regime")]
    NotImaginary { max_real: f64 },

    #[error("value out of range in {context}: {detail}")]
    Overflow {
        context: &'static str,
        detail: String,
    },

    #[error("packet touches the boundary: weight {weight:.3e} within {sites} sites of an edge at tau = {tau}")]
    BoundaryContact { weight: f64, sites: usize, tau: f64 },

    #[error("continuum packet has collapsed: squared width {width_sq:.4} at tau = {tau}")]
    ContinuumCollapse { width_sq: f64, tau: f64 },

    #[error("not enough points for `{operation}`: need {needed}, have {have}")]
    InsufficientData {
        operation: &'static str,
        needed: usize,
        have: usize,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn regime(operation: &'static str, reason: impl Into<String>) -> Self {
        Error::WrongRegime {
            operation,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
