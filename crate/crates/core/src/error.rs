//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Adaptive quadrature ran out of subdivision depth; carries the worst interval.
    #[error("quadrature did not converge on [{lo:.6e}, {hi:.6e}] (error estimate {err:.3e})")]
    QuadratureDepth { lo: f64, hi: f64, err: f64 },

    /// Hypergeometric series did not converge within the iteration cap.
    #[error("2F1 series did not converge for a={a}, b={b}, c={c}, z={z}")]
    HypergeometricDivergence { a: f64, b: f64, c: f64, z: f64 },

    /// A caller violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Configuration text could not be parsed; names the offending line.
    #[error("config error (line {line}): {msg}")]
    Parse { line: usize, msg: String },

    /// A computed quantity violated an internal invariant (e.g. probability far outside [0, 1]).
    #[error("internal consistency failure: {0}")]
    Consistency(String),

    /// Unknown figure preset name.
    #[error("unknown figure preset '{0}' (expected fig2..fig6)")]
    UnknownFigure(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
