use std::fmt;

use thiserror::Error;

/// Broad failure classes, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numerical,
    Precondition,
    Io,
}

/// A sampled input on which a coefficient audit failed.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Witness {
    pub t: f64,
    pub x: f64,
    pub u: f64,
    pub v: f64,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(t={}, x={}, u={}, v={})", self.t, self.x, self.u, self.v)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Parameter(String),

    #[error("moment of order p={p} diverges for alpha={alpha} (need p > alpha)")]
    Divergent { p: f64, alpha: f64 },

    #[error("cutoff {requested} exceeds the sampled cutoff {sampled}; jumps above it were never drawn")]
    Unobservable { requested: f64, sampled: f64 },

    #[error("heat kernel at t = 0 is a delta distribution; use convolution semantics instead")]
    DeltaSingularity,

    #[error("kernel truncation cannot reach tolerance {abs_tol:e} at t={t} with {method} ({needed} terms needed, {available} configured)")]
    KernelAccuracy {
        t: f64,
        method: &'static str,
        needed: usize,
        available: usize,
        abs_tol: f64,
    },

    #[error("quadrature did not converge: coarse={coarse}, refined={refined}")]
    Quadrature { coarse: f64, refined: f64 },

    #[error("Picard iteration did not contract on window starting at step {start_step} ({steps} steps): observed ratio {ratio:.4} after {iterations} iterations")]
    NonContraction {
        start_step: usize,
        steps: usize,
        ratio: f64,
        iterations: usize,
    },

    #[error("non-finite value at t={t}")]
    BlowUp { t: f64 },

    #[error("{hypothesis} violated at {witness}: {detail}")]
    Hypothesis {
        hypothesis: &'static str,
        witness: Witness,
        detail: String,
    },

    #[error("precondition failed ({hypothesis}): {detail}")]
    Precondition { hypothesis: &'static str, detail: String },

    #[error("path {index} (seed {seed}) failed: {source}")]
    Path {
        index: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed noise file, line {line}: {detail}")]
    Format { line: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Parameter(_) | Error::Divergent { .. } | Error::Unobservable { .. } => ErrorClass::Validation,
            Error::Format { .. } => ErrorClass::Validation,
            Error::DeltaSingularity
            | Error::KernelAccuracy { .. }
            | Error::Quadrature { .. }
            | Error::NonContraction { .. }
            | Error::BlowUp { .. } => ErrorClass::Numerical,
            Error::Hypothesis { .. } | Error::Precondition { .. } => ErrorClass::Precondition,
            Error::Path { source, .. } => source.class(),
            Error::Io(_) => ErrorClass::Io,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
