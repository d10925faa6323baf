//! Error type shared across the crate.

use thiserror::Error;

/// Failure modes of grid construction, field loading, and the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid sizes, non-divisible grids, malformed spec strings, bad flags.
    #[error("configuration error: {0}")]
    Config(String),

    /// File could not be read or written.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Raster file contents violate the format contract.
    #[error("field data error: {0}")]
    FieldData(String),

    /// A permeability value must be strictly positive and finite.
    #[error("non-positive permeability {value} at cell {cell} (ix={ix}, iy={iy})")]
    NonPositivePermeability {
        cell: usize,
        ix: usize,
        iy: usize,
        value: f64,
    },

    /// The boundary specification leaves the pressure ungrounded.
    #[error("boundary specification has no Dirichlet side; pressure is only defined up to a constant")]
    AllNeumann,

    /// Direct factorization hit a non-positive pivot.
    #[error("factorization failed at pivot {index}: matrix is not positive definite ({detail})")]
    NotPositiveDefinite { index: usize, detail: String },

    /// Iterative solver stopped before reaching the requested tolerance.
    #[error("iterative solver stalled after {iterations} iterations at relative residual {residual:.3e} (target {target:.3e})")]
    SolverStalled {
        iterations: usize,
        residual: f64,
        target: f64,
    },

    /// The coarse system factorization detected (near-)dependent basis fields.
    #[error("coarse system is numerically singular at dof {dof}; the multiscale basis contains (near-)dependent fields, reduce the basis count")]
    DependentBasis { dof: usize },

    /// A relative error was requested against a zero reference field.
    #[error("relative error undefined: reference {name} norm is zero")]
    ZeroReference { name: &'static str },

    /// An operation was called with arguments that cannot be satisfied.
    #[error("usage error: {0}")]
    Usage(String),
}

impl Error {
    /// Shortcut for [`Error::Config`] from anything displayable.
    pub fn config(msg: impl std::fmt::Display) -> Self {
        Error::Config(msg.to_string())
    }
}
