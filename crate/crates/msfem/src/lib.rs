//! Multiscale solver for single-phase Darcy flow on structured rectangular grids.
//!
//! The fine-scale discretization is a mixed finite element method with a
//! trapezoidal quadrature rule that renders the velocity mass matrix diagonal,
//! so the velocity can be eliminated edge by edge and the pressure satisfies a
//! symmetric positive definite five-point system driven by edge
//! transmissibilities (harmonic averages of cell permeabilities). On top of
//! that fine system the crate builds generalized multiscale spaces: local
//! snapshot solves on oversampled coarse blocks, a spectral decomposition that
//! ranks snapshot combinations by velocity energy against weighted pressure
//! mass, residual-driven error indicators, and adaptive enrichment loops that
//! grow the coarse space either from the precomputed eigenbasis (offline) or
//! from locally solved residual representatives (online).
//!
//! Modules mirror the pipeline:
//!
//! - [`grid`]: fine/coarse structured grids, oversampled blocks, coloring
//! - [`field`]: permeability and source fields, transmissibilities, weights
//! - [`fine`]: fine-scale assembly, solves, flux recovery, norms, oracles
//! - [`snapshot`]: local snapshot families and source correction functions
//! - [`spectral`]: local generalized eigenproblems and offline basis selection
//! - [`multiscale`]: coarse space bookkeeping, coarse assembly and solves
//! - [`indicator`]: offline/online error indicators and element selection
//! - [`adapt`]: enrichment loops, stopping rules, run histories

pub mod adapt;
pub mod error;
pub mod field;
pub mod fine;
pub mod grid;
pub mod indicator;
pub mod linalg;
pub mod multiscale;
pub mod snapshot;
pub mod spectral;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
