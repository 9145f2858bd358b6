//! Jet extended dynamic mode decomposition.
//!
//! Estimates Perron-Frobenius and Koopman operators (and their generators)
//! on finite-dimensional subspaces of an RKHS spanned by derivatives of the
//! kernel at a base point, then extracts spectra and eigenfunctions and
//! reconstructs the underlying dynamics.

pub mod error;
pub mod multiindex;
pub mod numerics;
pub mod rkhs;
pub mod estimator;
pub mod reconstruct;
pub mod spectral;
pub mod systems;

pub use error::{Error, Result};
pub use faer::c64;
