//! Conformal perturbations of Hodge-Laplacians on warped-product ends:
//! exact fiber algebra, discrete graded de Rham complexes, truncated spectra
//! and numerical scattering diagnostics.

pub mod error;
pub mod expr;
pub mod exterior;
pub mod geometry;
pub mod linalg;
pub mod quad;
pub mod scattering;
pub mod spectral;

pub use error::{Error, Result};
pub use expr::Expr;
