//! Dense real linear-algebra kernels.
//!
//! Everything here is a pure function of its inputs with fixed iteration
//! orders, so identical inputs at identical precision give bitwise-identical
//! outputs. Symmetric inputs are read from their lower triangle.

mod cholesky;
mod eig;
mod matrix;
mod norms;
mod qr;

pub use cholesky::{cholesky_spd, solve_spd, LowerTriangularFactor};
pub use eig::{symmetric_eig, SymmetricEigen};
pub use matrix::{Matrix, Precision};
pub use norms::{frobenius_norm, rel_frobenius_dev, spectral_norm};
pub use qr::thin_qr_rfactor;

