//! Dense and sparse linear algebra used throughout the crate.

pub mod qr;
pub mod sparse;
pub mod svd;

pub use qr::ColPivQr;
pub use sparse::{CsrMatrix, SparseLu};
pub use svd::{thin_svd, ThinSvd};

use nalgebra::DMatrix;

/// Largest singular value (spectral norm).
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if a.nrows().min(a.ncols()) <= 64 {
        return a.singular_values().max();
    }
    thin_svd(a).singular_values.first().copied().unwrap_or(0.0)
}
