//! Meshfree reduced-order modelling for parametric PDEs.
//!
//! The offline pipeline discretizes a parametric operator with RBF-FD on
//! scattered nodes, compresses snapshots into a POD basis and trains a ReLU
//! network to map parameters to reduced coefficients. The online phase is a
//! single forward pass followed by a basis expansion. The [`netcalc`] module
//! builds explicit ReLU networks (products, powers, Neumann-series inverses)
//! that approximate the same parametric map with guaranteed error.

pub mod container;
pub mod dnn;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod netcalc;
pub mod pipeline;
pub mod pod;
pub mod rbf_fd;
pub mod rom;

pub use error::{Error, Result};
