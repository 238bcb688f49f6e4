//! Spectral splitting for gapped operator matrices.
//!
//! The crate studies a Hermitian base operator with a spectral gap at zero,
//! perturbed by a coupling `gamma * V` that is controlled by the base in
//! form sense. It provides:
//!
//! - dense complex linear algebra kernels ([`linalg`]),
//! - relative form bounds and the induced spectral enclosures ([`form`]),
//! - resolvent-integral spectral splitting with a triangular-form
//!   cross-check ([`riesz`]),
//! - angular operators between perturbed and reference splittings, block
//!   diagonalization and direct rotations ([`angular`]),
//! - coupling-series expansions of the splitting with certified truncation
//!   error ([`dkh`]),
//! - a concrete relativistic kinetic-energy family exercising all of the
//!   above ([`dirac`]),
//! - deterministic sample-problem generators ([`instances`]).

pub mod angular;
pub mod dirac;
pub mod dkh;
pub mod error;
pub mod form;
pub mod instances;
pub mod linalg;
pub mod matrix;
pub mod projection;
pub mod riesz;

pub use error::{Error, Result};
pub use matrix::ComplexMatrix;
