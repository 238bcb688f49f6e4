//! Dense linear algebra kernels: LU solves, Hermitian eigendecomposition and
//! a complex Schur form with eigenvalue reordering.

mod eigh;
mod lu;
mod schur;

pub use eigh::{matrix_function, operator_norm, HermitianEigensystem};
pub use lu::{inverse, solve, LuFactors};
pub use schur::{schur_decompose, schur_split, SchurForm};
