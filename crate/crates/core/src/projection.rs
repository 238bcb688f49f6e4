//! Projector pairs, range bases and subspace distances.
//!
//! A splitting of the space is carried around as a pair of complementary
//! idempotents. They are not orthogonal in general, so the diagnostics keep
//! idempotency, complementarity and symmetry deviations separate.

use crate::error::{Error, Result};
use crate::linalg::{operator_norm, HermitianEigensystem};
use crate::matrix::ComplexMatrix;

/// Complementary projector pair with `minus = I - plus` by construction.
#[derive(Debug, Clone)]
pub struct ProjectionPair {
    pub plus: ComplexMatrix,
    pub minus: ComplexMatrix,
}

impl ProjectionPair {
    /// Builds the pair from the `plus` idempotent; the complement is formed
    /// exactly so the two always sum to the identity.
    pub fn from_plus(plus: ComplexMatrix) -> Result<Self> {
        let n = plus.require_square()?;
        plus.require_finite()?;
        let minus = &ComplexMatrix::identity(n) - &plus;
        Ok(Self { plus, minus })
    }

    pub fn order(&self) -> usize {
        self.plus.rows()
    }

    /// Rank of the `plus` projector, read off its trace.
    pub fn rank_plus(&self) -> usize {
        self.plus.trace().re.round().max(0.0) as usize
    }

    /// Spectral-norm idempotency defect, maximized over both projectors.
    pub fn idempotency_residual(&self) -> f64 {
        let dp = operator_norm(&(&self.plus.matmul(&self.plus) - &self.plus));
        let dm = operator_norm(&(&self.minus.matmul(&self.minus) - &self.minus));
        dp.max(dm)
    }

    /// Spectral norm of the product `plus * minus`; zero for a true pair.
    pub fn cross_residual(&self) -> f64 {
        operator_norm(&self.plus.matmul(&self.minus))
    }

    /// Spectral norm of the commutator `[plus, a]`.
    pub fn commutation_residual(&self, a: &ComplexMatrix) -> f64 {
        operator_norm(&(&self.plus.matmul(a) - &a.matmul(&self.plus)))
    }

    /// Whether both projectors are Hermitian to the given tolerance.
    pub fn is_orthogonal(&self, tol: f64) -> bool {
        self.plus.hermitian_deviation() <= tol
    }
}

/// Orthonormalizes the columns of a full-column-rank matrix as
/// `B = A (A* A)^{-1/2}`, which spans the same column space.
///
/// Fails when the smallest singular value falls below
/// `rel_cutoff * largest`, i.e. when the columns are numerically dependent.
pub fn orthonormalize(a: &ComplexMatrix, rel_cutoff: f64) -> Result<ComplexMatrix> {
    let gram = a.adjoint().matmul(a).hermitian_part();
    let eig = HermitianEigensystem::new(&gram)?;
    let lambda_max = eig.max_abs_eigenvalue();
    let lambda_min = eig.eigenvalues.first().copied().unwrap_or(0.0);
    if lambda_min <= rel_cutoff * rel_cutoff * lambda_max || lambda_max == 0.0 {
        return Err(Error::GraphPosition {
            sigma_min: lambda_min.max(0.0).sqrt(),
            required: rel_cutoff * lambda_max.sqrt(),
        });
    }
    let inv_root = eig.apply(|l| 1.0 / l.sqrt())?;
    Ok(a.matmul(&inv_root))
}

/// Orthonormal basis of the range of an idempotent.
///
/// The singular values of a projector are either zero or at least one, so
/// the range directions of `Q Q*` are separated from its kernel by a wide
/// margin and an absolute eigenvalue cutoff of one half is safe.
pub fn projector_range_basis(q: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = q.require_square()?;
    let gram = q.matmul(&q.adjoint()).hermitian_part();
    let eig = HermitianEigensystem::new(&gram)?;
    let kept: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] > 0.5).collect();
    let trace_rank = q.trace().re.round().max(0.0) as usize;
    if kept.len() != trace_rank {
        return Err(Error::RankMismatch {
            left: kept.len(),
            right: trace_rank,
        });
    }
    Ok(ComplexMatrix::from_fn(n, kept.len(), |i, j| {
        eig.eigenvectors[(i, kept[j])]
    }))
}

/// Orthogonal projector `B B*` onto the span of an orthonormal basis.
pub fn orthogonal_projector(basis: &ComplexMatrix) -> ComplexMatrix {
    basis.matmul(&basis.adjoint())
}

/// Spectral-norm distance between two projectors. For orthogonal pairs of
/// equal rank this is the sine of the largest principal angle.
pub fn subspace_distance(p: &ComplexMatrix, q: &ComplexMatrix) -> f64 {
    operator_norm(&(p - q))
}
