//! Angular operators between a spectral splitting and a reference splitting.
//!
//! When a splitting `Q` sits in graph position with respect to a reference
//! splitting, each spectral subspace is the graph of an operator from one
//! reference subspace to the other. This module extracts those angular
//! operators, inverts the coupling map they induce, block-diagonalizes the
//! underlying operator in the reference frame, builds the direct rotation
//! between orthogonal splittings, and certifies the norm bounds that the
//! sampling sweeps rely on.

use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::linalg::{
    inverse, matrix_function, operator_norm, schur_decompose, schur_split, solve,
    HermitianEigensystem,
};
use crate::matrix::ComplexMatrix;
use crate::projection::{orthonormalize, projector_range_basis, ProjectionPair};

/// Smallest singular value of the restricted reference map accepted as
/// "in graph position".
const GRAPH_SIGMA_FLOOR: f64 = 1e-8;
/// Residual allowed when reproducing subspace bases from angular data.
const RECONSTRUCTION_TOL: f64 = 1e-9;
/// Residual allowed on the coupling-map inverse identity.
const COUPLING_IDENTITY_TOL: f64 = 1e-10;
/// Relative off-diagonal residual allowed after block-diagonalization.
const OFFDIAG_REL_TOL: f64 = 1e-8;
/// Tolerance for matching block eigenvalues against the full spectrum.
const EIGENVALUE_MATCH_TOL: f64 = 1e-8;
/// Hermitian deviation below which a projector pair counts as orthogonal.
const ORTHOGONALITY_TOL: f64 = 1e-9;
/// Unitarity defect allowed for the direct rotation.
const ROTATION_UNITARITY_TOL: f64 = 1e-10;
/// Subspace mapping defect allowed for the direct rotation.
const ROTATION_MAPPING_TOL: f64 = 1e-9;
/// Disagreement allowed between the two assembly routes of the rotation.
const ROTATION_CROSSCHECK_TOL: f64 = 1e-9;
/// Term cap for the inverse-square-root power series.
const OMEGA_MAX_TERMS: usize = 4096;
/// Slack added to analytic norm bounds to absorb measurement round-off.
const BOUND_SLACK: f64 = 1e-9;
/// Relative margin below zero tolerated by the accretivity test.
const ACCRETIVE_MARGIN_REL: f64 = 1e-9;

/// Reference splitting against which angular operators are measured.
///
/// Holds a complementary projector pair (possibly oblique), orthonormal
/// bases of its two ranges, and the distance `nu` to the orthogonal anchor
/// pair it deviates from.
#[derive(Debug, Clone)]
pub struct ReferenceProjections {
    pair: ProjectionPair,
    nu: f64,
    basis_plus: ComplexMatrix,
    basis_minus: ComplexMatrix,
}

impl ReferenceProjections {
    /// Wraps an orthogonal projector pair as its own reference (`nu = 0`).
    pub fn orthogonal(pair: &ProjectionPair) -> Result<Self> {
        if !pair.is_orthogonal(ORTHOGONALITY_TOL) {
            return Err(Error::ParameterOutOfRange {
                what: "orthogonal reference requires Hermitian projectors".into(),
            });
        }
        Self::build(pair.clone(), 0.0)
    }

    /// Wraps a possibly oblique pair and measures its distance `nu` to the
    /// orthogonal anchor pair. Distances of one or more put the reference
    /// out of reach of every bound downstream, so they are rejected.
    pub fn measured(p_tilde: ProjectionPair, anchor: &ProjectionPair) -> Result<Self> {
        if p_tilde.order() != anchor.order() {
            return Err(Error::DimensionMismatch {
                left_rows: p_tilde.order(),
                left_cols: p_tilde.order(),
                right_rows: anchor.order(),
                right_cols: anchor.order(),
            });
        }
        if !anchor.is_orthogonal(ORTHOGONALITY_TOL) {
            return Err(Error::ParameterOutOfRange {
                what: "reference distance is measured against an orthogonal anchor".into(),
            });
        }
        // The plus and minus deviations coincide because the complements
        // differ by the same matrix with opposite sign.
        let nu = operator_norm(&(&p_tilde.plus - &anchor.plus));
        if nu >= 1.0 {
            return Err(Error::SubspacesTooFar { distance: nu });
        }
        Self::build(p_tilde, nu)
    }

    fn build(pair: ProjectionPair, nu: f64) -> Result<Self> {
        let scale = 1.0 + operator_norm(&pair.plus).powi(2);
        let idem = pair.idempotency_residual();
        if idem > 1e-8 * scale {
            return Err(Error::ParameterOutOfRange {
                what: format!("reference projector idempotency defect {idem:.3e}"),
            });
        }
        let basis_plus = projector_range_basis(&pair.plus)?;
        let basis_minus = projector_range_basis(&pair.minus)?;
        Ok(Self {
            pair,
            nu,
            basis_plus,
            basis_minus,
        })
    }

    pub fn p_tilde_plus(&self) -> &ComplexMatrix {
        &self.pair.plus
    }

    pub fn p_tilde_minus(&self) -> &ComplexMatrix {
        &self.pair.minus
    }

    /// Distance to the orthogonal anchor pair; zero for orthogonal refs.
    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Orthonormal basis of the plus reference subspace.
    pub fn basis_plus(&self) -> &ComplexMatrix {
        &self.basis_plus
    }

    /// Orthonormal basis of the minus reference subspace.
    pub fn basis_minus(&self) -> &ComplexMatrix {
        &self.basis_minus
    }

    pub fn order(&self) -> usize {
        self.pair.order()
    }

    pub fn rank_plus(&self) -> usize {
        self.basis_plus.cols()
    }
}

/// Pair of angular operators in orthonormal reference coordinates.
///
/// `x_plus` maps plus-subspace coordinates to minus-subspace coordinates;
/// the columns of `basis_plus + basis_minus * x_plus` span the plus
/// subspace of the splitting the pair was extracted from, and symmetrically
/// for `x_minus`.
#[derive(Debug, Clone)]
pub struct AngularPair {
    x_plus: ComplexMatrix,
    x_minus: ComplexMatrix,
    basis_plus: ComplexMatrix,
    basis_minus: ComplexMatrix,
}

impl AngularPair {
    pub fn new(
        x_plus: ComplexMatrix,
        x_minus: ComplexMatrix,
        basis_plus: ComplexMatrix,
        basis_minus: ComplexMatrix,
    ) -> Result<Self> {
        let n = basis_plus.rows();
        let (kp, km) = (basis_plus.cols(), basis_minus.cols());
        if basis_minus.rows() != n || kp + km != n {
            return Err(Error::DimensionMismatch {
                left_rows: n,
                left_cols: kp,
                right_rows: basis_minus.rows(),
                right_cols: km,
            });
        }
        if x_plus.rows() != km || x_plus.cols() != kp || x_minus.rows() != kp || x_minus.cols() != km
        {
            return Err(Error::DimensionMismatch {
                left_rows: x_plus.rows(),
                left_cols: x_plus.cols(),
                right_rows: x_minus.rows(),
                right_cols: x_minus.cols(),
            });
        }
        x_plus.require_finite()?;
        x_minus.require_finite()?;
        Ok(Self {
            x_plus,
            x_minus,
            basis_plus,
            basis_minus,
        })
    }

    pub fn x_plus(&self) -> &ComplexMatrix {
        &self.x_plus
    }

    pub fn x_minus(&self) -> &ComplexMatrix {
        &self.x_minus
    }

    pub fn basis_plus(&self) -> &ComplexMatrix {
        &self.basis_plus
    }

    pub fn basis_minus(&self) -> &ComplexMatrix {
        &self.basis_minus
    }

    pub fn order(&self) -> usize {
        self.basis_plus.rows()
    }

    pub fn rank_plus(&self) -> usize {
        self.basis_plus.cols()
    }

    pub fn norm_x_plus(&self) -> f64 {
        operator_norm(&self.x_plus)
    }

    pub fn norm_x_minus(&self) -> f64 {
        operator_norm(&self.x_minus)
    }

    /// Columns spanning the plus subspace encoded by the pair.
    pub fn graph_basis_plus(&self) -> ComplexMatrix {
        &self.basis_plus + &self.basis_minus.matmul(&self.x_plus)
    }

    /// Columns spanning the minus subspace encoded by the pair.
    pub fn graph_basis_minus(&self) -> ComplexMatrix {
        &self.basis_minus + &self.basis_plus.matmul(&self.x_minus)
    }
}

/// Extreme singular values of a rectangular matrix via its Gram spectrum.
fn singular_extremes(m: &ComplexMatrix) -> Result<(f64, f64)> {
    let gram = m.adjoint().matmul(m).hermitian_part();
    let eig = HermitianEigensystem::new(&gram)?;
    let lo = eig
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &l| a.min(l.max(0.0)));
    let hi = eig.eigenvalues.iter().fold(0.0_f64, |a, &l| a.max(l));
    Ok((lo.sqrt(), hi.sqrt()))
}

/// Extracts the angular operators of the splitting `q` with respect to the
/// reference splitting.
///
/// The restriction of each reference projector to the matching subspace of
/// `q` must be invertible; its smallest singular value is gated at `1e-8`.
/// The result is verified by reassembling an orthonormal basis of each
/// subspace of `q` from its reference component to residual `1e-9`.
pub fn angular_from_projections(
    q: &ProjectionPair,
    reference: &ReferenceProjections,
) -> Result<AngularPair> {
    if q.order() != reference.order() {
        return Err(Error::DimensionMismatch {
            left_rows: q.order(),
            left_cols: q.order(),
            right_rows: reference.order(),
            right_cols: reference.order(),
        });
    }
    let range_plus = projector_range_basis(&q.plus)?;
    let range_minus = projector_range_basis(&q.minus)?;
    if range_plus.cols() != reference.rank_plus() {
        return Err(Error::RankMismatch {
            left: range_plus.cols(),
            right: reference.rank_plus(),
        });
    }

    let x_plus = restricted_angular(
        reference.p_tilde_plus(),
        reference.p_tilde_minus(),
        reference.basis_plus(),
        reference.basis_minus(),
        &range_plus,
    )?;
    let x_minus = restricted_angular(
        reference.p_tilde_minus(),
        reference.p_tilde_plus(),
        reference.basis_minus(),
        reference.basis_plus(),
        &range_minus,
    )?;
    AngularPair::new(
        x_plus,
        x_minus,
        reference.basis_plus().clone(),
        reference.basis_minus().clone(),
    )
}

/// One side of the extraction: the angular map whose graph over the `own`
/// reference subspace reproduces the span of `range`.
fn restricted_angular(
    p_own: &ComplexMatrix,
    p_other: &ComplexMatrix,
    basis_own: &ComplexMatrix,
    basis_other: &ComplexMatrix,
    range: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    let k = range.cols();
    if k == 0 {
        return Ok(ComplexMatrix::zeros(basis_other.cols(), 0));
    }
    // Coordinates of the restricted maps in the orthonormal bases.
    let m_own = basis_own.adjoint().matmul(&p_own.matmul(range));
    let m_other = basis_other.adjoint().matmul(&p_other.matmul(range));
    let (sigma_min, _) = singular_extremes(&m_own)?;
    if sigma_min < GRAPH_SIGMA_FLOOR {
        return Err(Error::GraphPosition {
            sigma_min,
            required: GRAPH_SIGMA_FLOOR,
        });
    }
    // x = m_other * m_own^{-1}, solved through the transposed system.
    let x = solve(&m_own.transpose(), &m_other.transpose())?.transpose();

    // Each basis column of the range must equal its own-component graph
    // vector: range = (basis_own + basis_other x) m_own.
    let graph = basis_own + &basis_other.matmul(&x);
    let residual = operator_norm(&(range - &graph.matmul(&m_own)));
    if residual > RECONSTRUCTION_TOL {
        return Err(Error::PostconditionFailed {
            what: "graph reconstruction",
            residual,
            tolerance: RECONSTRUCTION_TOL,
        });
    }
    Ok(x)
}

/// Inverse of the coupling map, with the conditioning that went into it.
#[derive(Debug, Clone)]
pub struct CouplingInverse {
    /// Block inverse in reference coordinates, plus block first.
    pub matrix: ComplexMatrix,
    /// Spectral condition number of the worse of the two Schur complements.
    pub condition: f64,
}

/// Coupling map of an angular pair in reference coordinates: the block
/// matrix `[[I, x_minus], [x_plus, I]]`.
pub fn coupling_matrix(x: &AngularPair) -> ComplexMatrix {
    let kp = x.x_plus.cols();
    let km = x.x_minus.cols();
    ComplexMatrix::from_blocks(
        &ComplexMatrix::identity(kp),
        &x.x_minus,
        &x.x_plus,
        &ComplexMatrix::identity(km),
    )
}

/// Inverts the coupling map blockwise through its two Schur complements
/// `I - x_minus x_plus` and `I - x_plus x_minus`.
///
/// Fails when a complement is singular, which means the two encoded
/// subspaces are not complementary. The assembled inverse is verified
/// against the coupling map to `1e-10`.
pub fn coupling_inverse(x: &AngularPair) -> Result<CouplingInverse> {
    let kp = x.x_plus.cols();
    let km = x.x_minus.cols();
    let comp_plus = &ComplexMatrix::identity(kp) - &x.x_minus.matmul(&x.x_plus);
    let comp_minus = &ComplexMatrix::identity(km) - &x.x_plus.matmul(&x.x_minus);
    let inv_plus = inverse(&comp_plus)?;
    let inv_minus = inverse(&comp_minus)?;
    let condition = (operator_norm(&comp_plus) * operator_norm(&inv_plus))
        .max(operator_norm(&comp_minus) * operator_norm(&inv_minus))
        .max(1.0);

    let matrix = ComplexMatrix::from_blocks(
        &inv_plus,
        &inv_plus.matmul(&x.x_minus).scale_re(-1.0),
        &inv_minus.matmul(&x.x_plus).scale_re(-1.0),
        &inv_minus,
    );
    let w = coupling_matrix(x);
    let n = w.rows();
    let residual = operator_norm(&(&w.matmul(&matrix) - &ComplexMatrix::identity(n)));
    if residual > COUPLING_IDENTITY_TOL {
        return Err(Error::PostconditionFailed {
            what: "coupling inverse identity",
            residual,
            tolerance: COUPLING_IDENTITY_TOL,
        });
    }
    Ok(CouplingInverse { matrix, condition })
}

/// Rebuilds the oblique projector onto the plus subspace encoded by the
/// angular pair, along the minus subspace.
pub fn projector_from_angular(x: &AngularPair) -> Result<ComplexMatrix> {
    let kp = x.x_plus.cols();
    let inv_plus = inverse(&(&ComplexMatrix::identity(kp) - &x.x_minus.matmul(&x.x_plus)))?;
    let top_right = inv_plus.matmul(&x.x_minus).scale_re(-1.0);
    let blocks = ComplexMatrix::from_blocks(
        &inv_plus,
        &top_right,
        &x.x_plus.matmul(&inv_plus),
        &x.x_plus.matmul(&top_right),
    );
    let frame = x.basis_plus.hstack(&x.basis_minus);
    let frame_inv = inverse(&frame)?;
    Ok(frame.matmul(&blocks).matmul(&frame_inv))
}

/// Conjugates `h` by the coupling map of `x` and splits off the diagonal
/// blocks.
///
/// Returns `(z_plus, z_minus, offdiag_residual)` where the blocks act on
/// reference coordinates and are similar to the restrictions of `h` to the
/// two encoded subspaces. The off-diagonal residual is gated at
/// `1e-8 * ||h||`, and the block spectra are matched as multisets against
/// the halves of the spectrum of `h` split by the sign of the real part.
pub fn block_diagonalize(
    h: &ComplexMatrix,
    x: &AngularPair,
) -> Result<(ComplexMatrix, ComplexMatrix, f64)> {
    let n = h.require_square()?;
    h.require_finite()?;
    if n != x.order() {
        return Err(Error::DimensionMismatch {
            left_rows: n,
            left_cols: n,
            right_rows: x.order(),
            right_cols: x.order(),
        });
    }
    let kp = x.rank_plus();
    let km = n - kp;
    let w = coupling_matrix(x);
    let w_inv = coupling_inverse(x)?.matrix;

    // Coordinates of h in the (possibly oblique) reference frame.
    let frame = x.basis_plus.hstack(&x.basis_minus);
    let h_coord = solve(&frame, &h.matmul(&frame))?;
    let transformed = w_inv.matmul(&h_coord).matmul(&w);

    let z_plus = transformed.block(0, 0, kp, kp);
    let z_minus = transformed.block(kp, kp, km, km);
    let upper = transformed.block(0, kp, kp, km);
    let lower = transformed.block(kp, 0, km, kp);
    let offdiag_residual = operator_norm(&upper).max(operator_norm(&lower));
    let h_norm = operator_norm(h);
    let tol = OFFDIAG_REL_TOL * (1.0 + h_norm);
    if offdiag_residual > tol {
        return Err(Error::PostconditionFailed {
            what: "block diagonalization off-diagonal",
            residual: offdiag_residual,
            tolerance: tol,
        });
    }

    // The block spectra must reproduce the two spectral halves of h.
    let eigs = schur_decompose(h)?.eigenvalues();
    let max_abs_eig = eigs.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let match_tol = EIGENVALUE_MATCH_TOL * (1.0 + max_abs_eig);
    let positives: Vec<Complex64> = eigs.iter().copied().filter(|l| l.re > 0.0).collect();
    let negatives: Vec<Complex64> = eigs.iter().copied().filter(|l| l.re <= 0.0).collect();
    if positives.len() != kp {
        return Err(Error::RankMismatch {
            left: kp,
            right: positives.len(),
        });
    }
    match_eigenvalue_multiset(&block_eigenvalues(&z_plus)?, positives, match_tol)?;
    match_eigenvalue_multiset(&block_eigenvalues(&z_minus)?, negatives, match_tol)?;

    Ok((z_plus, z_minus, offdiag_residual))
}

fn block_eigenvalues(z: &ComplexMatrix) -> Result<Vec<Complex64>> {
    if z.rows() == 0 {
        return Ok(Vec::new());
    }
    Ok(schur_decompose(z)?.eigenvalues())
}

/// Greedy nearest-neighbour multiset matching with a hard tolerance.
fn match_eigenvalue_multiset(
    got: &[Complex64],
    mut want: Vec<Complex64>,
    tol: f64,
) -> Result<()> {
    for g in got {
        let (idx, dist) = want
            .iter()
            .enumerate()
            .map(|(i, w)| (i, (g - w).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or(Error::RankMismatch {
                left: got.len(),
                right: 0,
            })?;
        if dist > tol {
            return Err(Error::PostconditionFailed {
                what: "block eigenvalue multiset",
                residual: dist,
                tolerance: tol,
            });
        }
        want.swap_remove(idx);
    }
    Ok(())
}

/// Operator norm of an angular map whose graph sits at subspace distance
/// `d` from the reference: `d / sqrt(1 - d^2)`.
pub fn norm_from_distance(d: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&d) {
        return Err(Error::ParameterOutOfRange {
            what: format!("subspace distance {d} outside [0, 1)"),
        });
    }
    Ok(d / (1.0 - d * d).sqrt())
}

/// Inverse of [`norm_from_distance`]: `k / sqrt(1 + k^2)`.
pub fn distance_from_norm(k: f64) -> Result<f64> {
    if !k.is_finite() || k < 0.0 {
        return Err(Error::ParameterOutOfRange {
            what: format!("angular norm {k} outside [0, inf)"),
        });
    }
    Ok(k / (1.0 + k * k).sqrt())
}

/// Metric between equal-rank orthogonal projectors: `arcsin` of their
/// spectral distance, clamped against round-off above one.
pub fn angular_metric(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    operator_norm(&(a - b)).min(1.0).asin()
}

/// Direct rotation carrying the splitting `p` onto the splitting `q`.
///
/// Both pairs must be orthogonal and satisfy `||q_plus - p_plus|| < 1`.
/// The unitary is the polar factor of `q_plus p_plus + q_minus p_minus`,
/// computed as `[I - (q_plus - p_plus)^2]^{-1/2} (q_plus p_plus + q_minus
/// p_minus)`, and is cross-checked against the equivalent assembly from
/// angular operators and their inverse-square-root normalizers.
pub fn direct_rotation(q: &ProjectionPair, p: &ProjectionPair) -> Result<ComplexMatrix> {
    if q.order() != p.order() {
        return Err(Error::DimensionMismatch {
            left_rows: q.order(),
            left_cols: q.order(),
            right_rows: p.order(),
            right_cols: p.order(),
        });
    }
    if !q.is_orthogonal(ORTHOGONALITY_TOL) || !p.is_orthogonal(ORTHOGONALITY_TOL) {
        return Err(Error::ParameterOutOfRange {
            what: "direct rotation requires orthogonal projector pairs".into(),
        });
    }
    let diff = &q.plus - &p.plus;
    let distance = operator_norm(&diff);
    if distance >= 1.0 {
        return Err(Error::SubspacesTooFar { distance });
    }
    let n = q.order();
    // I - diff^2 is Hermitian with spectrum in [1 - distance^2, 1].
    let base = (&ComplexMatrix::identity(n) - &diff.matmul(&diff)).hermitian_part();
    let normalizer = matrix_function(&base, |l| 1.0 / l.sqrt())?;
    let aligner = &q.plus.matmul(&p.plus) + &q.minus.matmul(&p.minus);
    let u = normalizer.matmul(&aligner);

    let unitarity = operator_norm(&(&u.adjoint().matmul(&u) - &ComplexMatrix::identity(n)));
    if unitarity > ROTATION_UNITARITY_TOL {
        return Err(Error::PostconditionFailed {
            what: "direct rotation unitarity",
            residual: unitarity,
            tolerance: ROTATION_UNITARITY_TOL,
        });
    }
    let mapping = operator_norm(&(&u.matmul(&p.plus).matmul(&u.adjoint()) - &q.plus));
    if mapping > ROTATION_MAPPING_TOL {
        return Err(Error::PostconditionFailed {
            what: "direct rotation subspace mapping",
            residual: mapping,
            tolerance: ROTATION_MAPPING_TOL,
        });
    }

    // Independent assembly: angular operators of q over p, normalized by
    // the inverse square roots of the Hermitian complements.
    let reference = ReferenceProjections::orthogonal(p)?;
    let pair = angular_from_projections(q, &reference)?;
    let kp = pair.rank_plus();
    let km = n - kp;
    let comp_plus =
        (&ComplexMatrix::identity(kp) - &pair.x_minus.matmul(&pair.x_plus)).hermitian_part();
    let comp_minus =
        (&ComplexMatrix::identity(km) - &pair.x_plus.matmul(&pair.x_minus)).hermitian_part();
    let omega_plus = matrix_function(&comp_plus, |l| 1.0 / l.sqrt())?;
    let omega_minus = matrix_function(&comp_minus, |l| 1.0 / l.sqrt())?;
    let blocks = ComplexMatrix::from_blocks(
        &omega_plus,
        &pair.x_minus.matmul(&omega_minus),
        &pair.x_plus.matmul(&omega_plus),
        &omega_minus,
    );
    let frame = pair.basis_plus.hstack(&pair.basis_minus);
    let alt = frame.matmul(&blocks).matmul(&frame.adjoint());
    let disagreement = operator_norm(&(&u - &alt));
    if disagreement > ROTATION_CROSSCHECK_TOL {
        return Err(Error::PostconditionFailed {
            what: "direct rotation assembly cross-check",
            residual: disagreement,
            tolerance: ROTATION_CROSSCHECK_TOL,
        });
    }
    Ok(u)
}

/// Inverse square roots of `I - x_minus x_plus` and `I - x_plus x_minus`
/// by the binomial power series.
///
/// Requires both products to be strict contractions. Terms are summed until
/// the geometric tail estimate drops below `tol`; each result is verified
/// to invert its complement's square root to `10 * tol`.
pub fn omega_series(x: &AngularPair, tol: f64) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::ParameterOutOfRange {
            what: format!("series tolerance {tol} must be positive"),
        });
    }
    let m_plus = x.x_minus.matmul(&x.x_plus);
    let m_minus = x.x_plus.matmul(&x.x_minus);
    let radius = operator_norm(&m_plus).max(operator_norm(&m_minus));
    if radius >= 1.0 {
        return Err(Error::SpectralRadiusTooLarge { radius });
    }
    let omega_plus = omega_half(&m_plus, radius, tol)?;
    let omega_minus = omega_half(&m_minus, radius, tol)?;
    Ok((omega_plus, omega_minus))
}

/// Sums `sum_n binom(-1/2, n) (-m)^n` with coefficient recurrence
/// `c_n = c_{n-1} (-1/2 - (n-1)) / n`.
fn omega_half(m: &ComplexMatrix, ratio: f64, tol: f64) -> Result<ComplexMatrix> {
    let k = m.rows();
    let neg_m = m.scale_re(-1.0);
    let mut omega = ComplexMatrix::identity(k);
    let mut power = ComplexMatrix::identity(k);
    let mut coeff = 1.0_f64;
    let mut converged = k == 0;
    let mut terms = 0;
    for n in 1..=OMEGA_MAX_TERMS {
        coeff *= (-0.5 - (n as f64 - 1.0)) / n as f64;
        power = power.matmul(&neg_m);
        let term = power.scale_re(coeff);
        omega = &omega + &term;
        terms = n;
        // Frobenius bounds the spectral norm, so the geometric tail
        // estimate term/(1 - ratio) is conservative.
        if term.frobenius_norm() <= tol * (1.0 - ratio) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SeriesTooSlow { terms });
    }
    let residual = operator_norm(
        &(&omega
            .matmul(&omega)
            .matmul(&(&ComplexMatrix::identity(k) - m))
            - &ComplexMatrix::identity(k)),
    );
    let tolerance = 10.0 * tol;
    if residual > tolerance {
        return Err(Error::PostconditionFailed {
            what: "omega inverse square root",
            residual,
            tolerance,
        });
    }
    Ok(omega)
}

/// Outcome of checking measured angular norms against the analytic bound.
#[derive(Debug, Clone, Serialize)]
pub struct NormBoundReport {
    pub norm_x_plus: f64,
    pub norm_x_minus: f64,
    pub bound: f64,
    pub pass: bool,
    pub nu: f64,
    pub rho_half: f64,
    pub symmetric: bool,
    /// Orthogonal-reference distance check, symmetric case only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orthogonal_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orthogonal_bound: Option<f64>,
}

/// Checks the measured angular norms against
/// `tan(arctan sqrt(rho / (2 - 3 rho)) + arcsin nu)` in the general case
/// and `tan(arctan sqrt(rho / (2 - rho)) + arcsin nu)` in the symmetric
/// case.
///
/// The general case requires `rho < 1/2`, the symmetric case `rho < 1`,
/// and both require the total angle to stay below a right angle. For an
/// orthogonal reference in the symmetric case the report additionally
/// compares the distances between the reference projectors and the
/// orthogonal projectors onto the encoded subspaces against
/// `sin(arcsin sqrt(rho / 2) + arcsin nu)`.
pub fn verify_norm_bound(
    rho_half: f64,
    nu: f64,
    symmetric: bool,
    x: &AngularPair,
) -> Result<NormBoundReport> {
    if !rho_half.is_finite() || rho_half < 0.0 {
        return Err(Error::ParameterOutOfRange {
            what: format!("rho {rho_half} outside [0, inf)"),
        });
    }
    if !(0.0..1.0).contains(&nu) {
        return Err(Error::ParameterOutOfRange {
            what: format!("reference distance nu {nu} outside [0, 1)"),
        });
    }
    let limit = if symmetric { 1.0 } else { 0.5 };
    if rho_half >= limit {
        return Err(Error::RhoTooLarge {
            rho: rho_half,
            limit,
        });
    }
    let denom = if symmetric {
        2.0 - rho_half
    } else {
        2.0 - 3.0 * rho_half
    };
    let angle = (rho_half / denom).sqrt().atan() + nu.asin();
    if angle >= FRAC_PI_2 {
        return Err(Error::AngleTooLarge { angle });
    }
    let bound = angle.tan();
    let norm_x_plus = x.norm_x_plus();
    let norm_x_minus = x.norm_x_minus();
    let mut pass = norm_x_plus <= bound + BOUND_SLACK && norm_x_minus <= bound + BOUND_SLACK;

    let reference_orthogonal =
        operator_norm(&x.basis_plus().adjoint().matmul(x.basis_minus())) <= 1e-10;
    let (mut orthogonal_distance, mut orthogonal_bound) = (None, None);
    if symmetric && reference_orthogonal {
        let sin_bound = ((rho_half / 2.0).sqrt().asin() + nu.asin()).sin();
        let dist_plus = orthogonal_graph_distance(x.basis_plus(), &x.graph_basis_plus())?;
        let dist_minus = orthogonal_graph_distance(x.basis_minus(), &x.graph_basis_minus())?;
        let dist = dist_plus.max(dist_minus);
        pass = pass && dist <= sin_bound + BOUND_SLACK;
        orthogonal_distance = Some(dist);
        orthogonal_bound = Some(sin_bound);
    }

    Ok(NormBoundReport {
        norm_x_plus,
        norm_x_minus,
        bound,
        pass,
        nu,
        rho_half,
        symmetric,
        orthogonal_distance,
        orthogonal_bound,
    })
}

/// Distance between the orthogonal projectors onto a reference subspace and
/// onto the graph subspace spanned by `graph` columns.
fn orthogonal_graph_distance(basis: &ComplexMatrix, graph: &ComplexMatrix) -> Result<f64> {
    if graph.cols() == 0 {
        return Ok(0.0);
    }
    let graph_basis = orthonormalize(graph, 1e-10)?;
    let p_ref = basis.matmul(&basis.adjoint());
    let p_graph = graph_basis.matmul(&graph_basis.adjoint());
    Ok(operator_norm(&(&p_ref - &p_graph)))
}

/// Outcome of an accretivity certificate for a weighted splitting.
#[derive(Debug, Clone, Serialize)]
pub struct AccretivityReport {
    /// Smallest eigenvalue of the symmetrized weighted product.
    pub min_eigenvalue: f64,
    /// Spectral norm of the weighted product, setting the margin scale.
    pub product_norm: f64,
    pub accretive: bool,
    pub norm_x_plus: f64,
    pub norm_x_minus: f64,
    pub bound_plus: f64,
    pub bound_minus: f64,
    /// Whether the measured norms respect the bounds; vacuously true when
    /// the accretivity test itself fails.
    pub bound_pass: bool,
    pub pass: bool,
}

/// Tests whether `h` is accretive for the weight `mu_plus p_plus -
/// mu_minus p_minus` and, if so, checks the implied angular norm bounds
/// `||x_plus|| <= sqrt(mu_plus / mu_minus)` and `||x_minus|| <=
/// sqrt(mu_minus / mu_plus)` against the spectral splitting of `h`.
///
/// Accretivity means the Hermitian part of the weighted product has no
/// eigenvalue below `-1e-9 * ||W h||`. Certification outcomes live in the
/// report; an error is returned only when the spectral splitting of `h`
/// itself cannot be computed.
pub fn w_accretivity(
    h: &ComplexMatrix,
    mu_plus: f64,
    mu_minus: f64,
    p: &ProjectionPair,
) -> Result<AccretivityReport> {
    let n = h.require_square()?;
    h.require_finite()?;
    if n != p.order() {
        return Err(Error::DimensionMismatch {
            left_rows: n,
            left_cols: n,
            right_rows: p.order(),
            right_cols: p.order(),
        });
    }
    if !(mu_plus > 0.0 && mu_plus.is_finite() && mu_minus > 0.0 && mu_minus.is_finite()) {
        return Err(Error::ParameterOutOfRange {
            what: format!("weights ({mu_plus}, {mu_minus}) must be positive"),
        });
    }
    if !p.is_orthogonal(ORTHOGONALITY_TOL) {
        return Err(Error::ParameterOutOfRange {
            what: "accretivity weight requires an orthogonal projector pair".into(),
        });
    }

    let weight = &p.plus.scale_re(mu_plus) - &p.minus.scale_re(mu_minus);
    let product = weight.matmul(h);
    let product_norm = operator_norm(&product);
    let sym = product.hermitian_part();
    let eig = HermitianEigensystem::new(&sym)?;
    let min_eigenvalue = eig
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &l| a.min(l));
    let accretive = min_eigenvalue >= -ACCRETIVE_MARGIN_REL * product_norm;

    let (q_plus, _) = schur_split(h)?;
    let q = ProjectionPair::from_plus(q_plus)?;
    let reference = ReferenceProjections::orthogonal(p)?;
    let pair = angular_from_projections(&q, &reference)?;
    let norm_x_plus = pair.norm_x_plus();
    let norm_x_minus = pair.norm_x_minus();
    let bound_plus = (mu_plus / mu_minus).sqrt();
    let bound_minus = (mu_minus / mu_plus).sqrt();
    let bound_pass = !accretive
        || (norm_x_plus <= bound_plus + BOUND_SLACK && norm_x_minus <= bound_minus + BOUND_SLACK);

    Ok(AccretivityReport {
        min_eigenvalue,
        product_norm,
        accretive,
        norm_x_plus,
        norm_x_minus,
        bound_plus,
        bound_minus,
        bound_pass,
        pass: accretive && bound_pass,
    })
}
