//! Momentum-space algebra of the free relativistic kinetic-energy operator
//! in natural units: Pauli structure, the 4x4 symbol, its unitary
//! block-diagonalization, spectral projections and angular symbol, the
//! sharp relativistic inequality constants with the induced charge
//! thresholds, and a discretized demo operator feeding the abstract
//! machinery.
//!
//! The Coulomb potential itself is never discretized here; it enters only
//! through the sharp constants. Bounded demo potentials exercise the
//! abstract results instead. The magnetic gap parameter is likewise an
//! input, never computed from a field configuration.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::form::{FormPerturbation, GappedOperator};
use crate::linalg::operator_norm;
use crate::matrix::ComplexMatrix;

/// Hermitian deviation allowed for user-supplied potential blocks.
const POTENTIAL_HERMITIAN_REL: f64 = 1e-12;
/// Agreement required for the exact scalar identities of the symbol.
const IDENTITY_TOL: f64 = 1e-12;

/// A point of the momentum grid (natural units).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Momentum {
    components: [f64; 3],
}

impl Momentum {
    pub fn new(components: [f64; 3]) -> Result<Self> {
        for (i, c) in components.iter().enumerate() {
            if !c.is_finite() {
                return Err(Error::NonFinite { row: i, col: 0 });
            }
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> [f64; 3] {
        self.components
    }

    pub fn norm(&self) -> f64 {
        let [x, y, z] = self.components;
        (x * x + y * y + z * z).sqrt()
    }
}

/// Relativistic kinematic factors: `E = sqrt(1 + p^2)` and the
/// normalization `N = sqrt(2E(1 + E))`. `N^2 = (1 + E)^2 + p^2`.
pub fn kinematics(p: &Momentum) -> (f64, f64) {
    let p2 = p.norm() * p.norm();
    let e = (1.0 + p2).sqrt();
    let n = (2.0 * e * (1.0 + e)).sqrt();
    (e, n)
}

/// `sigma . p` on the spinor components.
fn pauli_dot(p: &Momentum) -> ComplexMatrix {
    let [x, y, z] = p.components();
    let mut m = ComplexMatrix::zeros(2, 2);
    m[(0, 0)] = Complex64::new(z, 0.0);
    m[(0, 1)] = Complex64::new(x, -y);
    m[(1, 0)] = Complex64::new(x, y);
    m[(1, 1)] = Complex64::new(-z, 0.0);
    m
}

/// A 4x4 momentum-space symbol together with the point it belongs to.
#[derive(Debug, Clone)]
pub struct DiracSymbol {
    pub matrix: ComplexMatrix,
    pub p: Momentum,
}

/// The free symbol `h0(p) = [[I, sigma.p], [sigma.p, -I]]`; Hermitian with
/// eigenvalues `+-E(p)`, each twice.
pub fn free_symbol(p: &Momentum) -> DiracSymbol {
    let sp = pauli_dot(p);
    let id = ComplexMatrix::identity(2);
    let matrix = ComplexMatrix::from_blocks(&id, &sp, &sp, &id.scale_re(-1.0));
    DiracSymbol { matrix, p: *p }
}

/// The unitary `u(p) = (1/N) [[(1+E) I, sigma.p], [-sigma.p, (1+E) I]]`
/// rotating the symbol onto `diag(E, E, -E, -E)`.
pub fn fw_symbol(p: &Momentum) -> DiracSymbol {
    let (e, n) = kinematics(p);
    let sp = pauli_dot(p);
    let id = ComplexMatrix::identity(2);
    let matrix = ComplexMatrix::from_blocks(
        &id.scale_re(1.0 + e),
        &sp,
        &sp.scale_re(-1.0),
        &id.scale_re(1.0 + e),
    )
    .scale_re(1.0 / n);
    DiracSymbol { matrix, p: *p }
}

/// Spectral projections of the free symbol onto its positive and negative
/// halves: `(I +- h0(p)/E)/2`. Orthogonal, rank two each, summing to the
/// identity, with difference `h0(p)/E`.
pub fn lambda_pm(p: &Momentum) -> (ComplexMatrix, ComplexMatrix) {
    let (e, _) = kinematics(p);
    let h0 = free_symbol(p).matrix;
    let id = ComplexMatrix::identity(4);
    let scaled = h0.scale_re(1.0 / e);
    let plus = (&id + &scaled).scale_re(0.5);
    let minus = (&id - &scaled).scale_re(0.5);
    (plus, minus)
}

/// The angular symbol of the positive spectral subspace over the upper
/// spinor components: `x_plus(p) = sigma.p / (1 + E(p))`, of norm
/// `|p|/(1 + E) < 1`. The columns of `(I; x_plus)` span `ran lambda_plus`.
pub fn angular_symbol(p: &Momentum) -> ComplexMatrix {
    let (e, _) = kinematics(p);
    pauli_dot(p).scale_re(1.0 / (1.0 + e))
}

/// One grid point of the upper-component distance sweep.
#[derive(Debug, Clone, Serialize)]
pub struct DistanceRow {
    pub p_norm: f64,
    /// `|x_plus(p)| = |p|/(1 + E)`.
    pub angular_norm: f64,
    /// `| P_upper - lambda_plus(p) |`.
    pub distance: f64,
}

/// Distance sweep between the upper-spinor subspace and the positive
/// spectral subspace over a momentum grid.
#[derive(Debug, Clone, Serialize)]
pub struct UpperLowerReport {
    /// Rows sorted by `|p|`.
    pub rows: Vec<DistanceRow>,
    /// Largest distance attained on the grid; always below `limit`.
    pub sup: f64,
    /// The strict upper bound `1/sqrt(2)`, approached as `|p| -> inf`.
    pub limit: f64,
}

/// Measures `d(p) = |P_upper - lambda_plus(p)|` over the grid and checks
/// the exact duality `d = k/sqrt(1 + k^2)` with `k = |x_plus(p)|`, strict
/// growth in `|p|`, and `sup d < 1/sqrt(2)`.
pub fn upper_lower_distance(grid: &[Momentum]) -> Result<UpperLowerReport> {
    if grid.is_empty() {
        return Err(Error::ParameterOutOfRange {
            what: "distance sweep needs a nonempty momentum grid".into(),
        });
    }
    let upper = ComplexMatrix::from_real_diagonal(&[1.0, 1.0, 0.0, 0.0]);
    let mut rows = Vec::with_capacity(grid.len());
    for p in grid {
        let (plus, _) = lambda_pm(p);
        let distance = operator_norm(&(&upper - &plus));
        let (e, _) = kinematics(p);
        let angular_norm = p.norm() / (1.0 + e);
        let expected = angular_norm / (1.0 + angular_norm * angular_norm).sqrt();
        let defect = (distance - expected).abs();
        if defect > IDENTITY_TOL {
            return Err(Error::PostconditionFailed {
                what: "upper-lower distance duality",
                residual: defect,
                tolerance: IDENTITY_TOL,
            });
        }
        rows.push(DistanceRow {
            p_norm: p.norm(),
            angular_norm,
            distance,
        });
    }
    rows.sort_by(|a, b| a.p_norm.total_cmp(&b.p_norm));
    for pair in rows.windows(2) {
        let same_radius = (pair[1].p_norm - pair[0].p_norm).abs() <= IDENTITY_TOL;
        let ordered = if same_radius {
            (pair[1].distance - pair[0].distance).abs() <= IDENTITY_TOL
        } else {
            pair[1].distance > pair[0].distance
        };
        if !ordered {
            return Err(Error::PostconditionFailed {
                what: "distance growth in |p|",
                residual: pair[0].distance - pair[1].distance,
                tolerance: 0.0,
            });
        }
    }
    let sup = rows.last().map(|r| r.distance).unwrap_or(0.0);
    if sup >= FRAC_1_SQRT_2 {
        return Err(Error::PostconditionFailed {
            what: "distance supremum below 1/sqrt(2)",
            residual: sup,
            tolerance: FRAC_1_SQRT_2,
        });
    }
    Ok(UpperLowerReport {
        rows,
        sup,
        limit: FRAC_1_SQRT_2,
    })
}

/// Sharp constants of the classical relativistic inequalities, plus the
/// fine-structure constant used by the threshold calculators.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CoulombConstants {
    hardy: f64,
    kato: f64,
    tix: f64,
    alpha: f64,
}

impl Default for CoulombConstants {
    fn default() -> Self {
        Self {
            hardy: 2.0,
            kato: FRAC_PI_2,
            tix: (FRAC_PI_2 + 2.0 / PI) / 2.0,
            alpha: 1.0 / 137.035999,
        }
    }
}

impl CoulombConstants {
    /// Default inequality constants with an overridden coupling strength.
    pub fn with_alpha(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::ParameterOutOfRange {
                what: format!("fine-structure constant {alpha} must be positive"),
            });
        }
        Ok(Self {
            alpha,
            ..Self::default()
        })
    }

    pub fn hardy(&self) -> f64 {
        self.hardy
    }

    pub fn kato(&self) -> f64 {
        self.kato
    }

    /// `(pi/2 + 2/pi)/2`, the sharp constant of the gap-adapted inequality.
    pub fn tix(&self) -> f64 {
        self.tix
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Which admissibility condition a charge threshold is computed for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdMode {
    /// Full strength: `Z alpha tix < 1`.
    Exact,
    /// Series-expansion regime: `Z alpha tix < 1/2`.
    Dkh,
}

/// Largest integer below `cap` under a strict inequality, with a guard
/// band against ties landing exactly on the boundary.
fn strict_floor(cap: f64) -> u32 {
    let z = (cap - 1e-12).floor();
    if z < 0.0 {
        0
    } else {
        z as u32
    }
}

/// Largest admissible atomic number for the Coulomb coupling under the
/// given mode; `0` means no positive charge passes.
pub fn z_threshold(mode: ThresholdMode, constants: &CoulombConstants) -> Result<u32> {
    if !(constants.alpha() > 0.0) {
        return Err(Error::ParameterOutOfRange {
            what: "threshold needs a positive fine-structure constant".into(),
        });
    }
    let budget = match mode {
        ThresholdMode::Exact => 1.0,
        ThresholdMode::Dkh => 0.5,
    };
    Ok(strict_floor(budget / (constants.alpha() * constants.tix())))
}

/// Largest admissible atomic number in the magnetic setting with gap
/// parameter `delta_b` in `(0, 1]`: `Z alpha (pi/2) / delta_b < 1`. The
/// condition is a reconstruction: the bound is stated for `delta_b = 1`
/// with a Kato-type constant scaling inversely in the gap, which this
/// calculator adopts.
pub fn magnetic_threshold(delta_b: f64, constants: &CoulombConstants) -> Result<u32> {
    if !(delta_b > 0.0 && delta_b <= 1.0) {
        return Err(Error::ParameterOutOfRange {
            what: format!("magnetic gap parameter {delta_b} must lie in (0, 1]"),
        });
    }
    Ok(strict_floor(
        delta_b / (constants.alpha() * constants.kato()),
    ))
}

/// Bounded potential for the discretized demo operator.
#[derive(Debug, Clone)]
pub enum DemoPotential {
    /// One Hermitian 4x4 block per grid point (block-diagonal potential).
    PointBlocks(Vec<ComplexMatrix>),
    /// A full Hermitian matrix coupling all grid points.
    Coupling(ComplexMatrix),
}

fn require_hermitian(block: &ComplexMatrix) -> Result<()> {
    let tolerance = POTENTIAL_HERMITIAN_REL * (1.0 + block.max_abs());
    let deviation = block.hermitian_deviation();
    if deviation > tolerance {
        return Err(Error::NotHermitian {
            deviation,
            tolerance,
        });
    }
    Ok(())
}

fn write_block(target: &mut ComplexMatrix, block: &ComplexMatrix, offset: usize) {
    for i in 0..block.rows() {
        for j in 0..block.cols() {
            target[(offset + i, offset + j)] = block[(i, j)];
        }
    }
}

/// Assembles the direct sum of the free symbols over a momentum grid
/// (gapped at `min_k E(p_k) >= 1`) together with a form-bounded demo
/// perturbation, ready for the splitting and expansion machinery.
pub fn build_demo_operator(
    grid: &[Momentum],
    potential: &DemoPotential,
) -> Result<(GappedOperator, FormPerturbation)> {
    if grid.is_empty() {
        return Err(Error::ParameterOutOfRange {
            what: "demo operator needs a nonempty momentum grid".into(),
        });
    }
    let n = 4 * grid.len();
    let mut h0 = ComplexMatrix::zeros(n, n);
    for (k, p) in grid.iter().enumerate() {
        write_block(&mut h0, &free_symbol(p).matrix, 4 * k);
    }

    let v = match potential {
        DemoPotential::PointBlocks(blocks) => {
            if blocks.len() != grid.len() {
                return Err(Error::ParameterOutOfRange {
                    what: format!(
                        "{} potential blocks for {} grid points",
                        blocks.len(),
                        grid.len()
                    ),
                });
            }
            let mut v = ComplexMatrix::zeros(n, n);
            for (k, block) in blocks.iter().enumerate() {
                if block.rows() != 4 || block.cols() != 4 {
                    return Err(Error::DimensionMismatch {
                        left_rows: 4,
                        left_cols: 4,
                        right_rows: block.rows(),
                        right_cols: block.cols(),
                    });
                }
                require_hermitian(block)?;
                write_block(&mut v, block, 4 * k);
            }
            v
        }
        DemoPotential::Coupling(v) => {
            if v.rows() != n || v.cols() != n {
                return Err(Error::DimensionMismatch {
                    left_rows: n,
                    left_cols: n,
                    right_rows: v.rows(),
                    right_cols: v.cols(),
                });
            }
            require_hermitian(v)?;
            v.clone()
        }
    };

    let base = GappedOperator::new(h0)?;
    let pert = FormPerturbation::new(&base, v)?;
    Ok((base, pert))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angular::{angular_from_projections, direct_rotation, omega_series, norm_from_distance, ReferenceProjections};
    use crate::dkh::family_eval;
    use crate::linalg::HermitianEigensystem;
    use crate::projection::{orthogonal_projector, orthonormalize, ProjectionPair};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn momentum(x: f64, y: f64, z: f64) -> Momentum {
        Momentum::new([x, y, z]).unwrap()
    }

    /// Deterministic off-axis sample points.
    fn sample_points() -> Vec<Momentum> {
        vec![
            momentum(0.3, -0.4, 0.2),
            momentum(1.0, 0.5, -0.7),
            momentum(-2.0, 1.5, 3.0),
            momentum(0.0, 0.0, 5.0),
            momentum(4.0, -4.0, 0.5),
        ]
    }

    #[test]
    fn kinematics_matches_closed_forms() {
        let (e, n) = kinematics(&momentum(0.0, 0.0, 0.0));
        assert_eq!((e, n), (1.0, 2.0));

        let sqrt3 = 3.0_f64.sqrt();
        let (e, n) = kinematics(&momentum(sqrt3, 0.0, 0.0));
        assert!((e - 2.0).abs() <= 1e-12);
        assert!((n - 12.0_f64.sqrt()).abs() <= 1e-12);

        for p in sample_points() {
            let (e, n) = kinematics(&p);
            let identity = (1.0 + e) * (1.0 + e) + p.norm() * p.norm();
            assert!((n * n - identity).abs() <= 1e-12 * identity);
        }
    }

    #[test]
    fn free_symbol_has_symmetric_spectrum() {
        let at_rest = free_symbol(&momentum(0.0, 0.0, 0.0)).matrix;
        let expected = ComplexMatrix::from_real_diagonal(&[1.0, 1.0, -1.0, -1.0]);
        assert!(operator_norm(&(&at_rest - &expected)) <= 1e-12);

        for p in sample_points() {
            let h0 = free_symbol(&p).matrix;
            assert!(h0.hermitian_deviation() <= 1e-12);
            let (e, _) = kinematics(&p);
            let eig = HermitianEigensystem::new(&h0).unwrap();
            let expected = [-e, -e, e, e];
            for (got, want) in eig.eigenvalues.iter().zip(expected) {
                assert!((got - want).abs() <= 1e-12 * (1.0 + e), "{got} vs {want}");
            }
        }
    }

    #[test]
    fn fw_transform_block_diagonalizes_the_symbol() {
        let at_rest = fw_symbol(&momentum(0.0, 0.0, 0.0)).matrix;
        assert!(operator_norm(&(&at_rest - &ComplexMatrix::identity(4))) <= 1e-12);

        for p in sample_points() {
            let u = fw_symbol(&p).matrix;
            let unitary_defect =
                operator_norm(&(&u.matmul(&u.adjoint()) - &ComplexMatrix::identity(4)));
            assert!(unitary_defect <= 1e-12, "{unitary_defect}");

            let (e, _) = kinematics(&p);
            let rotated = u.matmul(&free_symbol(&p).matrix).matmul(&u.adjoint());
            let expected = ComplexMatrix::from_real_diagonal(&[e, e, -e, -e]);
            let defect = operator_norm(&(&rotated - &expected));
            assert!(defect <= 1e-12 * (1.0 + e), "{defect}");
        }
    }

    #[test]
    fn spectral_projections_obey_the_projection_laws() {
        let (plus, _) = lambda_pm(&momentum(0.0, 0.0, 0.0));
        let upper = ComplexMatrix::from_real_diagonal(&[1.0, 1.0, 0.0, 0.0]);
        assert!(operator_norm(&(&plus - &upper)) <= 1e-12);

        for p in sample_points() {
            let (plus, minus) = lambda_pm(&p);
            let id = ComplexMatrix::identity(4);
            assert!(operator_norm(&(&plus.matmul(&plus) - &plus)) <= 1e-12);
            assert!(plus.hermitian_deviation() <= 1e-12);
            assert!(operator_norm(&(&(&plus + &minus) - &id)) <= 1e-12);
            assert!((plus.trace().re - 2.0).abs() <= 1e-12);
            assert!((minus.trace().re - 2.0).abs() <= 1e-12);

            let (e, _) = kinematics(&p);
            let h0 = free_symbol(&p).matrix;
            let difference = &(&plus - &minus) - &h0.scale_re(1.0 / e);
            assert!(operator_norm(&difference) <= 1e-12);

            // Independent spectral-calculus route to the same projection.
            let oracle = HermitianEigensystem::new(&h0)
                .unwrap()
                .apply(|l| if l > 0.0 { 1.0 } else { 0.0 })
                .unwrap();
            assert!(operator_norm(&(&plus - &oracle)) <= 1e-12);
        }
    }

    #[test]
    fn angular_symbol_spans_the_positive_subspace() {
        assert!(operator_norm(&angular_symbol(&momentum(0.0, 0.0, 0.0))) <= 1e-15);

        for p in sample_points() {
            let x = angular_symbol(&p);
            let (e, _) = kinematics(&p);
            let expected_norm = p.norm() / (1.0 + e);
            assert!((operator_norm(&x) - expected_norm).abs() <= 1e-12);
            assert!(expected_norm < 1.0);

            let graph = ComplexMatrix::identity(2).vstack(&x);
            let basis = orthonormalize(&graph, 1e-10).unwrap();
            let (plus, _) = lambda_pm(&p);
            let defect = operator_norm(&(&orthogonal_projector(&basis) - &plus));
            assert!(defect <= 1e-12, "{defect}");
        }
    }

    #[test]
    fn distance_sweep_approaches_the_universal_limit() {
        let mut grid = vec![momentum(0.0, 0.0, 0.0)];
        for k in 0..60 {
            let r = 10.0_f64.powf(-1.0 + 4.0 * k as f64 / 59.0);
            let dir = [(0.3 * k as f64).cos(), (0.5 * k as f64).sin(), 0.4];
            let scale = r / (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
            grid.push(momentum(dir[0] * scale, dir[1] * scale, dir[2] * scale));
        }
        let report = upper_lower_distance(&grid).unwrap();
        assert_eq!(report.rows.len(), grid.len());
        assert!(report.rows[0].distance <= 1e-12);
        assert!(report.sup < FRAC_1_SQRT_2);
        assert!(FRAC_1_SQRT_2 - report.sup <= 1e-3, "sup {}", report.sup);

        for row in &report.rows {
            let recovered = norm_from_distance(row.distance).unwrap();
            assert!((recovered - row.angular_norm).abs() <= 1e-12);
        }

        assert!(upper_lower_distance(&[]).is_err());
    }

    #[test]
    fn charge_thresholds_match_published_values() {
        let constants = CoulombConstants::default();
        assert!(constants.tix() < constants.kato());
        assert_eq!(z_threshold(ThresholdMode::Exact, &constants).unwrap(), 124);
        assert_eq!(z_threshold(ThresholdMode::Dkh, &constants).unwrap(), 62);
        assert_eq!(magnetic_threshold(1.0, &constants).unwrap(), 87);
        assert_eq!(magnetic_threshold(0.5, &constants).unwrap(), 43);

        let strong = CoulombConstants::with_alpha(1.0).unwrap();
        assert_eq!(z_threshold(ThresholdMode::Exact, &strong).unwrap(), 0);

        assert!(magnetic_threshold(0.0, &constants).is_err());
        assert!(magnetic_threshold(1.5, &constants).is_err());
        assert!(CoulombConstants::with_alpha(-0.1).is_err());
    }

    #[test]
    fn thresholds_are_monotone_in_their_parameters() {
        let alphas = [1.0 / 137.035999, 1.0 / 100.0, 1.0 / 50.0, 1.0];
        let mut last = u32::MAX;
        for alpha in alphas {
            let constants = CoulombConstants::with_alpha(alpha).unwrap();
            let z = z_threshold(ThresholdMode::Exact, &constants).unwrap();
            assert!(z <= last, "threshold grew as alpha grew");
            last = z;
        }

        let constants = CoulombConstants::default();
        let mut last = 0;
        for k in 1..=10 {
            let z = magnetic_threshold(k as f64 / 10.0, &constants).unwrap();
            assert!(z >= last, "threshold shrank as the gap grew");
            last = z;
        }
    }

    #[test]
    fn demo_operator_assembles_gapped_instances() {
        let rest = [momentum(0.0, 0.0, 0.0)];
        let (base, pert) =
            build_demo_operator(&rest, &DemoPotential::PointBlocks(vec![ComplexMatrix::zeros(4, 4)]))
                .unwrap();
        let expected = ComplexMatrix::from_real_diagonal(&[1.0, 1.0, -1.0, -1.0]);
        assert!(operator_norm(&(base.h0() - &expected)) <= 1e-12);
        assert!((base.delta() - 1.0).abs() <= 1e-12);
        assert_eq!(pert.rho_full(), 0.0);

        let grid: Vec<Momentum> = (0..4)
            .map(|k| momentum(0.2 * k as f64, 0.1, -0.3 * k as f64))
            .collect();
        let blocks: Vec<ComplexMatrix> = (0..4)
            .map(|k| {
                let mut b = ComplexMatrix::zeros(4, 4);
                b[(0, 0)] = c(0.4 - 0.05 * k as f64, 0.0);
                b[(1, 2)] = c(0.0, 0.2);
                b[(2, 1)] = c(0.0, -0.2);
                b
            })
            .collect();
        let norm_bound = blocks
            .iter()
            .map(operator_norm)
            .fold(0.0_f64, f64::max);
        assert!(norm_bound <= 0.4 + 1e-12);
        let (base, pert) =
            build_demo_operator(&grid, &DemoPotential::PointBlocks(blocks)).unwrap();
        assert!(base.delta() >= 1.0 - 1e-12);
        assert!(pert.rho_full() <= 0.4 + 1e-9);

        let mut skew = ComplexMatrix::zeros(4, 4);
        skew[(0, 1)] = c(1.0, 0.0);
        let result = build_demo_operator(
            &rest,
            &DemoPotential::PointBlocks(vec![skew]),
        );
        assert!(matches!(result, Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn demo_coupling_runs_through_the_family_pipeline() {
        let grid = [momentum(0.5, 0.0, 0.0), momentum(0.0, 0.0, 1.2)];
        let n = 4 * grid.len();
        let mut v = ComplexMatrix::zeros(n, n);
        // Cross-point coupling plus a point-local mixing term.
        v[(0, 4)] = c(0.3, 0.1);
        v[(4, 0)] = c(0.3, -0.1);
        v[(2, 6)] = c(0.2, 0.0);
        v[(6, 2)] = c(0.2, 0.0);
        v[(1, 3)] = c(0.25, 0.0);
        v[(3, 1)] = c(0.25, 0.0);
        let (base, pert) = build_demo_operator(&grid, &DemoPotential::Coupling(v)).unwrap();
        let sample = family_eval(&base, &pert, c(0.3, 0.0)).unwrap();
        assert!(sample.h_hat_diag.hermitian_deviation() <= 1e-9 * (1.0 + operator_norm(&sample.h)));
        assert!(sample.provenance.offdiag_residual <= 1e-8 * (1.0 + operator_norm(&sample.h)));
    }

    #[test]
    fn fw_transform_agrees_with_the_direct_rotation() {
        for p in sample_points() {
            let (plus, _) = lambda_pm(&p);
            let q = ProjectionPair::from_plus(plus).unwrap();
            let upper = ComplexMatrix::from_real_diagonal(&[1.0, 1.0, 0.0, 0.0]);
            let reference = ProjectionPair::from_plus(upper).unwrap();
            let rotation = direct_rotation(&q, &reference).unwrap();
            let u_star = fw_symbol(&p).matrix.adjoint();
            let defect = operator_norm(&(&rotation - &u_star));
            assert!(defect <= 1e-10, "{defect}");
        }
    }

    #[test]
    fn omega_factor_matches_the_kinematic_ratio() {
        for p in sample_points().into_iter().filter(|p| p.norm() < 2.0) {
            let (plus, _) = lambda_pm(&p);
            let q = ProjectionPair::from_plus(plus).unwrap();
            let upper = ComplexMatrix::from_real_diagonal(&[1.0, 1.0, 0.0, 0.0]);
            let reference =
                ReferenceProjections::orthogonal(&ProjectionPair::from_plus(upper).unwrap()).unwrap();
            let pair = angular_from_projections(&q, &reference).unwrap();
            let (omega_plus, _) = omega_series(&pair, 1e-14).unwrap();
            let (e, n) = kinematics(&p);
            let expected = ComplexMatrix::identity(2).scale_re((1.0 + e) / n);
            // N^2 = (1+E)^2 + p^2 makes (1+E)/N the inverse square root of
            // 1 + |x_plus|^2.
            let defect = operator_norm(&(&omega_plus - &expected));
            assert!(defect <= 1e-10, "{defect}");
        }
    }
}
