//! Spectral splitting by resolvent integration along the imaginary axis.
//!
//! For a matrix whose spectrum avoids the imaginary axis, the difference of
//! the two spectral projectors is the principal-value integral
//! `D = (1/pi) PV int (h - i eta)^{-1} d eta`, and `Q± = (I ± D)/2`.
//! The integrand decays only like `1/|eta|`, so plain truncation diverges
//! logarithmically; summing the `±eta` node pairs first cancels the odd
//! part and restores absolute convergence. The same module carries the
//! coupling-series expansion of the resolvent difference and the decay
//! bound that controls it.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::form::{FormPerturbation, GappedOperator};
use crate::linalg::{operator_norm, schur_decompose, LuFactors};
use crate::matrix::ComplexMatrix;
use crate::projection::ProjectionPair;

const MIN_NODES: usize = 8;
const MAX_NODES: usize = 1 << 16;
const IDEMPOTENCY_TOL: f64 = 1e-7;
const COMMUTATION_TOL: f64 = 1e-7;
const AXIS_MARGIN_REL: f64 = 1e-6;

/// Symmetric quadrature rule for the principal-value resolvent integral:
/// Gauss-Legendre nodes mapped through `eta = radius * tan(theta)`.
#[derive(Debug, Clone)]
pub struct QuadratureScheme {
    radius: f64,
    node_count: usize,
}

impl QuadratureScheme {
    /// Validates the scale and node count (even, at least eight, so nodes
    /// pair exactly under `eta -> -eta`).
    pub fn new(radius: f64, node_count: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::BadQuadratureScheme {
                reason: format!("radius must be positive and finite, got {radius}"),
            });
        }
        if node_count < MIN_NODES || node_count % 2 != 0 {
            return Err(Error::BadQuadratureScheme {
                reason: format!("node count must be even and >= {MIN_NODES}, got {node_count}"),
            });
        }
        Ok(Self { radius, node_count })
    }

    /// Radius balancing the two singularity scales of the transformed
    /// integrand: the geometric mean of the spectral margin and the
    /// spectral radius.
    pub fn tuned(margin: f64, norm: f64) -> Self {
        let radius = (margin * norm).sqrt().max(f64::MIN_POSITIVE);
        Self {
            radius,
            node_count: 32,
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Positive half-axis nodes as `(eta, weight)` in ascending `eta`; the
    /// weight already contains the tangent-map Jacobian. The mirror node at
    /// `-eta` carries the same weight.
    fn positive_nodes(&self) -> Vec<(f64, f64)> {
        let half = self.node_count / 2;
        let mut out = Vec::with_capacity(half);
        for (x, w) in gauss_legendre_positive(self.node_count) {
            let theta = std::f64::consts::FRAC_PI_2 * x;
            let cos = theta.cos();
            let eta = self.radius * theta.tan();
            let weight = w * std::f64::consts::FRAC_PI_2 * self.radius / (cos * cos);
            out.push((eta, weight));
        }
        debug_assert_eq!(out.len(), half);
        out
    }
}

/// Positive Gauss-Legendre nodes on `(0, 1)` side of `(-1, 1)`, ascending,
/// with their weights. `n` must be even; the negative nodes are the exact
/// mirrors.
fn gauss_legendre_positive(n: usize) -> Vec<(f64, f64)> {
    let half = n / 2;
    let mut nodes = Vec::with_capacity(half);
    for i in 0..half {
        // i-th largest root; all of these are positive for even n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() <= 1e-16 * x.abs().max(1.0) {
                let (_, d2) = legendre_with_derivative(n, x);
                dp = d2;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes.push((x, w));
    }
    nodes.reverse();
    nodes
}

/// Legendre polynomial value and derivative by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        p_prev = p;
        p = p_next;
    }
    let d = (n as f64) * (x * p - p_prev) / (x * x - 1.0);
    (p, d)
}

/// A computed spectral splitting with its quality certificates.
#[derive(Debug, Clone)]
pub struct RieszSplit {
    pub pair: ProjectionPair,
    /// Spectral norm of `Q+^2 - Q+`.
    pub idempotency_residual: f64,
    /// Spectral norm of `h Q+ - Q+ h`.
    pub commutation_residual: f64,
    /// Node count the quadrature finally converged at.
    pub node_count: usize,
    pub radius: f64,
}

/// Splits the space into the spectral subspaces of `h` for the right and
/// left half-planes by quadrature of the resolvent along the imaginary
/// axis. Refines the node count until the idempotency defect of `Q+` drops
/// below `1e-7 * (1 + |Q+|^2)`.
pub fn riesz_split(h: &ComplexMatrix, scheme: &QuadratureScheme) -> Result<RieszSplit> {
    let n = h.require_square()?;
    h.require_finite()?;
    let h_norm = operator_norm(h);
    let eigs = schur_decompose(h)?.eigenvalues();
    let margin = eigs
        .iter()
        .map(|l| l.re.abs())
        .fold(f64::INFINITY, f64::min);
    let required = AXIS_MARGIN_REL * h_norm;
    if margin < required || margin == 0.0 {
        return Err(Error::EigenvalueNearAxis { margin, required });
    }

    let identity = ComplexMatrix::identity(n);
    let mut node_count = scheme.node_count;
    let mut last_residual = f64::INFINITY;
    loop {
        let rule = QuadratureScheme {
            radius: scheme.radius,
            node_count,
        };
        let d = integrate_sign(h, &rule);
        let q_plus = (&identity + &d).scale_re(0.5);
        let q_norm = operator_norm(&q_plus);
        let idem = operator_norm(&(&q_plus.matmul(&q_plus) - &q_plus));
        if idem <= IDEMPOTENCY_TOL * (1.0 + q_norm * q_norm) {
            let comm = operator_norm(&(&h.matmul(&q_plus) - &q_plus.matmul(h)));
            let comm_tol = COMMUTATION_TOL * h_norm * q_norm;
            if comm > comm_tol {
                return Err(Error::PostconditionFailed {
                    what: "splitting commutation with h",
                    residual: comm,
                    tolerance: comm_tol,
                });
            }
            return Ok(RieszSplit {
                pair: ProjectionPair::from_plus(q_plus)?,
                idempotency_residual: idem,
                commutation_residual: comm,
                node_count,
                radius: scheme.radius,
            });
        }
        last_residual = last_residual.min(idem);
        if node_count >= MAX_NODES {
            return Err(Error::QuadratureNotConverged {
                node_count,
                residual: last_residual,
            });
        }
        node_count *= 2;
    }
}

/// Splits with a radius tuned from the spectrum, starting at 32 nodes.
pub fn riesz_split_auto(h: &ComplexMatrix) -> Result<RieszSplit> {
    let eigs = schur_decompose(h)?.eigenvalues();
    let margin = eigs
        .iter()
        .map(|l| l.re.abs())
        .fold(f64::INFINITY, f64::min);
    let norm = operator_norm(h);
    riesz_split(h, &QuadratureScheme::tuned(margin.max(f64::MIN_POSITIVE), norm.max(1.0)))
}

/// Quadrature evaluation of `(1/pi) PV int (h - i eta)^{-1} d eta`.
///
/// Pairs are summed innermost (the `1/eta` tails of the two resolvents
/// cancel exactly there), then accumulated in ascending `|eta|` for a fixed
/// deterministic order.
fn integrate_sign(h: &ComplexMatrix, rule: &QuadratureScheme) -> ComplexMatrix {
    let n = h.rows();
    let identity = ComplexMatrix::identity(n);
    let mut acc = ComplexMatrix::zeros(n, n);
    for (eta, weight) in rule.positive_nodes() {
        let shift = identity.scale(Complex64::new(0.0, eta));
        let lower = LuFactors::new(&(h - &shift)).expect("margin check keeps h - i eta regular");
        let upper = LuFactors::new(&(h + &shift)).expect("margin check keeps h + i eta regular");
        let paired = &lower.solve_matrix(&identity) + &upper.solve_matrix(&identity);
        acc = &acc + &paired.scale_re(weight);
    }
    acc.scale_re(1.0 / std::f64::consts::PI)
}

/// Coupling-series approximation of a resolvent difference, with its
/// certified tail bound.
#[derive(Debug, Clone)]
pub struct SeriesExpansion {
    /// Partial sum approximating `(h - i eta)^{-1} - (h0 - i eta)^{-1}`.
    pub difference: ComplexMatrix,
    pub order: usize,
    /// Contraction factor of the series, `|gamma| |C_ab| sqrt(a^2 + b^2
    /// eta^2) / |eta|`; the series converges when this is below one.
    pub contraction: f64,
    /// Bound on the norm of the dropped middle-factor tail.
    pub middle_tail: f64,
    /// Bound on the norm error of `difference` itself (middle tail times
    /// the squared norm of the outer resolvent factors).
    pub tail_bound: f64,
}

/// Expands `(h - i eta)^{-1} - (h0 - i eta)^{-1}` in powers of the coupling.
///
/// Writing `K = -gamma C_ab H_ab (H0 - i eta)^{-1}`, the n-th term of the
/// middle factor is `K^{n-1} (-gamma C_ab)` and the difference is the
/// middle sum conjugated by `P = (H0 - i eta)^{-1} H_ab^{1/2}` on both
/// sides. Term `n = 1` reproduces the classic second-resolvent-identity
/// term `-gamma (h0 - i eta)^{-1} V (h0 - i eta)^{-1}` exactly.
pub fn resolvent_difference_series(
    base: &GappedOperator,
    pert: &FormPerturbation,
    gamma: Complex64,
    eta: f64,
    order: usize,
) -> Result<SeriesExpansion> {
    if eta == 0.0 || !eta.is_finite() {
        return Err(Error::ParameterOutOfRange {
            what: format!("eta must be finite and nonzero, got {eta}"),
        });
    }
    let (a, b) = (pert.a(), pert.b());
    let contraction =
        gamma.norm() * pert.norm_c_ab() * (a * a + b * b * eta * eta).sqrt() / eta.abs();
    if contraction >= 1.0 {
        return Err(Error::ContractionTooLarge {
            factor: contraction,
        });
    }

    let n = base.order();
    let z = Complex64::new(0.0, eta);
    let r0 = base.resolvent(z)?;
    let h_ab = base.h_ab(a, b);
    let weight_half = base.h_ab_power(a, b, 0.5)?;
    let c = pert.c_ab();

    let k = c.matmul(&h_ab.matmul(&r0)).scale(-gamma);
    let mut middle = ComplexMatrix::zeros(n, n);
    let mut term = c.scale(-gamma);
    for m in 1..=order {
        middle = &middle + &term;
        if m < order {
            term = k.matmul(&term);
        }
    }
    let p = r0.matmul(&weight_half);
    let difference = p.matmul(&middle).matmul(&p);

    let middle_tail = if order == 0 {
        gamma.norm() * pert.norm_c_ab() / (1.0 - contraction)
    } else {
        gamma.norm() * pert.norm_c_ab() * contraction.powi(order as i32) / (1.0 - contraction)
    };
    // The outer factor is a normal function of H0, so its norm is exact.
    let p_norm_sq = base
        .eigensystem()
        .eigenvalues
        .iter()
        .map(|&l| (a + b * l.abs()) / (l * l + eta * eta))
        .fold(0.0, f64::max);
    Ok(SeriesExpansion {
        difference,
        order,
        contraction,
        middle_tail,
        tail_bound: p_norm_sq * middle_tail,
    })
}

/// One row of the resolvent-decay check at a single `eta`.
#[derive(Debug, Clone)]
pub struct DecayRow {
    pub eta: f64,
    /// `|eta| * |(h - i eta)^{-1} - (h0 - i eta)^{-1}|`.
    pub scaled_difference: f64,
    /// `(1 - contraction)^{-1} |gamma| (a/2 |H0^{-1}| + b)`.
    pub bound: f64,
    pub ratio: f64,
    pub contraction: f64,
}

/// Decay-bound report over an `eta` grid.
#[derive(Debug, Clone)]
pub struct DecayReport {
    pub rows: Vec<DecayRow>,
    pub max_ratio: f64,
}

impl DecayReport {
    /// True when the bound held at every grid point.
    pub fn pass(&self) -> bool {
        self.max_ratio <= 1.0
    }
}

/// Checks that the resolvent difference decays like `1/|eta|` along the
/// imaginary axis, with the explicit constant
/// `(1 - bt)^{-1} |gamma| (a/2 |H0^{-1}| + b)` where
/// `bt = |gamma| rho_full sqrt(a^2 + b^2 eta^2) / |eta|`.
pub fn verify_decay(
    base: &GappedOperator,
    pert: &FormPerturbation,
    gamma: f64,
    eta_grid: &[f64],
) -> Result<DecayReport> {
    let delta = base.delta();
    let (a, b) = (pert.a(), pert.b());
    if gamma.abs() * (a + b * delta) >= delta {
        return Err(Error::CouplingTooLarge {
            gamma_abs: gamma.abs(),
            gamma_max: delta / (a + b * delta),
        });
    }
    let n = base.order();
    let identity = ComplexMatrix::identity(n);
    let h = base.h0() + &pert.v().scale_re(gamma);
    let inv_h0_norm = 1.0 / delta;
    let mut rows = Vec::with_capacity(eta_grid.len());
    let mut max_ratio: f64 = 0.0;
    for &eta in eta_grid {
        if eta == 0.0 || !eta.is_finite() {
            return Err(Error::ParameterOutOfRange {
                what: format!("eta grid entries must be finite and nonzero, got {eta}"),
            });
        }
        let contraction =
            gamma.abs() * pert.rho_full() * (a * a + b * b * eta * eta).sqrt() / eta.abs();
        if contraction >= 1.0 {
            return Err(Error::ContractionTooLarge {
                factor: contraction,
            });
        }
        let shift = identity.scale(Complex64::new(0.0, eta));
        let perturbed = LuFactors::new(&(&h - &shift))?.solve_matrix(&identity);
        let free = base.resolvent(Complex64::new(0.0, eta))?;
        let scaled_difference = eta.abs() * operator_norm(&(&perturbed - &free));
        let bound = gamma.abs() * (0.5 * a * inv_h0_norm + b) / (1.0 - contraction);
        let ratio = if bound > 0.0 {
            scaled_difference / bound
        } else if scaled_difference == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        max_ratio = max_ratio.max(ratio);
        rows.push(DecayRow {
            eta,
            scaled_difference,
            bound,
            ratio,
            contraction,
        });
    }
    Ok(DecayReport { rows, max_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let nodes = gauss_legendre_positive(8);
        assert_eq!(nodes.len(), 4);
        // Doubled positive-half sums realize the symmetric rule.
        let total_weight: f64 = nodes.iter().map(|(_, w)| 2.0 * w).sum();
        assert!((total_weight - 2.0).abs() < 1e-14);
        let x2: f64 = nodes.iter().map(|(x, w)| 2.0 * w * x * x).sum();
        assert!((x2 - 2.0 / 3.0).abs() < 1e-14);
        let x14: f64 = nodes.iter().map(|(x, w)| 2.0 * w * x.powi(14)).sum();
        assert!((x14 - 2.0 / 15.0).abs() < 1e-13, "degree-15 exactness");
        for (x, w) in nodes {
            assert!(x > 0.0 && x < 1.0 && w > 0.0);
        }
    }

    #[test]
    fn scheme_validation() {
        assert!(QuadratureScheme::new(1.0, 8).is_ok());
        assert!(QuadratureScheme::new(0.0, 8).is_err());
        assert!(QuadratureScheme::new(1.0, 9).is_err());
        assert!(QuadratureScheme::new(1.0, 4).is_err());
    }

    #[test]
    fn sign_split_of_diagonal_matrices() {
        let h = ComplexMatrix::from_real_diagonal(&[1.0, -1.0]);
        let split = riesz_split(&h, &QuadratureScheme::tuned(1.0, 1.0)).unwrap();
        let expect = ComplexMatrix::from_real_diagonal(&[1.0, 0.0]);
        assert!((&split.pair.plus - &expect).max_abs() < 1e-8);

        let h4 = ComplexMatrix::from_real_diagonal(&[3.0, 2.0, -1.0, -5.0]);
        let split4 = riesz_split(&h4, &QuadratureScheme::tuned(1.0, 5.0)).unwrap();
        let expect4 = ComplexMatrix::from_real_diagonal(&[1.0, 1.0, 0.0, 0.0]);
        assert!((&split4.pair.plus - &expect4).max_abs() < 1e-8);
        assert!(split4.idempotency_residual < 1e-7 * (1.0 + 1.0));
    }

    #[test]
    fn split_rejects_near_axis_spectrum() {
        let h = ComplexMatrix::from_real_diagonal(&[1e-9, 1.0]);
        assert!(matches!(
            riesz_split_auto(&h),
            Err(Error::EigenvalueNearAxis { .. })
        ));
    }

    #[test]
    fn split_matches_triangular_oracle_on_non_hermitian_input() {
        let h = ComplexMatrix::new(
            2,
            2,
            vec![c(1.0, 0.1), c(0.3, 0.2), c(0.1, 0.0), c(-1.2, -0.3)],
        )
        .unwrap();
        let split = riesz_split_auto(&h).unwrap();
        let (qp, _) = crate::linalg::schur_split(&h).unwrap();
        assert!(operator_norm(&(&split.pair.plus - &qp)) < 1e-7);
    }

    fn series_fixture() -> (GappedOperator, FormPerturbation) {
        let base = GappedOperator::new(ComplexMatrix::from_real_diagonal(&[1.0, -1.0])).unwrap();
        let pert = FormPerturbation::new(&base, ComplexMatrix::identity(2).scale_re(0.5)).unwrap();
        (base, pert)
    }

    #[test]
    fn series_vanishes_without_coupling() {
        let (base, pert) = series_fixture();
        for order in [0, 1, 4] {
            let s =
                resolvent_difference_series(&base, &pert, c(0.0, 0.0), 1.0, order).unwrap();
            assert_eq!(s.difference.max_abs(), 0.0);
            assert_eq!(s.tail_bound, 0.0);
        }
    }

    #[test]
    fn series_first_order_is_second_resolvent_term() {
        let (base, pert) = series_fixture();
        let s = resolvent_difference_series(&base, &pert, c(1.0, 0.0), 1.0, 1).unwrap();
        let r0 = base.resolvent(c(0.0, 1.0)).unwrap();
        let expect = -r0.matmul(&pert.v().matmul(&r0));
        assert!((&s.difference - &expect).max_abs() < 1e-13);
        assert!(s.tail_bound > 0.0);
    }

    #[test]
    fn series_converges_to_direct_difference() {
        let (base, pert) = series_fixture();
        let gamma = c(0.4, 0.1);
        let eta = 1.5;
        let n = base.order();
        let identity = ComplexMatrix::identity(n);
        let h = base.h0() + &pert.v().scale(gamma);
        let shift = identity.scale(c(0.0, eta));
        let exact = &LuFactors::new(&(&h - &shift)).unwrap().solve_matrix(&identity)
            - &base.resolvent(c(0.0, eta)).unwrap();
        for order in [1, 2, 4, 8, 16] {
            let s = resolvent_difference_series(&base, &pert, gamma, eta, order).unwrap();
            let err = operator_norm(&(&s.difference - &exact));
            assert!(
                err <= s.tail_bound * (1.0 + 1e-9) + 1e-14,
                "order {order}: error {err} vs tail bound {}",
                s.tail_bound
            );
        }
    }

    #[test]
    fn decay_bound_arithmetic_matches_frozen_values() {
        let base = GappedOperator::new(ComplexMatrix::from_real_diagonal(&[1.0, -1.0])).unwrap();
        let v = ComplexMatrix::new(
            2,
            2,
            vec![c(0.0, 0.0), c(0.3, 0.0), c(0.3, 0.0), c(0.0, 0.0)],
        )
        .unwrap();
        let pert = FormPerturbation::with_bounds(&base, v, 0.0, 0.3).unwrap();
        let report = verify_decay(&base, &pert, 1.0, &[1.0, 10.0, 100.0]).unwrap();
        assert!(report.pass(), "max ratio {}", report.max_ratio);
        let row10 = &report.rows[1];
        assert!((row10.contraction - 0.09).abs() < 1e-12);
        assert!((row10.bound - 0.3 / 0.91).abs() < 1e-6);
    }

    #[test]
    fn decay_of_zero_coupling_is_zero() {
        let (base, pert) = series_fixture();
        let report = verify_decay(&base, &pert, 0.0, &[1.0, 5.0]).unwrap();
        for row in &report.rows {
            assert_eq!(row.scaled_difference, 0.0);
            assert_eq!(row.ratio, 0.0);
        }
    }

    #[test]
    fn decay_rejects_oversized_coupling() {
        let (base, pert) = series_fixture();
        // Default weights for 0.5 I on a unit-gap base: rho = 0.5, so
        // gamma = 3 breaks the strip precondition.
        assert!(matches!(
            verify_decay(&base, &pert, 3.0, &[1.0]),
            Err(Error::CouplingTooLarge { .. })
        ));
    }
}
