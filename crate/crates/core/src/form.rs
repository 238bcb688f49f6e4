//! Relative form bounds for perturbations of a gapped Hermitian operator.
//!
//! The base operator has a spectral gap around zero. A perturbation `V` is
//! measured against it through the weights `H_ab = a I + b |H0|`: the scaled
//! coupling `C_ab = H_ab^{-1/2} V H_ab^{-1/2}` is a bounded matrix whose norm
//! quantifies how strongly `V` can move the spectrum. Everything downstream
//! (strip enclosures, series contraction rates, angular bounds) is driven by
//! this data.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{operator_norm, schur_decompose, HermitianEigensystem};
use crate::matrix::ComplexMatrix;
use crate::projection::ProjectionPair;

const GAP_FLOOR_REL: f64 = 1e-12;
const HERMITIAN_FLAG_REL: f64 = 1e-12;

/// Hermitian operator whose spectrum stays out of `(-delta, delta)`.
///
/// The gap half-width is recomputed from the spectrum at construction, so
/// the invariant `delta = min |eigenvalue| > 0` always holds.
#[derive(Debug, Clone)]
pub struct GappedOperator {
    h0: ComplexMatrix,
    eig: HermitianEigensystem,
    delta: f64,
}

impl GappedOperator {
    pub fn new(h0: ComplexMatrix) -> Result<Self> {
        let eig = HermitianEigensystem::new(&h0)?;
        let delta = eig.min_abs_eigenvalue();
        let floor = GAP_FLOOR_REL * (1.0 + eig.max_abs_eigenvalue());
        if !(delta > floor) {
            return Err(Error::NoGap { min_abs: delta });
        }
        Ok(Self { h0, eig, delta })
    }

    pub fn h0(&self) -> &ComplexMatrix {
        &self.h0
    }

    pub fn order(&self) -> usize {
        self.h0.rows()
    }

    /// Half-width of the spectral gap at zero.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn eigensystem(&self) -> &HermitianEigensystem {
        &self.eig
    }

    /// Operator norm of the base, the largest eigenvalue magnitude.
    pub fn norm(&self) -> f64 {
        self.eig.max_abs_eigenvalue()
    }

    /// `|H0|^p`; well defined for all real `p` thanks to the gap.
    pub fn abs_power(&self, p: f64) -> ComplexMatrix {
        self.eig
            .apply(|l| l.abs().powf(p))
            .expect("gap keeps |H0|^p finite")
    }

    /// Weight `a I + b |H0|`.
    pub fn h_ab(&self, a: f64, b: f64) -> ComplexMatrix {
        self.eig
            .apply(|l| a + b * l.abs())
            .expect("affine function is finite")
    }

    /// `(a I + b |H0|)^p`. Fails when `a = b = 0` makes the weight singular.
    pub fn h_ab_power(&self, a: f64, b: f64, p: f64) -> Result<ComplexMatrix> {
        if a < 0.0 || b < 0.0 || a + b <= 0.0 {
            return Err(Error::DegenerateFormBound { a, b });
        }
        self.eig.apply(|l| (a + b * l.abs()).powf(p))
    }

    /// Resolvent `(H0 - z)^{-1}` through the spectral calculus.
    pub fn resolvent(&self, z: Complex64) -> Result<ComplexMatrix> {
        self.eig
            .apply_complex(|l| (Complex64::new(l, 0.0) - z).inv())
    }

    /// Orthogonal spectral projections onto the positive and negative parts
    /// of the spectrum.
    pub fn spectral_pair(&self) -> ProjectionPair {
        let plus = self
            .eig
            .apply(|l| if l > 0.0 { 1.0 } else { 0.0 })
            .expect("indicator is finite");
        ProjectionPair::from_plus(plus).expect("projector is square")
    }
}

/// A perturbation together with its form-bound data relative to a base.
#[derive(Debug, Clone)]
pub struct FormPerturbation {
    v: ComplexMatrix,
    symmetric: bool,
    a: f64,
    b: f64,
    c_ab: ComplexMatrix,
    norm_c_ab: f64,
    rho_full: f64,
    rho_half: f64,
}

/// JSON-facing digest of the form-bound data.
#[derive(Debug, Clone, Serialize)]
pub struct FormSummary {
    pub a: f64,
    pub b: f64,
    pub rho_full: f64,
    pub rho_half: f64,
    pub norm_c_ab: f64,
}

impl FormPerturbation {
    /// Default weights `a = 0`, `b = rho_full`, which are tight in finite
    /// dimension: they make the scaled coupling exactly norm one.
    pub fn new(base: &GappedOperator, v: ComplexMatrix) -> Result<Self> {
        let (rho_full, _) = compute_rho(base, &v)?;
        if rho_full == 0.0 {
            // Zero perturbation: any weight works; use the operator norm
            // scale to keep the weight nonsingular.
            return Self::with_bounds(base, v, 1.0, 0.0);
        }
        Self::with_bounds(base, v, 0.0, rho_full)
    }

    /// Explicit weights `(a, b)`.
    pub fn with_bounds(base: &GappedOperator, v: ComplexMatrix, a: f64, b: f64) -> Result<Self> {
        check_dimensions(base, &v)?;
        let (rho_full, rho_half) = compute_rho(base, &v)?;
        let c_ab = compute_c_ab(base, &v, a, b)?;
        let norm_c_ab = operator_norm(&c_ab);
        let symmetric = v.hermitian_deviation() <= HERMITIAN_FLAG_REL * (1.0 + v.max_abs());
        Ok(Self {
            v,
            symmetric,
            a,
            b,
            c_ab,
            norm_c_ab,
            rho_full,
            rho_half,
        })
    }

    pub fn v(&self) -> &ComplexMatrix {
        &self.v
    }

    pub fn symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// The scaled coupling `H_ab^{-1/2} V H_ab^{-1/2}`.
    pub fn c_ab(&self) -> &ComplexMatrix {
        &self.c_ab
    }

    pub fn norm_c_ab(&self) -> f64 {
        self.norm_c_ab
    }

    /// Norm of the coupling scaled by `|H0|^{-1/2}` on both sides.
    pub fn rho_full(&self) -> f64 {
        self.rho_full
    }

    /// Same, but with both arguments restricted to a single spectral
    /// half-space of the base; never exceeds `rho_full`.
    pub fn rho_half(&self) -> f64 {
        self.rho_half
    }

    pub fn summary(&self) -> FormSummary {
        FormSummary {
            a: self.a,
            b: self.b,
            rho_full: self.rho_full,
            rho_half: self.rho_half,
            norm_c_ab: self.norm_c_ab,
        }
    }
}

/// The base, a perturbation and a fixed coupling constant, with the
/// perturbed matrix formed exactly.
#[derive(Debug, Clone)]
pub struct PerturbedOperator {
    pub base: GappedOperator,
    pub pert: FormPerturbation,
    pub gamma: Complex64,
    pub h: ComplexMatrix,
}

impl PerturbedOperator {
    pub fn order(&self) -> usize {
        self.h.rows()
    }

    /// The perturbed matrix is Hermitian exactly when the coupling is real
    /// and the perturbation symmetric.
    pub fn is_hermitian(&self) -> bool {
        self.gamma.im == 0.0 && self.pert.symmetric
    }

    /// Residual of the weighted factorization of `h - z`: the identity
    /// `h - z = H_ab^{1/2} [(H0 - z) H_ab^{-1} + gamma C_ab] H_ab^{1/2}`
    /// holds exactly, so the residual measures only rounding.
    pub fn factorization_residual(&self, z: Complex64) -> f64 {
        let n = self.order();
        let a = self.pert.a;
        let b = self.pert.b;
        let half = self
            .base
            .h_ab_power(a, b, 0.5)
            .expect("weights validated at construction");
        let inv = self
            .base
            .h_ab_power(a, b, -1.0)
            .expect("weights validated at construction");
        let h0_minus_z = self.base.h0() - &ComplexMatrix::identity(n).scale(z);
        let c_hat = h0_minus_z.matmul(&inv) + self.pert.c_ab.scale(self.gamma);
        let reassembled = half.matmul(&c_hat).matmul(&half);
        let shifted = &self.h - &ComplexMatrix::identity(n).scale(z);
        operator_norm(&(&reassembled - &shifted))
    }
}

fn check_dimensions(base: &GappedOperator, v: &ComplexMatrix) -> Result<()> {
    if v.rows() != base.order() || v.cols() != base.order() {
        return Err(Error::DimensionMismatch {
            left_rows: base.order(),
            left_cols: base.order(),
            right_rows: v.rows(),
            right_cols: v.cols(),
        });
    }
    v.require_finite()
}

/// Scaled coupling `H_ab^{-1/2} V H_ab^{-1/2}`.
pub fn compute_c_ab(
    base: &GappedOperator,
    v: &ComplexMatrix,
    a: f64,
    b: f64,
) -> Result<ComplexMatrix> {
    check_dimensions(base, v)?;
    let inv_half = base.h_ab_power(a, b, -0.5)?;
    Ok(inv_half.matmul(v).matmul(&inv_half))
}

/// Full and half-space coupling norms relative to `|H0|^{1/2}`.
///
/// `rho_full` is the norm of `C0 = |H0|^{-1/2} V |H0|^{-1/2}`; `rho_half`
/// is the maximum over the four blocks `P_i C0 P_j` cut by the spectral
/// projections of the base. The supremum over arguments confined to the two
/// half-spaces factorizes over the block choice, so the block maximum is
/// exact, and `rho_half <= rho_full` always.
pub fn compute_rho(base: &GappedOperator, v: &ComplexMatrix) -> Result<(f64, f64)> {
    check_dimensions(base, v)?;
    let inv_half = base.abs_power(-0.5);
    let c0 = inv_half.matmul(v).matmul(&inv_half);
    let rho_full = operator_norm(&c0);
    let pair = base.spectral_pair();
    let mut rho_half: f64 = 0.0;
    for left in [&pair.plus, &pair.minus] {
        for right in [&pair.plus, &pair.minus] {
            rho_half = rho_half.max(operator_norm(&left.matmul(&c0).matmul(right)));
        }
    }
    Ok((rho_full, rho_half.min(rho_full)))
}

/// Forms `h = h0 + gamma v` and cross-checks the weighted factorization of
/// `h - i` before returning.
pub fn construct_h(
    base: &GappedOperator,
    pert: &FormPerturbation,
    gamma: Complex64,
) -> Result<PerturbedOperator> {
    check_dimensions(base, pert.v())?;
    let h = base.h0() + &pert.v().scale(gamma);
    let op = PerturbedOperator {
        base: base.clone(),
        pert: pert.clone(),
        gamma,
        h,
    };
    let residual = op.factorization_residual(Complex64::new(0.0, 1.0));
    let tolerance = 1e-9 * operator_norm(&op.h).max(f64::MIN_POSITIVE);
    if residual > tolerance {
        return Err(Error::PostconditionFailed {
            what: "weighted factorization of h - i",
            residual,
            tolerance,
        });
    }
    Ok(op)
}

/// Outcome of the spectral-strip check.
#[derive(Debug, Clone)]
pub struct StripReport {
    /// Real interval whose vertical strip lies in the resolvent set, or
    /// `None` when the coupling is too large for the enclosure to apply.
    pub interval: Option<(f64, f64)>,
    /// Eigenvalues found inside the strip; empty when the enclosure holds.
    pub violations: Vec<Complex64>,
    /// Human-readable reason when no interval is produced.
    pub diagnostic: Option<String>,
}

impl StripReport {
    pub fn ok(&self) -> bool {
        self.interval.is_some() && self.violations.is_empty()
    }
}

/// Checks the spectral enclosure: for real coupling with
/// `|gamma| (a + b delta) < delta`, the strip over
/// `(-delta + |gamma|(a + b delta), delta - |gamma|(a + b delta))`
/// contains no spectrum of `h`.
pub fn spectral_strip(
    base: &GappedOperator,
    pert: &FormPerturbation,
    gamma: f64,
) -> Result<StripReport> {
    check_dimensions(base, pert.v())?;
    let delta = base.delta();
    let shrink = gamma.abs() * (pert.a() + pert.b() * delta);
    if shrink >= delta {
        return Ok(StripReport {
            interval: None,
            violations: Vec::new(),
            diagnostic: Some(format!(
                "coupling too large: |gamma| (a + b delta) = {shrink:.6e} >= delta = {delta:.6e}"
            )),
        });
    }
    let lo = -delta + shrink;
    let hi = delta - shrink;
    let h = base.h0() + &pert.v().scale_re(gamma);
    let eigenvalues: Vec<Complex64> = if pert.symmetric() {
        HermitianEigensystem::new(&h)?
            .eigenvalues
            .iter()
            .map(|&l| Complex64::new(l, 0.0))
            .collect()
    } else {
        schur_decompose(&h)?.eigenvalues()
    };
    // Boundary eigenvalues are legal: the enclosed strip is open.
    let slack = 1e-12 * (1.0 + operator_norm(&h));
    let violations: Vec<Complex64> = eigenvalues
        .into_iter()
        .filter(|l| l.re > lo + slack && l.re < hi - slack)
        .collect();
    Ok(StripReport {
        interval: Some((lo, hi)),
        violations,
        diagnostic: None,
    })
}

/// Searches weights `(a, b)` with `a + b delta < omega delta` that keep the
/// scaled coupling a contraction, returning the cheapest feasible pair.
///
/// `(0, rho_full)` is tried first since it is exactly feasible whenever
/// `rho_full < omega`; after that a lattice over the constraint triangle is
/// scanned in order of increasing `a + b delta`.
pub fn ab_from_omega(base: &GappedOperator, v: &ComplexMatrix, omega: f64) -> Option<(f64, f64)> {
    if !(omega > 0.0) || check_dimensions(base, v).is_err() {
        return None;
    }
    if operator_norm(v) == 0.0 {
        return Some((0.0, 0.0));
    }
    let delta = base.delta();
    let budget = omega * delta;
    let (rho_full, _) = compute_rho(base, v).expect("dimensions already checked");

    let mut candidates: Vec<(f64, f64)> = Vec::new();
    if rho_full * delta < budget {
        candidates.push((0.0, rho_full));
    }
    const GRID: usize = 17;
    let mut lattice: Vec<(f64, f64)> = Vec::new();
    for ia in 0..GRID {
        for ib in 0..GRID {
            let a = budget * 0.999 * (ia as f64) / ((GRID - 1) as f64);
            let b = (budget * 0.999 / delta) * (ib as f64) / ((GRID - 1) as f64);
            if a + b > 0.0 && a + b * delta < budget {
                lattice.push((a, b));
            }
        }
    }
    lattice.sort_by(|p, q| {
        let cp = p.0 + p.1 * delta;
        let cq = q.0 + q.1 * delta;
        cp.partial_cmp(&cq)
            .unwrap()
            .then(p.0.partial_cmp(&q.0).unwrap())
    });
    candidates.extend(lattice);

    for (a, b) in candidates {
        let c = compute_c_ab(base, v, a, b).expect("a + b > 0 on every candidate");
        if operator_norm(&c) <= 1.0 + 1e-12 {
            return Some((a, b));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sign_base() -> GappedOperator {
        GappedOperator::new(ComplexMatrix::from_real_diagonal(&[1.0, -1.0])).unwrap()
    }

    fn offdiag(t: f64) -> ComplexMatrix {
        ComplexMatrix::new(2, 2, vec![c(0.0, 0.0), c(t, 0.0), c(t, 0.0), c(0.0, 0.0)]).unwrap()
    }

    #[test]
    fn gap_is_recomputed_from_spectrum() {
        let base = GappedOperator::new(ComplexMatrix::from_real_diagonal(&[3.0, -0.5, 2.0]))
            .unwrap();
        assert!((base.delta() - 0.5).abs() < 1e-15);
        assert!(matches!(
            GappedOperator::new(ComplexMatrix::from_real_diagonal(&[1.0, 0.0])),
            Err(Error::NoGap { .. })
        ));
    }

    #[test]
    fn scaled_coupling_trivial_cases() {
        let base = sign_base();
        let zero = compute_c_ab(&base, &ComplexMatrix::zeros(2, 2), 1.0, 0.0).unwrap();
        assert!(zero.max_abs() == 0.0);

        // a = b = 1 gives the weight 2I, so the coupling is v / 2.
        let half = compute_c_ab(&base, &ComplexMatrix::identity(2), 1.0, 1.0).unwrap();
        assert!((&half - &ComplexMatrix::identity(2).scale_re(0.5)).max_abs() < 1e-14);

        // |H0| = I, so with a = 0, b = 1 the coupling is v itself.
        let v = offdiag(0.3);
        let same = compute_c_ab(&base, &v, 0.0, 1.0).unwrap();
        assert!((&same - &v).max_abs() < 1e-14);

        assert!(matches!(
            compute_c_ab(&base, &v, 0.0, 0.0),
            Err(Error::DegenerateFormBound { .. })
        ));
    }

    #[test]
    fn rho_of_single_offdiagonal_coupling() {
        let base = sign_base();
        let (full, half) = compute_rho(&base, &offdiag(0.3)).unwrap();
        assert!((full - 0.3).abs() < 1e-13);
        assert!((half - 0.3).abs() < 1e-13);
        let (zf, zh) = compute_rho(&base, &ComplexMatrix::zeros(2, 2)).unwrap();
        assert_eq!((zf, zh), (0.0, 0.0));
    }

    #[test]
    fn rho_half_never_exceeds_rho_full() {
        let base = GappedOperator::new(ComplexMatrix::from_real_diagonal(&[2.0, 1.0, -1.5, -3.0]))
            .unwrap();
        let v = ComplexMatrix::from_fn(4, 4, |i, j| {
            let (p, q, s) = if i <= j { (i, j, 1.0) } else { (j, i, -1.0) };
            c(
                ((p * 3 + q) as f64 * 0.61).sin(),
                if p == q { 0.0 } else { s * ((p + 2 * q) as f64 * 0.37).cos() },
            )
        });
        let (full, half) = compute_rho(&base, &v).unwrap();
        assert!(half <= full + 1e-12);
        // Four blocks cover the full matrix, so the max block norm is at
        // least half of the full norm.
        assert!(full <= 2.0 * half + 1e-12);
    }

    #[test]
    fn construct_h_matches_direct_sum() {
        let base = sign_base();
        let pert = FormPerturbation::new(&base, ComplexMatrix::identity(2)).unwrap();
        let op = construct_h(&base, &pert, c(0.5, 0.0)).unwrap();
        assert!((&op.h - &ComplexMatrix::from_real_diagonal(&[1.5, -0.5])).max_abs() < 1e-15);
        assert!(op.is_hermitian());

        let zero = construct_h(&base, &pert, c(0.0, 0.0)).unwrap();
        assert_eq!(&zero.h, base.h0());
    }

    #[test]
    fn factorization_residual_is_rounding_level() {
        let base = GappedOperator::new(ComplexMatrix::from_real_diagonal(&[2.0, 1.0, -1.0, -2.5]))
            .unwrap();
        let v = ComplexMatrix::from_fn(4, 4, |i, j| {
            let (p, q, s) = if i <= j { (i, j, 1.0) } else { (j, i, -1.0) };
            c(
                ((p + q * 2) as f64 * 0.83).sin() * 0.4,
                if p == q { 0.0 } else { s * ((p * 2 + q) as f64 * 0.19).sin() * 0.4 },
            )
        });
        let pert = FormPerturbation::new(&base, v).unwrap();
        let op = construct_h(&base, &pert, c(0.3, 0.2)).unwrap();
        for z in [c(0.0, 1.0), c(0.5, -2.0), c(-1.0, 0.7), c(3.0, 3.0), c(-2.0, -0.1)] {
            assert!(op.factorization_residual(z) <= 1e-9 * operator_norm(&op.h));
        }
    }

    #[test]
    fn strip_arithmetic_matches_contract() {
        let base = sign_base();
        let pert = FormPerturbation::with_bounds(&base, offdiag(0.1), 0.2, 0.3).unwrap();
        let report = spectral_strip(&base, &pert, 1.0).unwrap();
        let (lo, hi) = report.interval.unwrap();
        assert!((lo + 0.5).abs() < 1e-14 && (hi - 0.5).abs() < 1e-14);
        assert!(report.ok(), "violations: {:?}", report.violations);

        let zero = FormPerturbation::new(&base, ComplexMatrix::zeros(2, 2)).unwrap();
        let free = spectral_strip(&base, &zero, 0.0).unwrap();
        assert_eq!(free.interval, Some((-1.0, 1.0)));
        assert!(free.ok());
    }

    #[test]
    fn strip_declines_large_coupling() {
        let base = sign_base();
        let pert = FormPerturbation::with_bounds(&base, offdiag(0.1), 0.6, 0.5).unwrap();
        let report = spectral_strip(&base, &pert, 1.0).unwrap();
        assert!(report.interval.is_none());
        assert!(report.diagnostic.is_some());
    }

    #[test]
    fn ab_search_finds_tight_weights() {
        let base = sign_base();
        assert_eq!(
            ab_from_omega(&base, &ComplexMatrix::zeros(2, 2), 1.0),
            Some((0.0, 0.0))
        );

        let v = ComplexMatrix::identity(2).scale_re(0.4);
        let (a, b) = ab_from_omega(&base, &v, 0.5).unwrap();
        assert!((a, b) == (0.0, 0.4));
        let c_ab = compute_c_ab(&base, &v, a, b).unwrap();
        assert!(operator_norm(&c_ab) <= 1.0 + 1e-12);

        // Nothing feasible when the budget is below the coupling strength.
        assert_eq!(ab_from_omega(&base, &v, 0.2), None);
    }

    #[test]
    fn symmetric_flag_tracks_hermiticity() {
        let base = sign_base();
        let sym = FormPerturbation::new(&base, offdiag(0.3)).unwrap();
        assert!(sym.symmetric());
        let mut v = offdiag(0.3);
        v[(0, 1)] = c(0.3, 0.1);
        let asym = FormPerturbation::new(&base, v).unwrap();
        assert!(!asym.symmetric());
    }

    #[test]
    fn default_bounds_make_coupling_norm_one() {
        let base = GappedOperator::new(ComplexMatrix::from_real_diagonal(&[2.0, -1.0, 1.5]))
            .unwrap();
        let v = ComplexMatrix::from_fn(3, 3, |i, j| {
            if i == j {
                c(0.2, 0.0)
            } else {
                c(0.1 * (i + j) as f64, 0.0)
            }
        });
        let pert = FormPerturbation::new(&base, v).unwrap();
        assert_eq!(pert.a(), 0.0);
        assert!((pert.b() - pert.rho_full()).abs() < 1e-15);
        assert!((pert.norm_c_ab() - 1.0).abs() < 1e-10);
    }
}
