//! Seeded random problem instances and the bundled reference model.
//!
//! Every generator is a pure function of `(seed, index)`: instance `index`
//! draws from its own deterministic stream, so sweeps reproduce exactly,
//! in any order, under any parallel schedule. The constructions guarantee
//! the preconditions of the routines they feed (spectral margins, coupling
//! budgets, reference-tilt angles) so that sweeps run without rejection
//! logic on the caller's side.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use std::f64::consts::{FRAC_PI_2, TAU};

use crate::angular::ReferenceProjections;
use crate::error::{Error, Result};
use crate::form::{compute_rho, FormPerturbation, GappedOperator};
use crate::linalg::{inverse, operator_norm, schur_decompose, HermitianEigensystem};
use crate::matrix::ComplexMatrix;
use crate::projection::{orthonormalize, ProjectionPair};

/// Base eigenvalue magnitudes are drawn from `[GAP, GAP + SPREAD]`.
const GAP: f64 = 1.0;
const SPREAD: f64 = 2.0;
/// Oracle instances keep `|gamma| ||V||` at most this fraction of the gap,
/// so the perturbed spectrum stays clear of the imaginary axis.
const MAX_LOAD: f64 = 0.35;
/// Relative spectral margin required of a generated perturbed operator.
const MARGIN_REL: f64 = 1e-3;
/// Safety margin kept between the tilt angle budget and a right angle.
const ANGLE_SLACK: f64 = 0.02;
/// Attempt cap for rejection loops; generation is expected to succeed in
/// one or two attempts, the cap only bounds pathological streams.
const MAX_ATTEMPTS: usize = 64;

/// Deterministic stream for instance `index` of a seeded family.
fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Uniform complex entries with real and imaginary parts in
/// `[-scale, scale]`.
pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(
            scale * rng.gen_range(-1.0..=1.0),
            scale * rng.gen_range(-1.0..=1.0),
        )
    })
}

/// Random Hermitian matrix, the Hermitian part of a uniform draw.
pub fn random_hermitian(rng: &mut impl Rng, n: usize, scale: f64) -> ComplexMatrix {
    random_matrix(rng, n, n, scale).hermitian_part()
}

/// Haar-like random unitary: the eigenvector matrix of a random Hermitian
/// draw. Exactly unitary up to diagonalization round-off.
pub fn random_unitary(rng: &mut impl Rng, n: usize) -> Result<ComplexMatrix> {
    let herm = random_hermitian(rng, n, 1.0);
    Ok(HermitianEigensystem::new(&herm)?.eigenvectors.clone())
}

/// Orthonormal basis of a random `k`-dimensional subspace of `C^n`.
pub fn random_subspace(rng: &mut impl Rng, n: usize, k: usize) -> Result<ComplexMatrix> {
    orthonormalize(&random_matrix(rng, n, k, 1.0), 1e-8)
}

/// Random Hermitian base with both spectral half-spaces populated and
/// eigenvalue magnitudes in `[GAP, GAP + SPREAD]`, conjugated by a random
/// unitary. The gap is `GAP` up to round-off.
pub fn random_gapped(rng: &mut impl Rng, dim: usize) -> Result<GappedOperator> {
    if dim < 2 {
        return Err(Error::ParameterOutOfRange {
            what: format!("gapped base needs dimension at least 2, got {dim}"),
        });
    }
    let rank_plus = rng.gen_range(1..dim);
    let levels: Vec<f64> = (0..dim)
        .map(|i| {
            let magnitude = GAP + SPREAD * rng.gen::<f64>();
            if i < rank_plus {
                magnitude
            } else {
                -magnitude
            }
        })
        .collect();
    let u = random_unitary(rng, dim)?;
    let h0 = u
        .matmul(&ComplexMatrix::from_real_diagonal(&levels))
        .matmul(&u.adjoint());
    GappedOperator::new(h0.hermitian_part())
}

/// Smallest distance from the spectrum of `h` to the imaginary axis,
/// relative to the spectral radius scale.
fn relative_margin(h: &ComplexMatrix) -> Result<f64> {
    let eigenvalues = schur_decompose(h)?.eigenvalues();
    let mut min_re = f64::INFINITY;
    let mut max_abs: f64 = 0.0;
    for l in eigenvalues {
        min_re = min_re.min(l.re.abs());
        max_abs = max_abs.max(l.norm());
    }
    Ok(min_re / (1.0 + max_abs))
}

/// A base, a perturbation, and a coupling whose perturbed operator keeps
/// the whole imaginary axis in its resolvent set.
#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub base: GappedOperator,
    pub pert: FormPerturbation,
    pub gamma: Complex64,
    /// The perturbed operator `h0 + gamma v`.
    pub h: ComplexMatrix,
}

/// Deterministic instance `index` of the seeded oracle family.
///
/// Coverage is structural, not statistical: even indices carry Hermitian
/// perturbations and odd indices general ones, while `index / 2` alternates
/// real and complex couplings; indices 0 and 1 pin the dimension extremes
/// 4 and 32. Couplings satisfy `0.25 <= |gamma| <= 1` and the load
/// `|gamma| ||V||` stays below `MAX_LOAD` times the gap, which keeps the
/// spectrum of `h` at real distance at least `0.65 delta` from the
/// imaginary axis and the scaled coupling a contraction on it.
pub fn oracle_instance(seed: u64, index: usize) -> Result<OracleInstance> {
    let mut rng = stream(seed, index as u64);
    let dim = match index {
        0 => 4,
        1 => 32,
        _ => rng.gen_range(4..=32),
    };
    let symmetric = index % 2 == 0;
    let complex_coupling = (index / 2) % 2 == 1;
    let base = random_gapped(&mut rng, dim)?;
    let raw = if symmetric {
        random_hermitian(&mut rng, dim, 1.0)
    } else {
        random_matrix(&mut rng, dim, dim, 1.0)
    };
    let modulus = rng.gen_range(0.25..=1.0);
    let gamma = if complex_coupling {
        Complex64::from_polar(modulus, rng.gen_range(0.0..TAU))
    } else {
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        Complex64::new(sign * modulus, 0.0)
    };
    let load = rng.gen_range(0.1..=MAX_LOAD) * base.delta();
    let v = raw.scale_re(load / (gamma.norm() * operator_norm(&raw)));
    let pert = FormPerturbation::new(&base, v)?;
    let h = base.h0() + &pert.v().scale(gamma);
    Ok(OracleInstance {
        base,
        pert,
        gamma,
        h,
    })
}

/// A perturbed operator with a controlled half-space coupling norm and a
/// tilted reference frame whose measured distance respects the angle
/// budget of the norm bound.
#[derive(Debug, Clone)]
pub struct BoundInstance {
    pub base: GappedOperator,
    pub pert: FormPerturbation,
    /// The perturbed operator `h0 + v` (unit coupling).
    pub h: ComplexMatrix,
    /// Tilted reference with its measured distance to the exact frame.
    pub reference: ReferenceProjections,
}

/// Deterministic instance `index` of the seeded norm-bound family.
///
/// Odd indices carry Hermitian perturbations scaled to a half-space
/// coupling norm in `[0.05, 0.85]`; even indices carry general
/// perturbations scaled into `[0.05, 0.45]`. Every third index tilts the
/// reference by a non-unitary similarity, producing an oblique reference
/// pair; the rest rotate it unitarily. The tilt is shrunk until the total
/// angle `arctan sqrt(rho / (2 - 3 rho)) + arcsin nu` (or the symmetric
/// variant) clears a right angle by `ANGLE_SLACK`.
pub fn bound_instance(seed: u64, index: usize) -> Result<BoundInstance> {
    let mut last = Error::NoConvergence {
        iterations: MAX_ATTEMPTS,
    };
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = stream(seed, (index as u64) | ((attempt as u64) << 48));
        match try_bound_instance(&mut rng, index) {
            Ok(instance) => return Ok(instance),
            Err(e) => last = e,
        }
    }
    Err(last)
}

fn try_bound_instance(rng: &mut ChaCha8Rng, index: usize) -> Result<BoundInstance> {
    let dim = rng.gen_range(4..=16);
    let symmetric = index % 2 == 1;
    let oblique = index % 3 == 2;
    let base = random_gapped(rng, dim)?;
    let raw = if symmetric {
        random_hermitian(rng, dim, 1.0)
    } else {
        random_matrix(rng, dim, dim, 1.0)
    };
    let target = if symmetric {
        rng.gen_range(0.05..=0.85)
    } else {
        rng.gen_range(0.05..=0.45)
    };
    let (_, rho_half_raw) = compute_rho(&base, &raw)?;
    if rho_half_raw <= f64::EPSILON {
        return Err(Error::DegenerateFormBound { a: 0.0, b: 0.0 });
    }
    // The half-space norm is homogeneous in v, so one rescale hits the
    // target exactly.
    let v = raw.scale_re(target / rho_half_raw);
    let pert = FormPerturbation::new(&base, v)?;
    let h = base.h0() + pert.v();
    let margin = relative_margin(&h)?;
    if margin < MARGIN_REL {
        return Err(Error::EigenvalueNearAxis {
            margin,
            required: MARGIN_REL,
        });
    }

    let rho = pert.rho_half();
    let denom = if symmetric { 2.0 - rho } else { 2.0 - 3.0 * rho };
    let base_angle = (rho / denom).sqrt().atan();
    let anchor = base.spectral_pair();
    let generator = random_hermitian(rng, dim, 1.0);
    let generator = generator.scale_re(1.0 / operator_norm(&generator).max(f64::EPSILON));
    let skew = random_matrix(rng, dim, dim, 1.0);
    let mut strength = rng.gen_range(0.02..=0.25);
    for _ in 0..MAX_ATTEMPTS {
        let tilted_plus = if oblique {
            let t = &ComplexMatrix::identity(dim) + &skew.scale_re(0.5 * strength);
            t.matmul(&anchor.plus).matmul(&inverse(&t)?)
        } else {
            let u = HermitianEigensystem::new(&generator)?
                .apply_complex(|l| Complex64::from_polar(1.0, strength * l))?;
            u.matmul(&anchor.plus).matmul(&u.adjoint())
        };
        let pair = ProjectionPair::from_plus(tilted_plus)?;
        let reference = ReferenceProjections::measured(pair, &anchor)?;
        if base_angle + reference.nu().asin() < FRAC_PI_2 - ANGLE_SLACK {
            return Ok(BoundInstance {
                base,
                pert,
                h,
                reference,
            });
        }
        strength *= 0.5;
    }
    Err(Error::AngleTooLarge {
        angle: base_angle + FRAC_PI_2,
    })
}

/// JSON shape of one serialized matrix, mirroring the interchange format.
#[derive(Deserialize)]
struct MatrixBlob {
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

impl MatrixBlob {
    fn into_matrix(self) -> Result<ComplexMatrix> {
        let data = self
            .data
            .into_iter()
            .map(|[re, im]| Complex64::new(re, im))
            .collect();
        let m = ComplexMatrix::new(self.rows, self.cols, data)?;
        m.require_finite()?;
        Ok(m)
    }
}

/// JSON shape of a model file: a base operator and a perturbation.
#[derive(Deserialize)]
struct ModelBlob {
    h0: MatrixBlob,
    v: MatrixBlob,
}

/// Parses a model file `{ "h0": ..., "v": ... }` into a validated base
/// and perturbation.
pub fn parse_model(text: &str) -> Result<(GappedOperator, FormPerturbation)> {
    let blob: ModelBlob = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let base = GappedOperator::new(blob.h0.into_matrix()?)?;
    let pert = FormPerturbation::new(&base, blob.v.into_matrix()?)?;
    Ok((base, pert))
}

/// Serializes a base and perturbation as a model file.
pub fn model_json(base: &GappedOperator, pert: &FormPerturbation) -> String {
    let h0: serde_json::Value =
        serde_json::from_str(&base.h0().to_json()).expect("round-trip of serialized matrix");
    let v: serde_json::Value =
        serde_json::from_str(&pert.v().to_json()).expect("round-trip of serialized matrix");
    let mut text = serde_json::to_string_pretty(&serde_json::json!({ "h0": h0, "v": v }))
        .expect("serialization of plain JSON value");
    text.push('\n');
    text
}

/// The bundled 8x8 reference model.
///
/// Its base is `diag(d, -d)` with `d = (2, 1.6, 1.25, 1)`. The
/// perturbation is Hermitian with purely imaginary antisymmetric diagonal
/// blocks and a real symmetric coupling block, arranged so that along
/// every ray the first spectral collision of the coupled family happens
/// exactly on the imaginary axis: the family's spectrum stays closed under
/// both conjugation and negation, forcing the approaching eigenvalue pair
/// to meet at the origin. The breakdown radius measured from axis loss
/// therefore coincides with the distance to the nearest singularity of
/// the family, which is what truncation-error decay rates are compared
/// against. The diagonal blocks keep odd-order terms of the family alive,
/// so consecutive error ratios stay informative.
pub fn reference_instance() -> Result<(GappedOperator, FormPerturbation)> {
    parse_model(include_str!("../data/reference8.json"))
}
