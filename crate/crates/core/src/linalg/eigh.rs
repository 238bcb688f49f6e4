//! Hermitian eigendecomposition via cyclic complex Jacobi rotations.
//!
//! Jacobi is slower than tridiagonalization but unconditionally stable,
//! delivers small residuals on clustered spectra, and is simple enough to
//! audit, which matters because every projector and operator root in this
//! crate flows through it.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;

const MAX_SWEEPS: usize = 100;
const HERMITIAN_TOL: f64 = 1e-9;

/// Eigenvalues (ascending) and a unitary matrix of eigenvectors, column `k`
/// belonging to `eigenvalues[k]`.
#[derive(Debug, Clone)]
pub struct HermitianEigensystem {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl HermitianEigensystem {
    /// Diagonalizes a Hermitian matrix.
    ///
    /// The input may deviate from exact symmetry by rounding noise; anything
    /// beyond `1e-9 * (1 + max entry)` is rejected rather than silently
    /// symmetrized away.
    pub fn new(a: &ComplexMatrix) -> Result<Self> {
        let n = a.require_square()?;
        a.require_finite()?;
        let tolerance = HERMITIAN_TOL * (1.0 + a.max_abs());
        let deviation = a.hermitian_deviation();
        if deviation > tolerance {
            return Err(Error::NotHermitian {
                deviation,
                tolerance,
            });
        }

        let mut w = a.hermitian_part();
        let mut v = ComplexMatrix::identity(n);
        let scale = w.frobenius_norm().max(f64::MIN_POSITIVE);
        let stop = 1e-13 * scale;
        let rotate_floor = 1e-15 * scale / (n.max(1) as f64);

        let mut converged = n < 2;
        for _ in 0..MAX_SWEEPS {
            if off_diagonal_norm(&w) <= stop {
                converged = true;
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let beta = w[(p, q)];
                    let b = beta.norm();
                    if b <= rotate_floor {
                        continue;
                    }
                    let alpha = w[(p, p)].re;
                    let gamma = w[(q, q)].re;
                    // Unit phase of the off-diagonal entry; the rotation
                    // [[c, -s w], [s w~, c]] annihilates it when
                    // t = s/c solves t^2 - 2 tau t - 1 = 0.
                    let phase = beta / b;
                    let tau = (gamma - alpha) / (2.0 * b);
                    let sign = if tau >= 0.0 { 1.0 } else { -1.0 };
                    let t = -sign / (tau.abs() + (1.0 + tau * tau).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;

                    apply_rotation(&mut w, p, q, c, s, phase);
                    // Exact zeros on the annihilated pair keep rounding from
                    // accumulating where the rotation was targeted.
                    let app = alpha * c * c + 2.0 * b * c * s + gamma * s * s;
                    let aqq = alpha * s * s - 2.0 * b * c * s + gamma * c * c;
                    w[(p, p)] = Complex64::new(app, 0.0);
                    w[(q, q)] = Complex64::new(aqq, 0.0);
                    w[(p, q)] = Complex64::new(0.0, 0.0);
                    w[(q, p)] = Complex64::new(0.0, 0.0);

                    rotate_columns(&mut v, p, q, c, s, phase);
                }
            }
        }
        if !converged && off_diagonal_norm(&w) > stop {
            return Err(Error::NoConvergence {
                iterations: MAX_SWEEPS,
            });
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| w[(i, i)].re.partial_cmp(&w[(j, j)].re).unwrap());
        let eigenvalues: Vec<f64> = order.iter().map(|&i| w[(i, i)].re).collect();
        let eigenvectors = ComplexMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
        Ok(Self {
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn order(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Smallest eigenvalue magnitude, the distance of the spectrum to zero.
    pub fn min_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| l.abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest eigenvalue magnitude, equal to the operator norm.
    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max)
    }

    /// Rebuilds `V diag(lambda) V*`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        self.apply_unchecked(|l| Complex64::new(l, 0.0))
    }

    /// Applies a real scalar function through the spectral decomposition,
    /// failing if `f` is undefined at any eigenvalue.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> Result<ComplexMatrix> {
        for &l in &self.eigenvalues {
            if !f(l).is_finite() {
                return Err(Error::UndefinedAtEigenvalue { eigenvalue: l });
            }
        }
        Ok(self.apply_unchecked(|l| Complex64::new(f(l), 0.0)))
    }

    /// Complex-valued scalar calculus, e.g. resolvents `1 / (lambda - z)`
    /// at non-real `z`.
    pub fn apply_complex(&self, f: impl Fn(f64) -> Complex64) -> Result<ComplexMatrix> {
        for &l in &self.eigenvalues {
            let y = f(l);
            if !y.re.is_finite() || !y.im.is_finite() {
                return Err(Error::UndefinedAtEigenvalue { eigenvalue: l });
            }
        }
        Ok(self.apply_unchecked(f))
    }

    fn apply_unchecked(&self, f: impl Fn(f64) -> Complex64) -> ComplexMatrix {
        let n = self.order();
        let fv: Vec<Complex64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let v = &self.eigenvectors;
        ComplexMatrix::from_fn(n, n, |i, j| {
            (0..n)
                .map(|k| v[(i, k)] * v[(j, k)].conj() * fv[k])
                .sum()
        })
    }
}

fn off_diagonal_norm(w: &ComplexMatrix) -> f64 {
    let n = w.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += w[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

/// Two-sided update `W <- U* W U` for the rotation acting on rows/cols
/// `p, q` with cosine `c`, sine `s` and off-diagonal phase `w`.
fn apply_rotation(m: &mut ComplexMatrix, p: usize, q: usize, c: f64, s: f64, phase: Complex64) {
    let n = m.rows();
    // Column update (W U): col p <- c*col_p + s*conj(w)*col_q,
    //                      col q <- -s*w*col_p + c*col_q.
    for i in 0..n {
        let mip = m[(i, p)];
        let miq = m[(i, q)];
        m[(i, p)] = mip * c + miq * s * phase.conj();
        m[(i, q)] = mip * (-s) * phase + miq * c;
    }
    // Row update (U* W): row p <- c*row_p + s*w*row_q,
    //                    row q <- -s*conj(w)*row_p + c*row_q.
    for j in 0..n {
        let mpj = m[(p, j)];
        let mqj = m[(q, j)];
        m[(p, j)] = mpj * c + mqj * s * phase;
        m[(q, j)] = mpj * (-s) * phase.conj() + mqj * c;
    }
}

/// One-sided accumulation `V <- V U`.
fn rotate_columns(v: &mut ComplexMatrix, p: usize, q: usize, c: f64, s: f64, phase: Complex64) {
    let n = v.rows();
    for i in 0..n {
        let vip = v[(i, p)];
        let viq = v[(i, q)];
        v[(i, p)] = vip * c + viq * s * phase.conj();
        v[(i, q)] = vip * (-s) * phase + viq * c;
    }
}

/// Applies a real scalar function to a Hermitian matrix.
pub fn matrix_function(a: &ComplexMatrix, f: impl Fn(f64) -> f64) -> Result<ComplexMatrix> {
    HermitianEigensystem::new(a)?.apply(f)
}

/// Spectral norm of an arbitrary rectangular matrix, computed as the square
/// root of the top eigenvalue of the Gram matrix.
pub fn operator_norm(a: &ComplexMatrix) -> f64 {
    if a.rows() == 0 || a.cols() == 0 || a.max_abs() == 0.0 {
        return 0.0;
    }
    // Normalize first so the Gram matrix cannot overflow.
    let scale = a.max_abs();
    let b = a.scale_re(1.0 / scale);
    let gram = b.adjoint().matmul(&b).hermitian_part();
    let eig = HermitianEigensystem::new(&gram)
        .expect("Gram matrix is Hermitian by construction");
    scale * eig.max_abs_eigenvalue().max(0.0).sqrt()
}
