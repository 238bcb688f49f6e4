//! LU factorization with partial pivoting, the workhorse behind every
//! resolvent evaluation in the crate.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;

/// Packed LU factors of a square matrix, `P A = L U` with unit lower factor.
#[derive(Debug, Clone)]
pub struct LuFactors {
    /// Combined storage: strict lower part holds L, upper part holds U.
    packed: ComplexMatrix,
    /// Row permutation: `perm[i]` is the source row of factored row `i`.
    perm: Vec<usize>,
}

impl LuFactors {
    /// Factors `a`, failing on rectangular input or a vanishing pivot.
    ///
    /// Pivots are compared against a scale-relative floor so a matrix of
    /// tiny but uniform magnitude still factors.
    pub fn new(a: &ComplexMatrix) -> Result<Self> {
        let n = a.require_square()?;
        let mut packed = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = packed.max_abs().max(f64::MIN_POSITIVE);
        let floor = scale * 1e-14 * (n as f64);

        for k in 0..n {
            let mut pivot_row = k;
            let mut pivot_mag = packed[(k, k)].norm();
            for r in (k + 1)..n {
                let mag = packed[(r, k)].norm();
                if mag > pivot_mag {
                    pivot_mag = mag;
                    pivot_row = r;
                }
            }
            if pivot_mag <= floor {
                return Err(Error::Singular {
                    step: k,
                    pivot: pivot_mag,
                });
            }
            if pivot_row != k {
                for j in 0..n {
                    let tmp = packed[(k, j)];
                    packed[(k, j)] = packed[(pivot_row, j)];
                    packed[(pivot_row, j)] = tmp;
                }
                perm.swap(k, pivot_row);
            }
            let pivot = packed[(k, k)];
            for r in (k + 1)..n {
                let factor = packed[(r, k)] / pivot;
                packed[(r, k)] = factor;
                for j in (k + 1)..n {
                    let sub = factor * packed[(k, j)];
                    packed[(r, j)] -= sub;
                }
            }
        }
        Ok(Self { packed, perm })
    }

    pub fn order(&self) -> usize {
        self.packed.rows()
    }

    /// Solves `A x = b` for a single right-hand side.
    pub fn solve_vec(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.order();
        assert_eq!(b.len(), n);
        // Forward substitution on the permuted rhs.
        let mut y: Vec<Complex64> = (0..n).map(|i| b[self.perm[i]]).collect();
        for i in 0..n {
            for j in 0..i {
                let sub = self.packed[(i, j)] * y[j];
                y[i] -= sub;
            }
        }
        // Back substitution.
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                let sub = self.packed[(i, j)] * y[j];
                y[i] -= sub;
            }
            y[i] /= self.packed[(i, i)];
        }
        y
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &ComplexMatrix) -> ComplexMatrix {
        let n = self.order();
        assert_eq!(b.rows(), n);
        let mut out = ComplexMatrix::zeros(n, b.cols());
        for j in 0..b.cols() {
            let col: Vec<Complex64> = (0..n).map(|i| b[(i, j)]).collect();
            let x = self.solve_vec(&col);
            for i in 0..n {
                out[(i, j)] = x[i];
            }
        }
        out
    }
}

/// Solves `A x = b`, factoring on the fly.
pub fn solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(LuFactors::new(a)?.solve_matrix(b))
}

/// Matrix inverse via LU.
pub fn inverse(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = a.require_square()?;
    solve(a, &ComplexMatrix::identity(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn solves_known_system() {
        // [[2, 1], [1, 3]] x = [5, 10] has solution x = [1, 3].
        let a = ComplexMatrix::new(2, 2, vec![c(2.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(3.0, 0.0)])
            .unwrap();
        let b = ComplexMatrix::new(2, 1, vec![c(5.0, 0.0), c(10.0, 0.0)]).unwrap();
        let x = solve(&a, &b).unwrap();
        assert!((x[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((x[(1, 0)] - c(3.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn inverse_of_complex_matrix() {
        let a = ComplexMatrix::new(
            2,
            2,
            vec![c(1.0, 1.0), c(2.0, 0.0), c(0.0, -1.0), c(3.0, 2.0)],
        )
        .unwrap();
        let inv = inverse(&a).unwrap();
        let idr = (&a * &inv) - (&ComplexMatrix::identity(2));
        let idl = (&inv * &a) - (&ComplexMatrix::identity(2));
        assert!(idr.max_abs() < 1e-14);
        assert!(idl.max_abs() < 1e-14);
    }

    #[test]
    fn rejects_singular() {
        let a = ComplexMatrix::new(2, 2, vec![c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)])
            .unwrap();
        assert!(matches!(inverse(&a), Err(Error::Singular { .. })));
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let a = ComplexMatrix::new(2, 2, vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
            .unwrap();
        let inv = inverse(&a).unwrap();
        assert!(((&a * &inv) - (&ComplexMatrix::identity(2))).max_abs() < 1e-15);
    }

    #[test]
    fn tiny_uniform_scale_still_factors() {
        // The pivot floor is relative to the matrix scale, so a uniformly
        // small matrix is not mistaken for a singular one.
        let a = ComplexMatrix::new(
            2,
            2,
            vec![c(1e-8, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1e-8, 0.0)],
        )
        .unwrap();
        let x = solve(&a, &ComplexMatrix::identity(2)).unwrap();
        assert!((x[(0, 0)].re - 1e8).abs() / 1e8 < 1e-12);
    }
}
