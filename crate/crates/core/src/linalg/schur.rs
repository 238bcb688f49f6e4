//! Complex Schur decomposition with eigenvalue reordering, plus the
//! triangular-form route to spectral projectors.
//!
//! The decomposition is the classic pipeline: Householder reduction to
//! Hessenberg form, then single-shift QR with Givens rotations and a
//! Wilkinson shift. Reordering swaps adjacent diagonal entries with unitary
//! similarities so a selected eigenvalue cluster can be moved to the leading
//! block, after which the spectral projector drops out of a small Sylvester
//! equation.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;

const MAX_ITERS_PER_EIGENVALUE: usize = 80;

/// Unitary similarity `A = Z T Z*` with `T` upper triangular.
#[derive(Debug, Clone)]
pub struct SchurForm {
    pub t: ComplexMatrix,
    pub z: ComplexMatrix,
}

impl SchurForm {
    /// Diagonal of `T`, i.e. the eigenvalues of `A` in decomposition order.
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        (0..self.t.rows()).map(|i| self.t[(i, i)]).collect()
    }

    /// Reorders the triangular factor so the eigenvalues flagged in
    /// `select` occupy the leading diagonal positions, preserving the
    /// similarity. Returns the number of selected eigenvalues.
    pub fn reorder(&mut self, select: &[bool]) -> usize {
        let n = self.t.rows();
        assert_eq!(select.len(), n);
        let mut sel = select.to_vec();
        let mut target = 0;
        for i in 0..n {
            if sel[i] {
                for k in (target..i).rev() {
                    self.swap_adjacent(k);
                    sel.swap(k, k + 1);
                }
                target += 1;
            }
        }
        target
    }

    /// Unitary swap of the diagonal entries at positions `k` and `k + 1`.
    fn swap_adjacent(&mut self, k: usize) {
        let t11 = self.t[(k, k)];
        let t12 = self.t[(k, k + 1)];
        let t22 = self.t[(k + 1, k + 1)];
        // Equal eigenvalues need no swap; either ordering selects the same
        // invariant subspace.
        let gap = (t22 - t11).norm();
        if gap <= f64::EPSILON * (t11.norm() + t22.norm()) {
            return;
        }
        // (t12, t22 - t11) spans the eigenvector of the 2x2 block for t22;
        // rotating it onto e1 swaps the diagonal.
        let x = t12;
        let y = t22 - t11;
        let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
        let (gx, gy) = (x / r, y / r);
        apply_givens_similarity(&mut self.t, k, gx, gy);
        apply_givens_right(&mut self.z, k, gx, gy);
        self.t[(k + 1, k)] = Complex64::new(0.0, 0.0);
        self.t[(k, k)] = t22;
        self.t[(k + 1, k + 1)] = t11;
    }
}

/// Rows `k, k+1` of `m` are hit with `G = [[conj(gx), conj(gy)], [-gy, gx]]`
/// and columns `k, k+1` with `G*`, a unitary similarity.
fn apply_givens_similarity(m: &mut ComplexMatrix, k: usize, gx: Complex64, gy: Complex64) {
    let n = m.cols();
    for j in 0..n {
        let a = m[(k, j)];
        let b = m[(k + 1, j)];
        m[(k, j)] = gx.conj() * a + gy.conj() * b;
        m[(k + 1, j)] = -gy * a + gx * b;
    }
    apply_givens_right(m, k, gx, gy);
}

/// Right multiplication by `G*`, mixing columns `k` and `k + 1`.
fn apply_givens_right(m: &mut ComplexMatrix, k: usize, gx: Complex64, gy: Complex64) {
    let rows = m.rows();
    for i in 0..rows {
        let a = m[(i, k)];
        let b = m[(i, k + 1)];
        m[(i, k)] = a * gx + b * gy;
        m[(i, k + 1)] = -a * gy.conj() + b * gx.conj();
    }
}

/// Computes the Schur form of a general square complex matrix.
pub fn schur_decompose(a: &ComplexMatrix) -> Result<SchurForm> {
    let n = a.require_square()?;
    a.require_finite()?;
    let mut h = a.clone();
    let mut z = ComplexMatrix::identity(n);
    if n >= 3 {
        hessenberg(&mut h, &mut z);
    }
    qr_iterate(&mut h, &mut z)?;
    // Hard-zero the strictly lower triangle: the iteration only leaves
    // rounding dust there.
    for i in 0..n {
        for j in 0..i {
            h[(i, j)] = Complex64::new(0.0, 0.0);
        }
    }
    let form = SchurForm { t: h, z };
    let scale = 1.0 + a.max_abs();
    let residual = (&form.z.matmul(&form.t).matmul(&form.z.adjoint()) - a).max_abs();
    if residual > 1e-9 * scale {
        return Err(Error::PostconditionFailed {
            what: "Schur factorization residual",
            residual,
            tolerance: 1e-9 * scale,
        });
    }
    Ok(form)
}

/// Householder reduction to upper Hessenberg form, accumulating `z`.
fn hessenberg(h: &mut ComplexMatrix, z: &mut ComplexMatrix) {
    let n = h.rows();
    for k in 0..n - 2 {
        // Reflect rows k+1..n to annihilate column k below the subdiagonal.
        let m = n - k - 1;
        let mut x: Vec<Complex64> = (0..m).map(|i| h[(k + 1 + i, k)]).collect();
        let norm_x = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if norm_x <= f64::MIN_POSITIVE {
            continue;
        }
        let alpha = x[0];
        let phase = if alpha.norm() > 0.0 {
            alpha / alpha.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        // v = x + phase * |x| e1, giving the Hermitian reflector I - 2 u u*.
        x[0] += phase * norm_x;
        let norm_v = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if norm_v <= f64::MIN_POSITIVE {
            continue;
        }
        let u: Vec<Complex64> = x.iter().map(|v| v / norm_v).collect();

        // Row update on rows k+1..n: H <- (I - 2 u u*) H.
        for j in 0..n {
            let mut w = Complex64::new(0.0, 0.0);
            for i in 0..m {
                w += u[i].conj() * h[(k + 1 + i, j)];
            }
            for i in 0..m {
                let sub = 2.0 * u[i] * w;
                h[(k + 1 + i, j)] -= sub;
            }
        }
        // Column update on cols k+1..n: H <- H (I - 2 u u*).
        for i in 0..n {
            let mut w = Complex64::new(0.0, 0.0);
            for j in 0..m {
                w += h[(i, k + 1 + j)] * u[j];
            }
            for j in 0..m {
                let sub = 2.0 * w * u[j].conj();
                h[(i, k + 1 + j)] -= sub;
            }
        }
        // Accumulate Z <- Z (I - 2 u u*).
        for i in 0..n {
            let mut w = Complex64::new(0.0, 0.0);
            for j in 0..m {
                w += z[(i, k + 1 + j)] * u[j];
            }
            for j in 0..m {
                let sub = 2.0 * w * u[j].conj();
                z[(i, k + 1 + j)] -= sub;
            }
        }
        // The annihilated entries are zero in exact arithmetic.
        for i in 1..m {
            h[(k + 1 + i, k)] = Complex64::new(0.0, 0.0);
        }
    }
}

/// Single-shift QR with deflation on a Hessenberg matrix.
fn qr_iterate(h: &mut ComplexMatrix, z: &mut ComplexMatrix) -> Result<()> {
    let n = h.rows();
    if n < 2 {
        return Ok(());
    }
    let scale = h.frobenius_norm().max(f64::MIN_POSITIVE);
    let budget = MAX_ITERS_PER_EIGENVALUE * n;
    let mut hi = n - 1;
    let mut total = 0usize;
    let mut stalls = 0usize;
    while hi > 0 {
        // Deflate negligible subdiagonals, then find the active window.
        let mut lo = hi;
        loop {
            let off = h[(lo, lo - 1)].norm();
            let local = h[(lo - 1, lo - 1)].norm() + h[(lo, lo)].norm();
            let tol = f64::EPSILON * if local > 0.0 { local } else { scale };
            if off <= tol {
                h[(lo, lo - 1)] = Complex64::new(0.0, 0.0);
                break;
            }
            if lo == 1 {
                lo = 0;
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            hi -= 1;
            stalls = 0;
            continue;
        }
        total += 1;
        stalls += 1;
        if total > budget {
            return Err(Error::NoConvergence { iterations: total });
        }
        let mu = if stalls % 30 == 0 {
            // Rotating complex offset: spectra symmetric under negation or
            // conjugation defeat any fixed real offset, so the phase walks
            // a low-discrepancy angle sequence.
            let angle = 2.399_963_229_728_653 * (stalls / 10) as f64;
            h[(hi, hi)] + Complex64::from_polar(0.75 * h[(hi, hi - 1)].norm(), angle)
        } else if stalls % 10 == 0 {
            // Exceptional shift to break symmetric stalls.
            h[(hi, hi)] + Complex64::new(0.75 * h[(hi, hi - 1)].norm(), 0.0)
        } else {
            wilkinson_shift(h, hi)
        };
        qr_step(h, z, lo, hi, mu);
    }
    Ok(())
}

/// Eigenvalue of the trailing 2x2 block closest to its bottom-right entry.
fn wilkinson_shift(h: &ComplexMatrix, hi: usize) -> Complex64 {
    let a = h[(hi - 1, hi - 1)];
    let b = h[(hi - 1, hi)];
    let c = h[(hi, hi - 1)];
    let d = h[(hi, hi)];
    let mid = (a + d) * 0.5;
    let disc = ((a - d) * 0.5).powu(2) + b * c;
    let root = disc.sqrt();
    let l1 = mid + root;
    let l2 = mid - root;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// One implicit single-shift bulge chase over the window `[lo, hi]`.
fn qr_step(h: &mut ComplexMatrix, z: &mut ComplexMatrix, lo: usize, hi: usize, mu: Complex64) {
    let mut x = h[(lo, lo)] - mu;
    let mut y = h[(lo + 1, lo)];
    for k in lo..hi {
        let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
        if r > f64::MIN_POSITIVE {
            let (gx, gy) = (x / r, y / r);
            apply_givens_similarity(h, k, gx, gy);
            apply_givens_right(z, k, gx, gy);
        }
        if k + 2 <= hi {
            x = h[(k + 1, k)];
            y = h[(k + 2, k)];
        }
    }
}

/// Complementary spectral projectors of a square matrix, split by the sign
/// of the eigenvalue real parts.
///
/// The matrix is brought to ordered Schur form with the right-half-plane
/// eigenvalues leading; for `T = [[A, C], [0, B]]` the projector onto the
/// leading invariant subspace is `[[I, X], [0, 0]]` where `A X - X B = C`.
/// Fails if any eigenvalue sits within `1e-12 * (1 + max |eig|)` of the
/// imaginary axis, where the split is meaningless.
pub fn schur_split(a: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let n = a.require_square()?;
    let mut form = schur_decompose(a)?;
    let eigs = form.eigenvalues();
    let max_eig = eigs.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let required = 1e-12 * (1.0 + max_eig);
    let margin = eigs
        .iter()
        .map(|l| l.re.abs())
        .fold(f64::INFINITY, f64::min);
    if margin < required {
        return Err(Error::EigenvalueNearAxis { margin, required });
    }
    let select: Vec<bool> = eigs.iter().map(|l| l.re > 0.0).collect();
    let k = form.reorder(&select);

    let q_plus = if k == 0 {
        ComplexMatrix::zeros(n, n)
    } else if k == n {
        ComplexMatrix::identity(n)
    } else {
        let a_blk = form.t.block(0, 0, k, k);
        let c_blk = form.t.block(0, k, k, n - k);
        let b_blk = form.t.block(k, k, n - k, n - k);
        let x = solve_triangular_sylvester(&a_blk, &b_blk, &c_blk);
        let mut p = ComplexMatrix::zeros(n, n);
        p.set_block(0, 0, &ComplexMatrix::identity(k));
        p.set_block(0, k, &x);
        form.z.matmul(&p).matmul(&form.z.adjoint())
    };
    let q_minus = &ComplexMatrix::identity(n) - &q_plus;

    let idem = (&q_plus.matmul(&q_plus) - &q_plus).max_abs();
    let tol = 1e-8 * (1.0 + q_plus.max_abs().powi(2));
    if idem > tol {
        return Err(Error::PostconditionFailed {
            what: "spectral projector idempotency",
            residual: idem,
            tolerance: tol,
        });
    }
    Ok((q_plus, q_minus))
}

/// Solves `A X - X B = C` where `A` (k x k) and `B` (m x m) are upper
/// triangular with disjoint spectra, by back substitution column by column.
fn solve_triangular_sylvester(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    c: &ComplexMatrix,
) -> ComplexMatrix {
    let k = a.rows();
    let m = b.rows();
    let mut x = ComplexMatrix::zeros(k, m);
    for j in 0..m {
        // (A - B_jj I) x_j = c_j + sum_{i<j} x_i B_ij.
        let bjj = b[(j, j)];
        let mut rhs: Vec<Complex64> = (0..k).map(|i| c[(i, j)]).collect();
        for i in 0..j {
            let bij = b[(i, j)];
            for row in 0..k {
                rhs[row] += x[(row, i)] * bij;
            }
        }
        for row in (0..k).rev() {
            let mut acc = rhs[row];
            for col in (row + 1)..k {
                acc -= a[(row, col)] * x[(col, j)];
            }
            x[(row, j)] = acc / (a[(row, row)] - bjj);
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn assert_schur_valid(a: &ComplexMatrix, form: &SchurForm, tol: f64) {
        let n = a.rows();
        let rebuilt = form.z.matmul(&form.t).matmul(&form.z.adjoint());
        assert!((&rebuilt - a).max_abs() < tol, "similarity residual");
        let ztz = form.z.adjoint().matmul(&form.z);
        assert!(
            (&ztz - &ComplexMatrix::identity(n)).max_abs() < tol,
            "unitarity residual"
        );
        for i in 0..n {
            for j in 0..i {
                assert_eq!(form.t[(i, j)], c(0.0, 0.0), "triangularity");
            }
        }
    }

    #[test]
    fn triangular_input_is_fixed_point() {
        let a = ComplexMatrix::new(2, 2, vec![c(1.0, 0.0), c(5.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
            .unwrap();
        let form = schur_decompose(&a).unwrap();
        assert_schur_valid(&a, &form, 1e-12);
    }

    #[test]
    fn dense_matrix_decomposes() {
        let n = 6;
        let a = ComplexMatrix::from_fn(n, n, |i, j| {
            c(
                ((i * 5 + j * 2) as f64 * 0.71).sin(),
                ((i + 3 * j) as f64 * 0.29).cos(),
            )
        });
        let form = schur_decompose(&a).unwrap();
        assert_schur_valid(&a, &form, 1e-11);
    }

    #[test]
    fn eigenvalues_of_rotation_block() {
        // [[0, 1], [-1, 0]] has eigenvalues +-i.
        let a = ComplexMatrix::new(2, 2, vec![c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)])
            .unwrap();
        let form = schur_decompose(&a).unwrap();
        let mut ims: Vec<f64> = form.eigenvalues().iter().map(|l| l.im).collect();
        ims.sort_by(|p, q| p.partial_cmp(q).unwrap());
        assert!((ims[0] + 1.0).abs() < 1e-12);
        assert!((ims[1] - 1.0).abs() < 1e-12);
        for l in form.eigenvalues() {
            assert!(l.re.abs() < 1e-12);
        }
    }

    #[test]
    fn reorder_moves_selected_to_front() {
        let a = ComplexMatrix::from_fn(5, 5, |i, j| {
            c(
                ((2 * i + j) as f64 * 0.43).sin(),
                ((i + 4 * j) as f64 * 0.17).sin(),
            )
        });
        let mut form = schur_decompose(&a).unwrap();
        let eigs = form.eigenvalues();
        let select: Vec<bool> = eigs.iter().map(|l| l.re > 0.0).collect();
        let want: Vec<Complex64> = eigs.iter().filter(|l| l.re > 0.0).cloned().collect();
        let k = form.reorder(&select);
        assert_eq!(k, want.len());
        assert_schur_valid(&a, &form, 1e-10);
        let reordered = form.eigenvalues();
        for i in 0..k {
            assert!(reordered[i].re > 0.0);
            // The multiset of leading eigenvalues matches the selection.
            assert!(want
                .iter()
                .any(|w| (w - reordered[i]).norm() < 1e-9));
        }
        for l in reordered.iter().skip(k) {
            assert!(l.re <= 0.0);
        }
    }

    #[test]
    fn split_of_block_triangular_example() {
        // For [[1, 5], [0, -1]] the projector onto the eigenvalue +1 is
        // [[1, 2.5], [0, 0]]: the Sylvester solve gives (1 - (-1)) x = 5.
        let a = ComplexMatrix::new(2, 2, vec![c(1.0, 0.0), c(5.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
            .unwrap();
        let (qp, qm) = schur_split(&a).unwrap();
        let expect =
            ComplexMatrix::new(2, 2, vec![c(1.0, 0.0), c(2.5, 0.0), c(0.0, 0.0), c(0.0, 0.0)])
                .unwrap();
        assert!((&qp - &expect).max_abs() < 1e-12);
        assert!((&(&qp + &qm) - &ComplexMatrix::identity(2)).max_abs() < 1e-14);
        // Both commute with A and are idempotent.
        assert!((&qp.matmul(&a) - &a.matmul(&qp)).max_abs() < 1e-12);
        assert!((&qp.matmul(&qp) - &qp).max_abs() < 1e-12);
    }

    #[test]
    fn split_rejects_axis_eigenvalues() {
        let a = ComplexMatrix::new(2, 2, vec![c(0.0, 1.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)])
            .unwrap();
        assert!(matches!(
            schur_split(&a),
            Err(Error::EigenvalueNearAxis { .. })
        ));
    }

    #[test]
    fn split_is_trivial_for_definite_sign() {
        let a = ComplexMatrix::from_real_diagonal(&[1.0, 2.0, 3.0]);
        let (qp, qm) = schur_split(&a).unwrap();
        assert!((&qp - &ComplexMatrix::identity(3)).max_abs() < 1e-12);
        assert!(qm.max_abs() < 1e-12);
    }

    #[test]
    fn split_commutes_on_dense_instance() {
        // Shifted dense matrix with spectrum split by the imaginary axis.
        let n = 6;
        let base = ComplexMatrix::from_fn(n, n, |i, j| {
            c(
                ((i * 3 + j * 7) as f64 * 0.31).sin() * 0.4,
                ((2 * i + j) as f64 * 0.59).cos() * 0.4,
            )
        });
        let shift = ComplexMatrix::from_real_diagonal(&[2.0, 2.0, 2.0, -2.0, -2.0, -2.0]);
        let a = &base + &shift;
        let (qp, qm) = schur_split(&a).unwrap();
        assert!((&qp.matmul(&a) - &a.matmul(&qp)).max_abs() < 1e-9);
        assert!((&qp.matmul(&qp) - &qp).max_abs() < 1e-9);
        assert!((&(&qp + &qm) - &ComplexMatrix::identity(n)).max_abs() < 1e-12);
        // Rank of the positive projector equals the positive eigenvalue count.
        let trace = qp.trace();
        assert!((trace.re - 3.0).abs() < 1e-9 && trace.im.abs() < 1e-9);
    }
}
