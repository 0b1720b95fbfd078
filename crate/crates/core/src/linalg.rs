//! Dense complex linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Default singular-value cut for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Largest absolute entry; 0 for empty matrices.
pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `max |a - b|` entrywise.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Eigen-decomposition of `[[0, A], [A*, 0]]`, whose eigenvalues are `±σ_i`
/// and whose eigenvectors carry the singular vectors as `(u, ±v) / √2`.
///
/// Singular values are computed this way because nalgebra's SVD occasionally
/// returns wrong factors, while its Hermitian eigensolver has been reliable.
fn jordan_wielandt(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let (m, n) = a.shape();
    let mut h = CMatrix::zeros(m + n, m + n);
    h.view_mut((0, m), (m, n)).copy_from(a);
    h.view_mut((m, 0), (n, m)).copy_from(&a.adjoint());
    hermitian_eigen(&h)
}

pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    let k = a.nrows().min(a.ncols());
    if k == 0 {
        return Vec::new();
    }
    let (values, _) = jordan_wielandt(a);
    values.iter().rev().take(k).map(|v| v.max(0.0)).collect()
}

/// Orthonormalizes the columns of `w`, keeping the `r` most independent ones
/// (Gram-Schmidt with column pivoting and reorthogonalization).
fn orthonormal_columns(w: &CMatrix, r: usize) -> CMatrix {
    let mut cols: Vec<CVector> = w.column_iter().map(|c| c.into_owned()).collect();
    let mut q: Vec<CVector> = Vec::with_capacity(r);
    for _ in 0..r.min(cols.len()) {
        let (best, _) = cols
            .iter()
            .enumerate()
            .map(|(j, c)| (j, c.norm()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .expect("columns remain");
        let mut v = cols.swap_remove(best);
        for _ in 0..2 {
            for qi in &q {
                let h = qi.dotc(&v);
                v -= qi * h;
            }
        }
        let norm = v.norm();
        if norm == 0.0 {
            break;
        }
        v /= c(norm);
        for col in &mut cols {
            let h = v.dotc(col);
            *col -= &v * h;
        }
        q.push(v);
    }
    let rows = w.nrows();
    CMatrix::from_fn(rows, q.len(), |i, k| q[k][i])
}
/// Spectral norm.
pub fn op_norm(a: &CMatrix) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Eigen-decomposition of a Hermitian matrix (symmetrized first), eigenvalues ascending.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let h = (a + a.adjoint()) * c(0.5);
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    (values, vectors)
}

pub fn lambda_max(a: &CMatrix) -> f64 {
    hermitian_eigen(a).0.last().copied().unwrap_or(0.0)
}

pub fn lambda_min(a: &CMatrix) -> f64 {
    hermitian_eigen(a).0.first().copied().unwrap_or(0.0)
}

/// Outcome of a thresholded rank decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankInfo {
    pub rank: usize,
    pub threshold: f64,
    /// Smallest kept singular value (infinity if none kept).
    pub smallest_kept: f64,
    /// Largest discarded singular value (0 if none discarded).
    pub largest_dropped: f64,
}

impl RankInfo {
    /// Ratio-free view of the gap at the cut: `smallest_kept - largest_dropped`.
    pub fn gap(&self) -> f64 {
        if self.smallest_kept.is_infinite() {
            self.threshold - self.largest_dropped
        } else {
            self.smallest_kept - self.largest_dropped
        }
    }
}

/// Threshold used for a matrix whose largest singular value is `smax`.
///
/// Scaled by `max(smax, 1)` so that a matrix consisting of round-off noise is
/// not promoted to full rank by a purely relative cut.
pub fn rank_threshold(smax: f64, tol: f64) -> f64 {
    tol * smax.max(1.0)
}

fn rank_of_values(values: &[f64], tol: f64) -> RankInfo {
    let smax = values.first().copied().unwrap_or(0.0);
    let threshold = rank_threshold(smax, tol);
    let rank = values.iter().filter(|s| **s > threshold).count();
    RankInfo {
        rank,
        threshold,
        smallest_kept: if rank > 0 { values[rank - 1] } else { f64::INFINITY },
        largest_dropped: values.get(rank).copied().unwrap_or(0.0),
    }
}

pub fn rank(a: &CMatrix, tol: f64) -> RankInfo {
    rank_of_values(&singular_values(a), tol)
}

/// Orthonormal basis (as columns) of the column space of `a`.
pub fn range_basis(a: &CMatrix, tol: f64) -> (CMatrix, RankInfo) {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return (CMatrix::zeros(m, 0), rank_of_values(&[], tol));
    }
    let (values, vectors) = jordan_wielandt(a);
    let k = m.min(n);
    let top: Vec<f64> = values.iter().rev().take(k).map(|v| v.max(0.0)).collect();
    let info = rank_of_values(&top, tol);
    let total = m + n;
    let u = CMatrix::from_fn(m, info.rank, |i, j| vectors[(i, total - 1 - j)]);
    (orthonormal_columns(&u, info.rank), info)
}

/// Orthonormal basis (as columns) of the null space of `a`.
pub fn null_space(a: &CMatrix, tol: f64) -> CMatrix {
    let (m, n) = a.shape();
    if n == 0 {
        return CMatrix::zeros(0, 0);
    }
    if m == 0 {
        return identity(n);
    }
    let (values, vectors) = jordan_wielandt(a);
    let k = m.min(n);
    let top: Vec<f64> = values.iter().rev().take(k).map(|v| v.max(0.0)).collect();
    let r = rank_of_values(&top, tol).rank;
    let total = m + n;
    let v = orthonormal_columns(&CMatrix::from_fn(n, r, |i, j| vectors[(m + i, total - 1 - j)]), r);
    // The kernel is the orthogonal complement of the row space.
    let complement = identity(n) - &v * v.adjoint();
    let (_, vecs) = hermitian_eigen(&complement);
    let kernel = CMatrix::from_fn(n, n - v.ncols(), |i, j| vecs[(i, n - 1 - j)]);
    orthonormal_columns(&kernel, n - v.ncols())
}

/// Square root of a positive semidefinite matrix; eigenvalues in `[-tol, 0)`
/// are clamped to zero, more negative ones are an error.
pub fn psd_sqrt(a: &CMatrix, tol: f64) -> Result<CMatrix, f64> {
    let (values, vectors) = hermitian_eigen(a);
    if let Some(&lowest) = values.first() {
        if lowest < -tol {
            return Err(lowest);
        }
    }
    let roots = CVector::from_iterator(values.len(), values.iter().map(|v| c(v.max(0.0).sqrt())));
    Ok(&vectors * CMatrix::from_diagonal(&roots) * vectors.adjoint())
}

/// Unitary factor `U` of the polar decomposition `A = U |A|` of an invertible
/// matrix, by the scaled Newton iteration `X ← (ζX + (ζX)^{-*}) / 2`.
///
/// Returns `None` when `A` is singular.
pub fn polar_unitary(a: &CMatrix) -> Option<CMatrix> {
    let n = a.nrows();
    if n == 0 {
        return Some(CMatrix::zeros(0, 0));
    }
    let mut x = a.clone();
    let mut scale = true;
    for _ in 0..100 {
        let inv = x.clone().try_inverse()?;
        let zeta = if scale { (inv.norm() / x.norm()).sqrt() } else { 1.0 };
        let next = (&x * c(zeta) + inv.adjoint() * c(1.0 / zeta)) * c(0.5);
        let change = (&next - &x).norm();
        x = next;
        if change < 1e-2 {
            scale = false;
        }
        if change <= 4.0 * f64::EPSILON * (n as f64).sqrt() {
            break;
        }
    }
    x.iter().all(|z| z.is_finite()).then_some(x)
}

/// Orthogonal projection onto the span of orthonormal columns.
pub fn projector(basis: &CMatrix) -> CMatrix {
    basis * basis.adjoint()
}

/// Block-diagonal matrix from square or rectangular blocks.
pub fn block_diag(blocks: &[&CMatrix]) -> CMatrix {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let (mut r, mut k) = (0, 0);
    for b in blocks {
        out.view_mut((r, k), b.shape()).copy_from(b);
        r += b.nrows();
        k += b.ncols();
    }
    out
}

/// `‖A - A^2‖` and `‖A - A*‖` combined: how far `a` is from an orthogonal projection.
pub fn projection_defect(a: &CMatrix) -> f64 {
    max_abs_diff(a, &(a * a)).max(max_abs_diff(a, &a.adjoint()))
}

/// Condition number in the spectral norm (infinite for singular matrices).
pub fn condition_number(a: &CMatrix) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(hi), Some(lo)) if *lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Largest principal angle sine between the spans of two orthonormal bases of equal dimension.
pub fn subspace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    if a.ncols() != b.ncols() {
        return 1.0;
    }
    if a.ncols() == 0 {
        return 0.0;
    }
    op_norm(&(projector(a) - projector(b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> CMatrix {
        CMatrix::from_row_iterator(rows, cols, data.iter().map(|x| c(*x)))
    }

    #[test]
    fn norm_and_rank_of_small_matrices() {
        let a = m(2, 2, &[3.0, 0.0, 0.0, 4.0]);
        assert!((op_norm(&a) - 4.0).abs() < 1e-14);
        assert_eq!(rank(&a, RANK_TOL).rank, 2);
        let b = m(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let info = rank(&b, RANK_TOL);
        assert_eq!(info.rank, 1);
        assert!(info.gap() > 1.0);
        assert_eq!(rank(&CMatrix::zeros(3, 3), RANK_TOL).rank, 0);
        assert_eq!(rank(&(CMatrix::identity(2, 2) * c(1e-14)), RANK_TOL).rank, 0);
    }

    #[test]
    fn null_space_of_a_wide_matrix() {
        let b = m(1, 3, &[1.0, 1.0, 0.0]);
        let n = null_space(&b, RANK_TOL);
        assert_eq!(n.ncols(), 2);
        assert!(max_abs(&(&b * &n)) < 1e-14);
        assert!(max_abs_diff(&(n.adjoint() * &n), &identity(2)) < 1e-14);
    }

    #[test]
    fn range_basis_is_orthonormal() {
        let b = m(3, 2, &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
        let (q, info) = range_basis(&b, RANK_TOL);
        assert_eq!(info.rank, 1);
        assert!(max_abs_diff(&(q.adjoint() * &q), &identity(1)) < 1e-14);
        assert!(max_abs_diff(&(projector(&q) * &b), &b) < 1e-14);
    }

    #[test]
    fn square_roots_and_polar_factors() {
        let a = m(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let r = psd_sqrt(&a, 1e-12).unwrap();
        assert!(max_abs_diff(&(&r * &r), &a) < 1e-13);
        assert!(psd_sqrt(&m(1, 1, &[-1.0]), 1e-12).is_err());
        assert_eq!(psd_sqrt(&m(1, 1, &[-1e-14]), 1e-12).unwrap()[(0, 0)], ZERO);

        let b = m(2, 2, &[0.0, 2.0, -3.0, 0.0]);
        let u = polar_unitary(&b).unwrap();
        assert!(max_abs_diff(&(u.adjoint() * &u), &identity(2)) < 1e-14);
        let p = u.adjoint() * &b;
        assert!(max_abs_diff(&p, &p.adjoint()) < 1e-14);
        assert!(lambda_min(&p) > 0.0);
    }

    #[test]
    fn decompositions_survive_low_rank_inputs() {
        // Products of Gaussian factors: inputs on which nalgebra's SVD has misbehaved.
        let mut r = crate::synth::rng(1);
        for n in 1..10 {
            for k in 1..=n {
                let g = crate::synth::gaussian_matrix(n, k, &mut r) * crate::synth::gaussian_matrix(k, n + 1, &mut r);
                let (q, info) = range_basis(&g, RANK_TOL);
                assert_eq!(info.rank, k);
                assert!(max_abs_diff(&(projector(&q) * &g), &g) < 1e-10 * max_abs(&g).max(1.0));
                let kernel = null_space(&g, RANK_TOL);
                assert_eq!(kernel.ncols(), n + 1 - k);
                assert!(max_abs(&(&g * &kernel)) < 1e-10 * max_abs(&g).max(1.0));
                let sv = singular_values(&g);
                let frob: f64 = sv.iter().map(|s| s * s).sum();
                assert!((frob - g.norm_squared()).abs() < 1e-10 * frob.max(1.0));
            }
        }
    }

    #[test]
    fn polar_factor_of_singular_matrix_is_none() {
        assert!(polar_unitary(&m(2, 2, &[1.0, 1.0, 1.0, 1.0])).is_none());
    }

    #[test]
    fn eigenvalues_come_sorted() {
        let a = m(3, 3, &[5.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 2.0]);
        let (values, vectors) = hermitian_eigen(&a);
        assert_eq!(values.len(), 3);
        assert!((values[0] + 1.0).abs() < 1e-14 && (values[2] - 5.0).abs() < 1e-14);
        let d = CMatrix::from_diagonal(&CVector::from_iterator(3, values.iter().map(|v| c(*v))));
        assert!(max_abs_diff(&(&vectors * d * vectors.adjoint()), &a) < 1e-13);
    }

    #[test]
    fn block_diagonal_assembly() {
        let a = m(1, 1, &[1.0]);
        let b = m(2, 2, &[2.0, 3.0, 4.0, 5.0]);
        let d = block_diag(&[&a, &b]);
        assert_eq!(d.shape(), (3, 3));
        assert_eq!(d[(2, 1)], c(4.0));
        assert_eq!(d[(0, 1)], ZERO);
    }
}
