//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use num_complex::Complex64;

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .copied()
        .collect()
}

pub fn real_singular_values(m: &Mat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .copied()
        .collect()
}

/// Largest singular value; 0 for empty matrices.
pub fn sigma_max(m: &CMat) -> f64 {
    singular_values(m).into_iter().fold(0.0, f64::max)
}

/// Smallest singular value over min(rows, cols) values; 0 for empty matrices.
pub fn sigma_min(m: &CMat) -> f64 {
    let sv = singular_values(m);
    if sv.is_empty() {
        return 0.0;
    }
    sv.into_iter().fold(f64::INFINITY, f64::min)
}

/// Spectral condition number sigma_max / sigma_min (infinite when singular).
pub fn condition_number(m: &Mat) -> f64 {
    let sv = real_singular_values(m);
    if sv.is_empty() {
        return 1.0;
    }
    let hi = sv.iter().copied().fold(0.0, f64::max);
    let lo = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if lo <= 0.0 || !lo.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Orthonormal basis of the null space of `m`, columns ordered by increasing
/// singular value. Rank decisions use `rel_tol * sigma_max`.
pub fn null_space(m: &Mat, rel_tol: f64) -> Mat {
    let cols = m.ncols();
    if cols == 0 {
        return Mat::zeros(0, 0);
    }
    // pad with zero rows so the SVD returns a full right singular basis
    let rows = m.nrows().max(cols);
    let mut padded = Mat::zeros(rows, cols);
    padded.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let thresh = rel_tol * smax.max(f64::MIN_POSITIVE);
    let mut idx: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= thresh)
        .collect();
    idx.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let mut basis = Mat::zeros(cols, idx.len());
    for (k, &i) in idx.iter().enumerate() {
        for r in 0..cols {
            basis[(r, k)] = v_t[(i, r)];
        }
    }
    basis
}

/// H^{-1/2} for a Hermitian positive-definite matrix.
pub fn hermitian_inv_sqrt(h: &CMat) -> CMat {
    let n = h.nrows();
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(h.clone());
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let f = 1.0 / lam.max(f64::MIN_POSITIVE).sqrt();
        for i in 0..n {
            scaled[(i, j)] *= f;
        }
    }
    &scaled * v.adjoint()
}

/// Determinant of a complex square matrix via LU (1 for 0x0).
pub fn cdet(m: &CMat) -> Complex64 {
    if m.is_empty() {
        return Complex64::new(1.0, 0.0);
    }
    m.clone().lu().determinant()
}

/// Solve `m x = rhs` for a complex square system, returning `None` when a
/// pivot falls below `rel_tol` times the largest matrix entry.
pub fn csolve(m: &CMat, rhs: &CMat, rel_tol: f64) -> Option<CMat> {
    let n = m.nrows();
    if n == 0 {
        return Some(CMat::zeros(0, rhs.ncols()));
    }
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let lu = m.clone().lu();
    let u = lu.u();
    let min_pivot = (0..n)
        .map(|i| u[(i, i)].norm())
        .fold(f64::INFINITY, f64::min);
    if !(min_pivot > rel_tol * scale.max(1e-300)) {
        return None;
    }
    lu.solve(rhs)
}

/// Real square solve with the same pivot guard as [`csolve`].
pub fn solve(m: &Mat, rhs: &Mat, rel_tol: f64) -> Option<Mat> {
    let n = m.nrows();
    if n == 0 {
        return Some(Mat::zeros(0, rhs.ncols()));
    }
    let scale = m.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let lu = m.clone().lu();
    let u = lu.u();
    let min_pivot = (0..n)
        .map(|i| u[(i, i)].abs())
        .fold(f64::INFINITY, f64::min);
    if !(min_pivot > rel_tol * scale.max(1e-300)) {
        return None;
    }
    lu.solve(rhs)
}

/// Block-diagonal concatenation.
pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_wide_matrix() {
        // [A - lambda I, B] for the double integrator at lambda = -1
        let m = Mat::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
        let ns = null_space(&m, 1e-10);
        assert_eq!(ns.ncols(), 1);
        let v = ns.column(0);
        let s = v[0];
        assert!((v[1] / s + 1.0).abs() < 1e-12);
        assert!((v[2] / s - 1.0).abs() < 1e-12);
        assert!((&m * ns).norm() < 1e-12);
    }

    #[test]
    fn inv_sqrt_of_scaled_identity() {
        let h = CMat::identity(2, 2) * Complex64::new(4.0, 0.0);
        let r = hermitian_inv_sqrt(&h);
        assert!((r[(0, 0)].re - 0.5).abs() < 1e-14);
        assert!(r[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn condition_of_singular_is_infinite() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(condition_number(&m) > 1e15);
    }
}
