//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Eigenvalues of a symmetric matrix below `-PSD_TOL` (relative to its scale) are errors.
pub const PSD_TOL: f64 = 1e-10;

pub fn from_rows(rows: &[Vec<f64>]) -> Option<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if rows.iter().any(|x| x.len() != c) {
        return None;
    }
    Some(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= tol * scale
}

/// Eigenvalues (ascending) and eigenvectors of a symmetric matrix.
pub fn sym_eigen(m: &Matrix) -> (Vec<f64>, Matrix) {
    let n = m.nrows();
    if n == 0 {
        return (vec![], Matrix::zeros(0, 0));
    }
    let e = symmetrize(m).symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = Matrix::from_fn(n, n, |r, c| e.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    sym_eigen(m).0.first().copied().unwrap_or(0.0)
}

pub fn max_eigenvalue(m: &Matrix) -> f64 {
    sym_eigen(m).0.last().copied().unwrap_or(0.0)
}

/// Returns the PSD projection if the smallest eigenvalue is within tolerance, `None` otherwise.
pub fn clamp_psd(m: &Matrix, tol: f64) -> Option<Matrix> {
    let (vals, vecs) = sym_eigen(m);
    let scale = vals.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    if vals.iter().any(|&v| v < -tol * scale) {
        return None;
    }
    if vals.iter().all(|&v| v >= 0.0) {
        return Some(symmetrize(m));
    }
    let d = Matrix::from_diagonal(&Vector::from_iterator(vals.len(), vals.iter().map(|v| v.max(0.0))));
    Some(symmetrize(&(&vecs * d * vecs.transpose())))
}

/// Symmetric square root with negative eigenvalues clamped at zero.
pub fn psd_sqrt(m: &Matrix) -> Matrix {
    let (vals, vecs) = sym_eigen(m);
    let d = Matrix::from_diagonal(&Vector::from_iterator(vals.len(), vals.iter().map(|v| v.max(0.0).sqrt())));
    symmetrize(&(&vecs * d * vecs.transpose()))
}

/// Numerical rank: singular values at or below `max(rows, cols) * sigma_max * 2^-40` count as zero.
pub fn numerical_rank(m: &Matrix) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    if smax == 0.0 {
        return 0;
    }
    let tol = m.nrows().max(m.ncols()) as f64 * smax * 2f64.powi(-40);
    sv.iter().filter(|&&s| s > tol).count()
}

/// `e^{tA}` (scaling and squaring with Padé approximants, via nalgebra).
pub fn expm(a: &Matrix, t: f64) -> Matrix {
    if t == 0.0 || a.amax() == 0.0 {
        return Matrix::identity(a.nrows(), a.ncols());
    }
    (a * t).exp()
}

pub fn block_diag(a: &Matrix, n: usize) -> Matrix {
    let mut out = Matrix::zeros(n, n);
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out
}

pub fn frobenius(m: &Matrix) -> f64 {
    m.norm()
}

/// Spectral norm (largest singular value).
pub fn op_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().iter().fold(0.0f64, |a, &b| a.max(b))
}

pub fn quad_form(m: &Matrix, k: &[f64]) -> f64 {
    let n = k.len();
    let mut s = 0.0;
    for i in 0..n {
        let mut r = 0.0;
        for j in 0..n {
            r += m[(i, j)] * k[j];
        }
        s += k[i] * r;
    }
    s
}

pub fn mat_vec(m: &Matrix, z: &[f64], out: &mut [f64]) {
    for i in 0..m.nrows() {
        let mut s = 0.0;
        for (j, zj) in z.iter().enumerate() {
            s += m[(i, j)] * zj;
        }
        out[i] = s;
    }
}
