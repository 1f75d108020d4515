//! Small dense linear-algebra helpers shared by the flow, dispatch and tie
//! modules. Everything here works on `nalgebra` dynamic matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative eigenvalue cutoff used when inverting a symmetric PSD matrix.
pub const PINV_REL_CUTOFF: f64 = 1e-10;

/// Relative threshold for discarding dependent rows of a constraint block.
pub const DEPENDENT_ROW_REL_TOL: f64 = 1e-10;

/// Moore-Penrose pseudo-inverse of a symmetric positive semi-definite matrix.
///
/// Eigenvalues at or below `PINV_REL_CUTOFF * max_eigenvalue` are treated as
/// part of the kernel.
pub fn sym_psd_pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(a.clone());
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let mut out = DMatrix::zeros(n, n);
    if max_ev <= 0.0 {
        return out;
    }
    let cutoff = PINV_REL_CUTOFF * max_ev;
    for (k, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev > cutoff {
            let u = eig.eigenvectors.column(k);
            out += (u * u.transpose()) / ev;
        }
    }
    // symmetrize away rounding asymmetry
    let t = out.transpose();
    (out + t) * 0.5
}

/// Greedy rank-revealing selection of linearly independent rows.
///
/// Rows are scanned in order and kept when their component orthogonal to the
/// rows kept so far exceeds `DEPENDENT_ROW_REL_TOL` times the largest row norm.
/// Returns the positions of the kept rows.
pub fn independent_rows(rows: &[DVector<f64>]) -> Vec<usize> {
    let scale = rows.iter().map(|r| r.norm()).fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return Vec::new();
    }
    let tol = DEPENDENT_ROW_REL_TOL * scale;
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let mut r = row.clone();
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        let nr = r.norm();
        if nr > tol {
            basis.push(r / nr);
            kept.push(i);
        }
    }
    kept
}

/// Stack row vectors into a `k x n` matrix.
pub fn stack_rows(rows: &[DVector<f64>], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows.len(), n);
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).copy_from(&r.transpose());
    }
    m
}

/// Solve the symmetric system `G y = rhs` where `G` is a Gram matrix of
/// independent rows. Falls back to the pseudo-inverse if Cholesky fails.
pub fn solve_gram(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    match gram.clone().cholesky() {
        Some(ch) => ch.solve(rhs),
        None => sym_psd_pinv(gram) * rhs,
    }
}

/// Orthogonal projection of `target` onto `{x : M x = b}`.
///
/// `M` must have linearly independent rows.
pub fn project_affine(target: &DVector<f64>, m: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if m.nrows() == 0 {
        return target.clone();
    }
    let gram = m * m.transpose();
    let resid = m * target - b;
    let y = solve_gram(&gram, &resid);
    target - m.transpose() * y
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()))
}

pub fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()))
}

pub fn ones(n: usize) -> DVector<f64> {
    DVector::from_element(n, 1.0)
}

pub fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[i] = 1.0;
    v
}
