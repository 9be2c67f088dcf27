//! Small dense linear-algebra helpers shared by the dynamics and
//! observables modules. All model Hamiltonians in this crate are real
//! symmetric, so the real path is the hot one.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{CrabError, Result};

/// Eigendecomposition of a real symmetric matrix with eigenvalues sorted
/// ascending and matching eigenvector columns.
pub fn eigh_sorted(h: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = h.nrows();
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Sorted eigenvalues of a real symmetric matrix.
pub fn eigvalsh_sorted(h: DMatrix<f64>) -> DVector<f64> {
    let mut v: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    DVector::from_vec(v)
}

/// Max-norm deviation from symmetry.
pub fn symmetry_residual(h: &DMatrix<f64>) -> f64 {
    let n = h.nrows();
    let mut r: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            r = r.max((h[(i, j)] - h[(j, i)]).abs());
        }
    }
    r
}

pub fn check_hermitian(h: &DMatrix<f64>, tol: f64) -> Result<()> {
    if h.nrows() != h.ncols() {
        return Err(CrabError::Internal(format!(
            "model produced a non-square matrix: {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let r = symmetry_residual(h);
    if r > tol {
        return Err(CrabError::Internal(format!(
            "model matrix is not Hermitian: max asymmetry {r:.3e} > {tol:.1e}"
        )));
    }
    Ok(())
}

/// Flip the sign of a real eigenvector so its largest-magnitude component is
/// positive; ties resolve to the first such component.
pub fn fix_phase(v: &mut DVector<f64>) {
    let mut imax = 0;
    let mut amax = 0.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > amax {
            amax = x.abs();
            imax = i;
        }
    }
    if v[imax] < 0.0 {
        v.neg_mut();
    }
}

/// |<a|b>|^2 for complex vectors.
pub fn overlap2(a: &DVector<Complex64>, b: &DVector<Complex64>) -> f64 {
    let ov: Complex64 = a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum();
    ov.norm_sqr()
}
