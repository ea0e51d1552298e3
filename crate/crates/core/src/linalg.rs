//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

/// Orthonormal `rows x cols` factor from the QR decomposition of an i.i.d.
/// standard Gaussian matrix, with column signs fixed so the triangular factor
/// has a positive diagonal. For `rows == cols` this is Haar distributed.
pub fn gaussian_orthonormal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    assert!(cols <= rows, "need cols <= rows for an orthonormal factor");
    if cols == 0 {
        return DMatrix::zeros(rows, 0);
    }
    // Column-major fill keeps the draw order independent of nalgebra internals.
    let mut g = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            g[(i, j)] = rng::standard_normal(rng);
        }
    }
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// A symmetric positive-definite matrix together with its symmetric square root.
#[derive(Debug, Clone)]
pub struct SpdWithRoot {
    pub matrix: DMatrix<f64>,
    pub root: DMatrix<f64>,
    /// Eigenvalues in descending order.
    pub eigenvalues: Vec<f64>,
}

pub fn spd_square_root(matrix: DMatrix<f64>) -> Result<SpdWithRoot> {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return Err(Error::mismatch("square matrix", format!("{}x{}", n, matrix.ncols())));
    }
    let asym = (&matrix - matrix.transpose()).norm();
    if asym > 1e-10 * matrix.norm().max(1.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "matrix is not symmetric (asymmetry {asym:.3e})"
        )));
    }
    let eig = SymmetricEigen::new(matrix.clone());
    let min = eig.eigenvalues.min();
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "smallest eigenvalue is {min:.6e}"
        )));
    }
    let sqrt_vals = eig.eigenvalues.map(f64::sqrt);
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
    let root = (&root + root.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    Ok(SpdWithRoot {
        matrix,
        root,
        eigenvalues,
    })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
