//! Thin wrappers over faer for the dense problems used here.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Side};
use num_complex::Complex64;

use crate::error::{BicError, Result};

pub type CMat = Mat<Complex64>;

/// Eigen-decomposition of a Hermitian matrix with eigenvalues ascending.
///
/// When every entry is real the real symmetric solver is used; the
/// eigenvectors are then real as well.
pub fn hermitian_eigen(h: &CMat) -> Result<(Vec<f64>, CMat)> {
    let n = h.nrows();
    let real = (0..n).all(|j| (0..n).all(|i| h[(i, j)].im == 0.0));
    if real {
        let hr = Mat::<f64>::from_fn(n, n, |i, j| h[(i, j)].re);
        let evd = hr
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| BicError::EigenNonConvergence { size: n })?;
        let values: Vec<f64> = (0..n).map(|i| evd.S().column_vector()[i]).collect();
        let vectors = CMat::from_fn(n, n, |i, j| Complex64::new(evd.U()[(i, j)], 0.0));
        Ok(sort_ascending(values, vectors))
    } else {
        let evd = h
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| BicError::EigenNonConvergence { size: n })?;
        let values: Vec<f64> = (0..n).map(|i| evd.S().column_vector()[i].re).collect();
        Ok(sort_ascending(values, evd.U().to_owned()))
    }
}

fn sort_ascending(values: Vec<f64>, vectors: CMat) -> (Vec<f64>, CMat) {
    if values.windows(2).all(|w| w[0] <= w[1]) {
        return (values, vectors);
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted = order.iter().map(|&i| values[i]).collect();
    let vecs = CMat::from_fn(vectors.nrows(), vectors.ncols(), |i, j| vectors[(i, order[j])]);
    (sorted, vecs)
}

/// Eigenvalues of a general complex matrix.
pub fn eigenvalues(m: &CMat) -> Result<Vec<Complex64>> {
    m.eigenvalues()
        .map_err(|_| BicError::EigenNonConvergence { size: m.nrows() })
}

pub fn identity(n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Largest column sum of absolute values.
pub fn norm_one(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest entry magnitude.
pub fn norm_max(m: &CMat) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            worst = worst.max(m[(i, j)].norm());
        }
    }
    worst
}

/// Solves `a·x = b`, returning the solution and the 1-norm condition estimate
/// of `a`.
pub fn solve_with_condition(a: &CMat, b: &CMat) -> (CMat, f64) {
    let lu = a.partial_piv_lu();
    let inv = lu.inverse();
    let condition = norm_one(a) * norm_one(&inv);
    (lu.solve(b), condition)
}

pub fn determinant(a: &CMat) -> Complex64 {
    a.determinant()
}

/// `max |(AᴴA − I)_ij|`.
pub fn unitarity_defect(m: &CMat) -> f64 {
    let prod = m.adjoint() * m;
    let n = prod.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((prod[(i, j)] - target).norm());
        }
    }
    worst
}
