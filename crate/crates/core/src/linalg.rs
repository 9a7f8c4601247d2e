use nalgebra::{DMatrix, DVector};

use crate::calculus::SecondJet;
use crate::error::{Error, Result};

/// Solves `h·a = rhs` for a (nominally positive-definite) symmetric `h`:
/// Cholesky first, then LU with partial pivoting.
pub fn solve_symmetric(h: &DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        let a = ch.solve(&rhs);
        if a.iter().all(|v| v.is_finite()) {
            return Ok(a);
        }
    }
    let scale = h.amax();
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::SingularHessian);
    }
    let lu = h.clone().lu();
    let u = lu.u();
    let min_pivot = u.diagonal().iter().fold(f64::INFINITY, |m, p| m.min(p.abs()));
    if min_pivot <= 1e-14 * scale {
        return Err(Error::SingularHessian);
    }
    match lu.solve(&rhs) {
        Some(a) if a.iter().all(|v| v.is_finite()) => Ok(a),
        _ => Err(Error::SingularHessian),
    }
}

/// Fibre part of the second-order field defined by the Euler-Lagrange
/// equations of the field whose jet is `j`, at velocity `y`:
/// `(∂²f/∂y∂y)·a = ∂f/∂x − (∂²f/∂x∂y)ᵀ·y`.
pub fn euler_lagrange_acceleration(j: &SecondJet, y: &[f64]) -> Result<DVector<f64>> {
    let yv = DVector::from_column_slice(y);
    let rhs = &j.d_x - j.d_xy.transpose() * yv;
    solve_symmetric(&j.d_yy, rhs)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(h: &DMatrix<f64>) -> f64 {
    if h.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (h + h.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(*v))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}
