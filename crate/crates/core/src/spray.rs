//! Geodesic sprays of 1-homogeneous functions.
//!
//! The canonical spray of `F` is the Euler-Lagrange field of `E = ½F²`. Any
//! spray `Γ + PΔ` with `P` 1-homogeneous has the same geodesics as point
//! sets; [`projective_shift`] picks the member tangent to the level sets of a
//! given function, which is how a parametrization is chosen.

use std::sync::Arc;

use nalgebra::DVector;

use crate::calculus::{jet, value, ScalarField};
use crate::error::{Error, Result};
use crate::homogenize::{FinslerModel, Iota0Level};
use crate::lagrangian::{integrate_second_order, IntegrateOptions};
use crate::linalg::{euler_lagrange_acceleration, norm};
use crate::trajectory::Trajectory;

/// Fibre components `fᵅ` of a second-order field at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct SprayCoefficients {
    pub accel: DVector<f64>,
}

/// Canonical spray of `F`: the acceleration solving the Euler-Lagrange
/// equation of `½F²`.
pub fn canonical_spray(f: &FinslerModel, x: &[f64], y: &[f64]) -> Result<SprayCoefficients> {
    let j = jet(f, x, y)?.half_square();
    Ok(SprayCoefficients {
        accel: euler_lagrange_acceleration(&j, y)?,
    })
}

/// A scalar function on the slit tangent bundle whose level sets a spray
/// can be made tangent to.
pub trait LevelFunction: Send + Sync {
    fn dim(&self) -> usize;
    /// `(ι, ∂ι/∂x, ∂ι/∂y)`.
    fn value_and_gradient(&self, x: &[f64], y: &[f64]) -> Result<(f64, DVector<f64>, DVector<f64>)>;
}

impl LevelFunction for Iota0Level {
    fn dim(&self) -> usize {
        Iota0Level::dim(self)
    }
    fn value_and_gradient(&self, x: &[f64], y: &[f64]) -> Result<(f64, DVector<f64>, DVector<f64>)> {
        Iota0Level::value_and_gradient(self, x, y)
    }
}

/// Any differentiable field used as a level function.
#[derive(Clone)]
pub struct FieldLevel(pub Arc<dyn ScalarField>);

impl LevelFunction for FieldLevel {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value_and_gradient(&self, x: &[f64], y: &[f64]) -> Result<(f64, DVector<f64>, DVector<f64>)> {
        let j = jet(self.0.as_ref(), x, y)?;
        Ok((j.value, j.d_x, j.d_y))
    }
}

pub const LEVEL_GUARD: f64 = 1e-14;

/// `Γ_E + PΔ` with `P = −Γ_E(ι)/ι`, so that `ι` is constant along the
/// shifted spray.
pub fn projective_shift(
    f: &FinslerModel,
    level: &dyn LevelFunction,
    x: &[f64],
    y: &[f64],
) -> Result<SprayCoefficients> {
    let SprayCoefficients { accel } = canonical_spray(f, x, y)?;
    let (iota, ix, iy) = level.value_and_gradient(x, y)?;
    if !(iota.abs() >= LEVEL_GUARD) {
        return Err(Error::domain(format!("level function too close to zero ({iota:e})")));
    }
    let yv = DVector::from_column_slice(y);
    let gamma = yv.dot(&ix) + accel.dot(&iy);
    let p = -gamma / iota;
    Ok(SprayCoefficients {
        accel: accel + yv * p,
    })
}

#[derive(Clone, Copy)]
pub enum Parametrization<'a> {
    /// Constant `F` along the curve.
    Canonical,
    /// Constant level function, starting on its level `1`.
    TangentTo(&'a dyn LevelFunction),
}

/// Fraction of `|y0|` below which the velocity is treated as having reached
/// the zero section.
pub const SLIT_FLOOR: f64 = 1e-10;

/// Integrates `ẋ = y, ẏ = accel` for the chosen member of the projective
/// class. The conserved quantity (`F` or the level function) is logged.
pub fn integrate_geodesic(
    f: &FinslerModel,
    x0: &[f64],
    y0: &[f64],
    t_end: f64,
    opts: &IntegrateOptions,
    parametrization: Parametrization<'_>,
) -> Result<Trajectory> {
    let n = f.dim();
    if x0.len() != n || y0.len() != n {
        return Err(Error::Dimension(format!("expected {n} coordinates")));
    }
    let ny = norm(y0);
    if !(ny > 0.0) {
        return Err(Error::domain("geodesics start from a nonzero velocity"));
    }
    let floor = SLIT_FLOOR * ny;
    let guard = |y: &[f64]| -> Result<()> {
        if norm(y) < floor {
            return Err(Error::domain("velocity collapsed onto the zero section"));
        }
        Ok(())
    };

    let mut traj = match parametrization {
        Parametrization::Canonical => {
            value(f, x0, y0)?;
            let mut t = integrate_second_order(n, x0, y0, t_end, opts, |x, y| {
                guard(y)?;
                Ok(canonical_spray(f, x, y)?.accel)
            })?;
            t.energy_log = t
                .positions
                .iter()
                .zip(&t.velocities)
                .map(|(x, y)| value(f, x, y))
                .collect::<Result<_>>()?;
            t
        }
        Parametrization::TangentTo(level) => {
            let (iota, _, _) = level.value_and_gradient(x0, y0)?;
            if !(iota > LEVEL_GUARD) {
                return Err(Error::domain(format!(
                    "level function must be positive at the start, got {iota:e}"
                )));
            }
            let y_start: Vec<f64> = y0.iter().map(|c| c / iota).collect();
            let mut t = integrate_second_order(n, x0, &y_start, t_end, opts, |x, y| {
                guard(y)?;
                Ok(projective_shift(f, level, x, y)?.accel)
            })?;
            t.energy_log = t
                .positions
                .iter()
                .zip(&t.velocities)
                .map(|(x, y)| level.value_and_gradient(x, y).map(|r| r.0))
                .collect::<Result<_>>()?;
            t
        }
    };
    traj.stats.tolerance = opts.tol;
    Ok(traj)
}
