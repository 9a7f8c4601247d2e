//! Derivatives of scalar fields on tangent-bundle charts.
//!
//! Fields are functions `(x, y) ↦ f(x, y)` on a chart of `TM` (or its slit
//! version). [`jet`] evaluates the value together with `∂f/∂x`, `∂f/∂y`,
//! `∂²f/∂y∂y` and `∂²f/∂x∂y` by forward-mode propagation; [`fd_jet`] is an
//! independent central-difference oracle over the plain `f64` evaluation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::jet::{Jet, Scalar, MAX_VARS};

/// Value and first/second partial derivatives of a field at one point.
///
/// `d_xy[(a, b)]` is `∂²f/∂xᵃ∂yᵇ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondJet {
    pub value: f64,
    pub d_x: DVector<f64>,
    pub d_y: DVector<f64>,
    pub d_yy: DMatrix<f64>,
    pub d_xy: DMatrix<f64>,
}

impl SecondJet {
    pub fn dim(&self) -> usize {
        self.d_x.len()
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.d_x.iter().all(|v| v.is_finite())
            && self.d_y.iter().all(|v| v.is_finite())
            && self.d_yy.iter().all(|v| v.is_finite())
            && self.d_xy.iter().all(|v| v.is_finite())
    }

    /// Largest componentwise difference to `other`, relative to
    /// `max(|a|, |b|, 1)`.
    pub fn max_rel_diff(&self, other: &SecondJet) -> f64 {
        fn rel(a: f64, b: f64) -> f64 {
            (a - b).abs() / a.abs().max(b.abs()).max(1.0)
        }
        let mut worst = rel(self.value, other.value);
        let pairs = [
            (self.d_x.as_slice(), other.d_x.as_slice()),
            (self.d_y.as_slice(), other.d_y.as_slice()),
            (self.d_yy.as_slice(), other.d_yy.as_slice()),
            (self.d_xy.as_slice(), other.d_xy.as_slice()),
        ];
        for (a, b) in pairs {
            for (p, q) in a.iter().zip(b) {
                worst = worst.max(rel(*p, *q));
            }
        }
        worst
    }

    /// Jet of `½ f²` from the jet of `f`.
    pub fn half_square(&self) -> SecondJet {
        let f = self.value;
        SecondJet {
            value: 0.5 * f * f,
            d_x: &self.d_x * f,
            d_y: &self.d_y * f,
            d_yy: &self.d_y * self.d_y.transpose() + &self.d_yy * f,
            d_xy: &self.d_x * self.d_y.transpose() + &self.d_xy * f,
        }
    }
}

/// A scalar field on a chart of a tangent bundle, evaluable on `f64` and on
/// jets.
pub trait ScalarField: Send + Sync {
    /// Chart dimension `n` (so `x` and `y` both have length `n`).
    fn dim(&self) -> usize;
    fn eval_f64(&self, x: &[f64], y: &[f64]) -> Result<f64>;
    fn eval_jet(&self, x: &[Jet], y: &[Jet]) -> Result<Jet>;
}

/// Fields written once over [`Scalar`]; every such type is a
/// [`ScalarField`].
pub trait GenericField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S>;
}

impl<T: GenericField> ScalarField for T {
    fn dim(&self) -> usize {
        GenericField::dim(self)
    }
    fn eval_f64(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.eval(x, y)
    }
    fn eval_jet(&self, x: &[Jet], y: &[Jet]) -> Result<Jet> {
        self.eval(x, y)
    }
}

fn check_point(field: &dyn ScalarField, x: &[f64], y: &[f64]) -> Result<usize> {
    let n = field.dim();
    if x.len() != n || y.len() != n {
        return Err(Error::Dimension(format!(
            "field has dimension {n}, got x of length {} and y of length {}",
            x.len(),
            y.len()
        )));
    }
    if 2 * n > MAX_VARS {
        return Err(Error::Dimension(format!(
            "dimension {n} exceeds the supported maximum {}",
            MAX_VARS / 2
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite coordinates"));
    }
    Ok(n)
}

/// Evaluates `field` and all partials of [`SecondJet`] at `(x, y)` by
/// second-order forward-mode differentiation.
pub fn jet(field: &dyn ScalarField, x: &[f64], y: &[f64]) -> Result<SecondJet> {
    let n = check_point(field, x, y)?;
    let nv = 2 * n;
    let xs: Vec<Jet> = (0..n).map(|i| Jet::variable(x[i], i, nv)).collect();
    let ys: Vec<Jet> = (0..n).map(|i| Jet::variable(y[i], n + i, nv)).collect();
    let f = field.eval_jet(&xs, &ys)?;
    let out = SecondJet {
        value: f.value(),
        d_x: DVector::from_fn(n, |i, _| f.grad(i)),
        d_y: DVector::from_fn(n, |i, _| f.grad(n + i)),
        d_yy: DMatrix::from_fn(n, n, |a, b| f.hess(n + a, n + b)),
        d_xy: DMatrix::from_fn(n, n, |a, b| f.hess(a, n + b)),
    };
    if !out.is_finite() {
        return Err(Error::domain("field or its derivatives are not finite"));
    }
    Ok(out)
}

/// Plain value with the same argument checks as [`jet`].
pub fn value(field: &dyn ScalarField, x: &[f64], y: &[f64]) -> Result<f64> {
    check_point(field, x, y)?;
    let v = field.eval_f64(x, y)?;
    if !v.is_finite() {
        return Err(Error::domain("field value is not finite"));
    }
    Ok(v)
}

/// Step for first differences: `ε^(1/3)`.
pub const FD_STEP_FIRST: f64 = 6.055_454_452_393_343e-6;
/// Step for second differences: `ε^(1/4)`.
pub const FD_STEP_SECOND: f64 = 1.220_703_125e-4;

/// Central-difference approximation of the same partials as [`jet`].
///
/// With `h = None` the per-coordinate step is `ε^(1/3)·max(1, |c|)` for first
/// derivatives and `ε^(1/4)·max(1, |c|)` for second derivatives; an explicit
/// `h` is used (scaled the same way) for both.
pub fn fd_jet(field: &dyn ScalarField, x: &[f64], y: &[f64], h: Option<f64>) -> Result<SecondJet> {
    let n = check_point(field, x, y)?;
    if let Some(h) = h {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Precondition(format!("step must be positive, got {h}")));
        }
    }
    let (h1, h2) = match h {
        Some(h) => (h, h),
        None => (FD_STEP_FIRST, FD_STEP_SECOND),
    };
    let center = field.eval_f64(x, y)?;

    // Coordinates 0..n are x, n..2n are y.
    let mut p: Vec<f64> = x.iter().chain(y).copied().collect();
    let label = |k: usize| {
        if k < n {
            format!("x{}", k + 1)
        } else {
            format!("y{}", k - n + 1)
        }
    };
    let eval_at = |p: &[f64], k: usize, step: f64| -> Result<f64> {
        field.eval_f64(&p[..n], &p[n..]).map_err(|e| match e {
            Error::Domain(reason) => Error::StencilDomain {
                coordinate: label(k),
                step,
                reason,
            },
            other => other,
        })
    };
    let step = |c: f64, base: f64| base * c.abs().max(1.0);

    let mut grad = vec![0.0; 2 * n];
    for k in 0..2 * n {
        let hk = step(p[k], h1);
        let c = p[k];
        p[k] = c + hk;
        let fp = eval_at(&p, k, hk)?;
        p[k] = c - hk;
        let fm = eval_at(&p, k, hk)?;
        p[k] = c;
        grad[k] = (fp - fm) / (2.0 * hk);
    }

    let second = |i: usize, j: usize, p: &mut Vec<f64>| -> Result<f64> {
        let hi = step(p[i], h2);
        if i == j {
            let c = p[i];
            p[i] = c + hi;
            let fp = eval_at(p, i, hi)?;
            p[i] = c - hi;
            let fm = eval_at(p, i, hi)?;
            p[i] = c;
            return Ok((fp - 2.0 * center + fm) / (hi * hi));
        }
        let hj = step(p[j], h2);
        let (ci, cj) = (p[i], p[j]);
        let corner = |si: f64, sj: f64, p: &mut Vec<f64>| -> Result<f64> {
            p[i] = ci + si * hi;
            p[j] = cj + sj * hj;
            let v = eval_at(p, i, hi);
            p[i] = ci;
            p[j] = cj;
            v
        };
        let fpp = corner(1.0, 1.0, p)?;
        let fpm = corner(1.0, -1.0, p)?;
        let fmp = corner(-1.0, 1.0, p)?;
        let fmm = corner(-1.0, -1.0, p)?;
        Ok((fpp - fpm - fmp + fmm) / (4.0 * hi * hj))
    };

    let mut d_yy = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..=a {
            let v = second(n + a, n + b, &mut p)?;
            d_yy[(a, b)] = v;
            d_yy[(b, a)] = v;
        }
    }
    let mut d_xy = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            d_xy[(a, b)] = second(a, n + b, &mut p)?;
        }
    }
    Ok(SecondJet {
        value: center,
        d_x: DVector::from_fn(n, |i, _| grad[i]),
        d_y: DVector::from_fn(n, |i, _| grad[n + i]),
        d_yy,
        d_xy,
    })
}

/// Scalar field from a plain generic closure-like evaluator; handy for
/// tests and for ad-hoc fields.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

/// Evaluator usable on both `f64` and jets.
pub trait FieldFn: Send + Sync {
    fn call<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S>;
}

impl<F: FieldFn> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f }
    }
}

impl<F: FieldFn> GenericField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S> {
        self.f.call(x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    struct HalfNormSq;
    impl FieldFn for HalfNormSq {
        fn call<S: Scalar>(&self, _x: &[S], y: &[S]) -> Result<S> {
            Ok((y[0] * y[0] + y[1] * y[1]) * 0.5)
        }
    }

    struct SlitField;
    impl GenericField for SlitField {
        fn dim(&self) -> usize {
            1
        }
        fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S> {
            if y[0].re() <= 0.0 {
                return Err(Error::domain("y0 <= 0"));
            }
            Ok(y[0] * (x[0] / y[0]).sin())
        }
    }

    #[test]
    fn quadratic_jet_is_exact() {
        let f = FnField::new(2, HalfNormSq);
        let j = jet(&f, &[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert_eq!(j.value, 12.5);
        assert_eq!(j.d_y.as_slice(), &[3.0, 4.0]);
        assert_eq!(j.d_yy, DMatrix::identity(2, 2));
        assert!(j.d_x.iter().all(|v| *v == 0.0));
        assert!(j.d_xy.iter().all(|v| *v == 0.0));
        let fd = fd_jet(&f, &[0.0, 0.0], &[3.0, 4.0], None).unwrap();
        for (a, b) in j.d_yy.iter().zip(fd.d_yy.iter()) {
            assert!((a - b).abs() <= 1e-9);
        }
        for (a, b) in j.d_y.iter().zip(fd.d_y.iter()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn stencil_leaving_slit_domain() {
        let f = SlitField;
        let h = FD_STEP_FIRST;
        let err = fd_jet(&f, &[0.3], &[h / 2.0], None).unwrap_err();
        assert!(matches!(err, Error::StencilDomain { .. }), "{err:?}");
        // The center itself is fine for the jet.
        assert!(jet(&f, &[0.3], &[h / 2.0]).is_ok());
        assert!(matches!(jet(&f, &[0.3], &[-1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn fd_matches_jet_on_nonlinear_field() {
        let f = SlitField;
        let j = jet(&f, &[0.4], &[1.3]).unwrap();
        let fd = fd_jet(&f, &[0.4], &[1.3], None).unwrap();
        assert!(j.max_rel_diff(&fd) < 1e-7, "{}", j.max_rel_diff(&fd));
    }

    #[test]
    fn half_square_matches_direct() {
        struct Sq;
        impl GenericField for Sq {
            fn dim(&self) -> usize {
                1
            }
            fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S> {
                let f = y[0] * (x[0] / y[0]).sin();
                Ok(f * f * 0.5)
            }
        }
        let a = jet(&SlitField, &[0.4], &[1.3]).unwrap().half_square();
        let b = jet(&Sq, &[0.4], &[1.3]).unwrap();
        assert_relative_eq!(a.value, b.value, epsilon = 1e-15);
        assert_relative_eq!(a.d_yy[(0, 0)], b.d_yy[(0, 0)], epsilon = 1e-14);
        assert_relative_eq!(a.d_xy[(0, 0)], b.d_xy[(0, 0)], epsilon = 1e-14);
    }

    #[test]
    fn rejects_wrong_lengths() {
        let f = FnField::new(2, HalfNormSq);
        assert!(matches!(jet(&f, &[0.0], &[1.0, 2.0]), Err(Error::Dimension(_))));
    }
}
