//! Second-order forward-mode automatic differentiation.
//!
//! A [`Jet`] carries a value together with its gradient and (packed,
//! symmetric) Hessian with respect to up to [`MAX_VARS`] seed variables.
//! Every Hessian entry `(i, j)` of a result depends only on the `(i, j)`
//! entries and the gradients of the operands, so a single forward pass
//! yields the full second-order information.
//!
//! Field code is written once against the [`Scalar`] trait and evaluated
//! either on plain `f64` or on `Jet`.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::calculus::ScalarField;
use crate::error::Result;

/// Maximum number of seed variables a jet can track.
pub const MAX_VARS: usize = 16;
const PACKED: usize = MAX_VARS * (MAX_VARS + 1) / 2;

#[inline(always)]
fn packed_index(i: usize, j: usize) -> usize {
    let (i, j) = if i >= j { (i, j) } else { (j, i) };
    i * (i + 1) / 2 + j
}

/// Truncated second-order multivariate Taylor number.
///
/// Entries beyond `nvars` are always zero, so jets with different variable
/// counts combine correctly (constants have `nvars == 0`).
#[derive(Clone, Copy)]
pub struct Jet {
    nvars: usize,
    value: f64,
    grad: [f64; MAX_VARS],
    hess: [f64; PACKED],
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("value", &self.value)
            .field("grad", &&self.grad[..self.nvars])
            .finish()
    }
}

impl Jet {
    pub fn constant(value: f64) -> Self {
        Jet {
            nvars: 0,
            value,
            grad: [0.0; MAX_VARS],
            hess: [0.0; PACKED],
        }
    }

    /// Seed variable `index` out of `nvars` at `value`.
    ///
    /// # Panics
    /// If `nvars > MAX_VARS` or `index >= nvars`.
    pub fn variable(value: f64, index: usize, nvars: usize) -> Self {
        assert!(nvars <= MAX_VARS, "jet supports at most {MAX_VARS} variables");
        assert!(index < nvars);
        let mut j = Jet::constant(value);
        j.nvars = nvars;
        j.grad[index] = 1.0;
        j
    }

    /// Seeds `values` as consecutive variables `0..values.len()`.
    pub fn seed(values: &[f64]) -> Vec<Jet> {
        let n = values.len();
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| Jet::variable(v, i, n))
            .collect()
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.value
    }

    #[inline]
    pub fn nvars(&self) -> usize {
        self.nvars
    }

    #[inline]
    pub fn grad(&self, i: usize) -> f64 {
        self.grad[i]
    }

    #[inline]
    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.hess[packed_index(i, j)]
    }

    #[inline]
    fn hess_len(n: usize) -> usize {
        n * (n + 1) / 2
    }

    /// Applies a scalar function given its value and first two derivatives
    /// at `self.value`.
    #[inline]
    fn chain(&self, f0: f64, f1: f64, f2: f64) -> Jet {
        let n = self.nvars;
        let mut out = Jet::constant(f0);
        out.nvars = n;
        for i in 0..n {
            out.grad[i] = f1 * self.grad[i];
        }
        let mut k = 0;
        for i in 0..n {
            let gi = self.grad[i];
            for j in 0..=i {
                out.hess[k] = f1 * self.hess[k] + f2 * gi * self.grad[j];
                k += 1;
            }
        }
        out
    }

    #[inline]
    fn scale(&self, c: f64) -> Jet {
        let n = self.nvars;
        let mut out = *self;
        out.value *= c;
        for g in &mut out.grad[..n] {
            *g *= c;
        }
        for h in &mut out.hess[..Self::hess_len(n)] {
            *h *= c;
        }
        out
    }

    pub fn recip(&self) -> Jet {
        let r = 1.0 / self.value;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }
}

impl Add for Jet {
    type Output = Jet;
    #[inline]
    fn add(self, rhs: Jet) -> Jet {
        let n = self.nvars.max(rhs.nvars);
        let mut out = self;
        out.nvars = n;
        out.value += rhs.value;
        for i in 0..n {
            out.grad[i] += rhs.grad[i];
        }
        for k in 0..Jet::hess_len(n) {
            out.hess[k] += rhs.hess[k];
        }
        out
    }
}

impl Sub for Jet {
    type Output = Jet;
    #[inline]
    fn sub(self, rhs: Jet) -> Jet {
        let n = self.nvars.max(rhs.nvars);
        let mut out = self;
        out.nvars = n;
        out.value -= rhs.value;
        for i in 0..n {
            out.grad[i] -= rhs.grad[i];
        }
        for k in 0..Jet::hess_len(n) {
            out.hess[k] -= rhs.hess[k];
        }
        out
    }
}

impl Mul for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, rhs: Jet) -> Jet {
        if rhs.nvars == 0 {
            return self.scale(rhs.value);
        }
        if self.nvars == 0 {
            return rhs.scale(self.value);
        }
        let n = self.nvars.max(rhs.nvars);
        let (a, b) = (self.value, rhs.value);
        let mut out = Jet::constant(a * b);
        out.nvars = n;
        for i in 0..n {
            out.grad[i] = a * rhs.grad[i] + b * self.grad[i];
        }
        let mut k = 0;
        for i in 0..n {
            let (ai, bi) = (self.grad[i], rhs.grad[i]);
            for j in 0..=i {
                out.hess[k] = a * rhs.hess[k]
                    + b * self.hess[k]
                    + ai * rhs.grad[j]
                    + self.grad[j] * bi;
                k += 1;
            }
        }
        out
    }
}

impl Div for Jet {
    type Output = Jet;
    #[inline]
    fn div(self, rhs: Jet) -> Jet {
        if rhs.nvars == 0 {
            return self.scale(1.0 / rhs.value);
        }
        self * rhs.recip()
    }
}

impl Neg for Jet {
    type Output = Jet;
    #[inline]
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn add(mut self, rhs: f64) -> Jet {
        self.value += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn sub(mut self, rhs: f64) -> Jet {
        self.value -= rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn div(self, rhs: f64) -> Jet {
        self.scale(1.0 / rhs)
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, rhs: Jet) {
        *self = *self + rhs;
    }
}

impl SubAssign for Jet {
    fn sub_assign(&mut self, rhs: Jet) {
        *self = *self - rhs;
    }
}

impl MulAssign for Jet {
    fn mul_assign(&mut self, rhs: Jet) {
        *self = *self * rhs;
    }
}

/// Arithmetic shared by `f64` and [`Jet`], so a field is written once and
/// evaluated in either mode.
pub trait Scalar:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn cst(v: f64) -> Self;
    fn re(&self) -> f64;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn powi(self, k: i32) -> Self;
    fn powf(self, p: f64) -> Self;

    /// Evaluates a dynamically typed field in this scalar mode.
    fn eval_field(field: &dyn ScalarField, x: &[Self], y: &[Self]) -> Result<Self>;

    /// First-order chain rule through an implicitly defined quantity:
    /// `base + Σ slopes[k] · (inputs[k] − inputs[k].re())`.
    ///
    /// The result has the correct value and first derivatives; its second
    /// derivatives omit the curvature of the implicit map. Only use it where
    /// the caller is stationary in that quantity.
    fn linearize(base: f64, slopes: &[f64], inputs: &[Self]) -> Self {
        let mut acc = Self::cst(base);
        for (s, x) in slopes.iter().zip(inputs) {
            if *s != 0.0 {
                acc += (*x - x.re()) * *s;
            }
        }
        acc
    }
}

impl Scalar for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn re(&self) -> f64 {
        *self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn powi(self, k: i32) -> Self {
        f64::powi(self, k)
    }
    #[inline]
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    #[inline]
    fn linearize(base: f64, _slopes: &[f64], _inputs: &[Self]) -> Self {
        base
    }
    fn eval_field(field: &dyn ScalarField, x: &[Self], y: &[Self]) -> Result<Self> {
        field.eval_f64(x, y)
    }
}

impl Scalar for Jet {
    #[inline]
    fn cst(v: f64) -> Self {
        Jet::constant(v)
    }
    #[inline]
    fn re(&self) -> f64 {
        self.value
    }
    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.value))
    }
    fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e, e)
    }
    fn ln(self) -> Self {
        let r = 1.0 / self.value;
        self.chain(self.value.ln(), r, -r * r)
    }
    fn sin(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s, -c)
    }
    fn powi(self, k: i32) -> Self {
        match k {
            0 => Jet::constant(1.0),
            1 => self,
            2 => self * self,
            _ => {
                let x = self.value;
                let kf = k as f64;
                self.chain(
                    x.powi(k),
                    kf * x.powi(k - 1),
                    kf * (kf - 1.0) * x.powi(k - 2),
                )
            }
        }
    }
    fn eval_field(field: &dyn ScalarField, x: &[Self], y: &[Self]) -> Result<Self> {
        field.eval_jet(x, y)
    }
    fn powf(self, p: f64) -> Self {
        let x = self.value;
        self.chain(x.powf(p), p * x.powf(p - 1.0), p * (p - 1.0) * x.powf(p - 2.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn product_rule_second_order() {
        let v = Jet::seed(&[2.0, 3.0]);
        // f = x^2 y
        let f = v[0] * v[0] * v[1];
        assert_eq!(f.value(), 12.0);
        assert_eq!(f.grad(0), 12.0);
        assert_eq!(f.grad(1), 4.0);
        assert_eq!(f.hess(0, 0), 6.0);
        assert_eq!(f.hess(0, 1), 4.0);
        assert_eq!(f.hess(1, 0), 4.0);
        assert_eq!(f.hess(1, 1), 0.0);
    }

    #[test]
    fn quotient_and_sqrt() {
        let v = Jet::seed(&[3.0, 4.0]);
        let r = (v[0] * v[0] + v[1] * v[1]).sqrt();
        assert_relative_eq!(r.value(), 5.0);
        assert_relative_eq!(r.grad(0), 0.6);
        // d2 r / dx dy = -xy / r^3
        assert_relative_eq!(r.hess(0, 1), -12.0 / 125.0, epsilon = 1e-15);
        let q = v[0] / v[1];
        assert_relative_eq!(q.hess(1, 1), 2.0 * 3.0 / 64.0, epsilon = 1e-15);
    }

    #[test]
    fn transcendental_chain() {
        let x = Jet::variable(0.7, 0, 1);
        let f = x.sin() * x.exp();
        let (s, c, e) = (0.7f64.sin(), 0.7f64.cos(), 0.7f64.exp());
        assert_relative_eq!(f.grad(0), e * (s + c), epsilon = 1e-14);
        assert_relative_eq!(f.hess(0, 0), 2.0 * e * c, epsilon = 1e-14);
        let g = x.powf(2.5);
        assert_relative_eq!(g.hess(0, 0), 2.5 * 1.5 * 0.7f64.powf(0.5), epsilon = 1e-14);
        let h = x.powi(5);
        assert_relative_eq!(h.hess(0, 0), 20.0 * 0.7f64.powi(3), epsilon = 1e-14);
    }

    #[test]
    fn constants_mix_with_variables() {
        let x = Jet::variable(1.5, 1, 3);
        let c = Jet::constant(2.0);
        let f = c * x + c;
        assert_eq!(f.nvars(), 3);
        assert_eq!(f.grad(1), 2.0);
        assert_eq!(f.grad(0), 0.0);
    }
}
