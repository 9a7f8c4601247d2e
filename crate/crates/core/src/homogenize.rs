//! The homogenization trick and the Jacobi–Finsler function `Fₑ`.
//!
//! An autonomous Lagrangian `L` on `Q` becomes the 1-homogeneous function
//! `F(x⁰, x, y⁰, y) = y⁰ L(x, y/y⁰)` on the slit tangent bundle of `ℝ × Q`
//! (`y⁰ > 0`). The time coordinate `x⁰` is cyclic; reducing it at momentum
//! `−e` gives `Fₑ(x, y) = ι⁰ₑ (L(x, y/ι⁰ₑ) + e)`, where `ι⁰ₑ(x, y)` is the
//! positive root of `E_L(x, y/ι) = e`.
//!
//! Jets of `Fₑ` use the fact that `ι (L(x, y/ι) + e)` is stationary in `ι`
//! at the root: only the first derivatives of `ι⁰ₑ` (from the implicit
//! function theorem) enter, so `L`'s own second-order jet suffices.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calculus::{jet, GenericField, ScalarField, SecondJet};
use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::jet::{Jet, Scalar, MAX_VARS};
use crate::lagrangian::{energy_from_jet, LagrangianModel, MechanicalData};
use crate::linalg::{dot, norm};
use crate::report::VerificationReport;
use crate::sampling::{unit_vector, SampleRng};

pub const IOTA_MAX_ITERS: usize = 200;

/// `F(x⁰, x, y⁰, y) = y⁰ L(x, y/y⁰)` on `y⁰ > 0`; coordinate 0 is time.
#[derive(Clone)]
pub struct HomogenizedField {
    base: LagrangianModel,
}

impl fmt::Debug for HomogenizedField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HomogenizedField").field("base", &self.base).finish()
    }
}

impl HomogenizedField {
    pub fn base(&self) -> &LagrangianModel {
        &self.base
    }
}

impl GenericField for HomogenizedField {
    fn dim(&self) -> usize {
        self.base.dim() + 1
    }

    fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S> {
        let y0 = y[0];
        if !(y0.re() > 0.0) {
            return Err(Error::domain("homogenized field needs y⁰ > 0"));
        }
        let v: Vec<S> = y[1..].iter().map(|&c| c / y0).collect();
        Ok(S::eval_field(&self.base, &x[1..], &v)? * y0)
    }
}

/// Builds `F = y⁰ L(x, y/y⁰)`.
pub fn homogenize(l: &LagrangianModel) -> Result<HomogenizedField> {
    if 2 * (l.dim() + 1) > MAX_VARS {
        return Err(Error::Dimension(format!(
            "homogenizing a {}-dimensional Lagrangian exceeds the jet capacity",
            l.dim()
        )));
    }
    Ok(HomogenizedField { base: l.clone() })
}

/// Positive root `ι⁰ₑ` of `E_L(x, y/ι) = e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySolveResult {
    pub iota0: f64,
    pub newton_iters: usize,
    pub residual: f64,
}

struct RootState {
    result: EnergySolveResult,
    /// Jet of `L` at `(x, y/ι⁰ₑ)`.
    jet: SecondJet,
}

/// `g(s) = E_L(x, y/s) − e` with `g'(s) = −(1/s) uᵀ(∂²L/∂v∂v)u`, `u = y/s`.
fn energy_gap(l: &LagrangianModel, e: f64, x: &[f64], y: &[f64], s: f64) -> Result<(f64, f64, SecondJet)> {
    let u: Vec<f64> = y.iter().map(|c| c / s).collect();
    let j = l.jet(x, &u)?;
    let gap = energy_from_jet(&j, &u) - e;
    let uv = DVector::from_column_slice(&u);
    let curv = uv.dot(&(&j.d_yy * &uv));
    Ok((gap, -curv / s, j))
}

fn solve_iota0_state(
    l: &LagrangianModel,
    e: f64,
    x: &[f64],
    y: &[f64],
    hint: Option<f64>,
) -> Result<RootState> {
    let st = bracket_root(l, e, x, y, hint)?;
    // A root where the kinetic part is below the energy resolution is an
    // artefact of rounding at the infimum of E_L along the ray.
    let u: Vec<f64> = y.iter().map(|c| c / st.result.iota0).collect();
    let uv = DVector::from_column_slice(&u);
    let q = uv.dot(&(&st.jet.d_yy * &uv));
    if !(q > 1e-12 * (1.0 + e.abs())) {
        return Err(Error::EnergyUnreachable {
            energy: e,
            reason: "e is not above the infimum of E_L along the ray".into(),
        });
    }
    Ok(st)
}

fn bracket_root(
    l: &LagrangianModel,
    e: f64,
    x: &[f64],
    y: &[f64],
    hint: Option<f64>,
) -> Result<RootState> {
    if !e.is_finite() {
        return Err(Error::Precondition("energy level must be finite".into()));
    }
    let ny = norm(y);
    if !(ny > 0.0) || !ny.is_finite() {
        return Err(Error::domain("ι⁰ₑ is only defined for y ≠ 0"));
    }
    let tol = 1e-12 * (1.0 + e.abs());
    let unreachable = |reason: &str| Error::EnergyUnreachable {
        energy: e,
        reason: reason.to_string(),
    };

    let mut s = hint.filter(|h| *h > 0.0 && h.is_finite()).unwrap_or(ny);
    let (g, _, j) = energy_gap(l, e, x, y, s)?;
    if g.abs() <= tol {
        return Ok(RootState {
            result: EnergySolveResult { iota0: s, newton_iters: 0, residual: g.abs() },
            jet: j,
        });
    }

    // Bracket [lo, hi] with g(lo) > 0 > g(hi); g is decreasing in s.
    let (mut lo, mut hi);
    let (mut g_lo, mut g_hi);
    if g > 0.0 {
        lo = s;
        g_lo = g;
        let mut t = s;
        let mut found = None;
        for _ in 0..400 {
            t *= 2.0;
            if !t.is_finite() {
                break;
            }
            match energy_gap(l, e, x, y, t) {
                Ok((gt, _, _)) => {
                    if gt <= 0.0 {
                        found = Some((t, gt));
                        break;
                    }
                    if gt > g_lo * (1.0 + 1e-12) {
                        return Err(unreachable("E_L is not monotone along the ray"));
                    }
                    lo = t;
                    g_lo = gt;
                }
                Err(err) => return Err(err),
            }
        }
        let Some((t, gt)) = found else {
            return Err(unreachable("e is not above the infimum of E_L along the ray"));
        };
        hi = t;
        g_hi = gt;
    } else {
        hi = s;
        g_hi = g;
        let mut t = s;
        let mut found = None;
        for _ in 0..400 {
            t *= 0.5;
            if t == 0.0 {
                break;
            }
            match energy_gap(l, e, x, y, t) {
                Ok((gt, _, _)) => {
                    if gt >= 0.0 {
                        found = Some((t, gt));
                        break;
                    }
                    if gt < g_hi * (1.0 + 1e-12) {
                        return Err(unreachable("E_L is not monotone along the ray"));
                    }
                    hi = t;
                    g_hi = gt;
                }
                Err(err) => return Err(err),
            }
        }
        let Some((t, gt)) = found else {
            return Err(unreachable("e exceeds the supremum of E_L along the ray"));
        };
        lo = t;
        g_lo = gt;
    }
    debug_assert!(g_lo >= 0.0 && g_hi <= 0.0);

    // Safeguarded Newton inside the bracket.
    s = if g_lo.abs() < g_hi.abs() { lo } else { hi };
    let (mut g, mut dg, mut j) = energy_gap(l, e, x, y, s)?;
    for iter in 1..=IOTA_MAX_ITERS {
        if g.abs() <= tol {
            return Ok(RootState {
                result: EnergySolveResult { iota0: s, newton_iters: iter - 1, residual: g.abs() },
                jet: j,
            });
        }
        if g > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let newton = if dg < 0.0 { s - g / dg } else { f64::NAN };
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo) <= 4.0 * f64::EPSILON * hi || next == s {
            break;
        }
        s = next;
        (g, dg, j) = energy_gap(l, e, x, y, s)?;
    }
    if g.abs() <= 1e3 * tol {
        return Ok(RootState {
            result: EnergySolveResult { iota0: s, newton_iters: IOTA_MAX_ITERS, residual: g.abs() },
            jet: j,
        });
    }
    Err(Error::NoConvergence {
        iterations: IOTA_MAX_ITERS,
        residual: g.abs(),
    })
}

/// The unique `ι⁰ₑ > 0` with `E_L(x, y/ι⁰ₑ) = e`, by geometric bracketing
/// from `bracket_hint` (default `|y|`) followed by safeguarded Newton.
pub fn solve_iota0(
    l: &LagrangianModel,
    e: f64,
    x: &[f64],
    y: &[f64],
    bracket_hint: Option<f64>,
) -> Result<EnergySolveResult> {
    Ok(solve_iota0_state(l, e, x, y, bracket_hint)?.result)
}

/// `ι⁰ₑ` together with `∂ι⁰ₑ/∂x` and `∂ι⁰ₑ/∂y` from the implicit function
/// theorem applied to `E_L(x, y/ι) = e`.
fn iota_with_slopes(l: &LagrangianModel, e: f64, x: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>, SecondJet)> {
    let st = solve_iota0_state(l, e, x, y, None)?;
    let iota = st.result.iota0;
    let j = st.jet;
    let u: Vec<f64> = y.iter().map(|c| c / iota).collect();
    let uv = DVector::from_column_slice(&u);
    let hu = &j.d_yy * &uv;
    let q = uv.dot(&hu);
    if !(q > 0.0) {
        return Err(Error::SingularHessian);
    }
    let n = x.len();
    let xu = &j.d_xy * &uv;
    let mut slopes = Vec::with_capacity(2 * n);
    for i in 0..n {
        slopes.push(iota * (xu[i] - j.d_x[i]) / q);
    }
    for i in 0..n {
        slopes.push(hu[i] / q);
    }
    Ok((iota, slopes, j))
}

/// `ι⁰ₑ` as a level function: value and first derivatives only.
#[derive(Clone)]
pub struct Iota0Level {
    base: LagrangianModel,
    energy: f64,
}

impl Iota0Level {
    pub fn new(base: &LagrangianModel, energy: f64) -> Self {
        Iota0Level {
            base: base.clone(),
            energy,
        }
    }

    /// `(ι⁰ₑ, ∂ι⁰ₑ/∂x, ∂ι⁰ₑ/∂y)`.
    pub fn value_and_gradient(&self, x: &[f64], y: &[f64]) -> Result<(f64, DVector<f64>, DVector<f64>)> {
        let n = x.len();
        let (iota, slopes, _) = iota_with_slopes(&self.base, self.energy, x, y)?;
        Ok((
            iota,
            DVector::from_column_slice(&slopes[..n]),
            DVector::from_column_slice(&slopes[n..]),
        ))
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }
}

/// Where a [`FinslerModel`] came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    NumericFe { family: String, energy: f64 },
    RandersClosedForm { energy: f64 },
    KHomogeneousClosedForm { k: f64, energy: f64 },
    Ftau { tau: f64 },
    GaugeShifted { base: Box<Provenance>, gauge: String },
    Custom { name: String },
}

/// A 1-homogeneous function on the slit tangent bundle.
#[derive(Clone)]
pub struct FinslerModel {
    dim: usize,
    provenance: Provenance,
    field: Arc<dyn ScalarField>,
}

impl fmt::Debug for FinslerModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FinslerModel")
            .field("dim", &self.dim)
            .field("provenance", &self.provenance)
            .finish()
    }
}

impl ScalarField for FinslerModel {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval_f64(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.field.eval_f64(x, y)
    }
    fn eval_jet(&self, x: &[Jet], y: &[Jet]) -> Result<Jet> {
        self.field.eval_jet(x, y)
    }
}

impl FinslerModel {
    pub fn from_field(provenance: Provenance, field: Arc<dyn ScalarField>) -> Self {
        FinslerModel {
            dim: field.dim(),
            provenance,
            field,
        }
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        crate::calculus::value(self, x, y)
    }

    pub fn jet(&self, x: &[f64], y: &[f64]) -> Result<SecondJet> {
        jet(self, x, y)
    }
}

struct JacobiFinslerField {
    base: LagrangianModel,
    energy: f64,
}

impl GenericField for JacobiFinslerField {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S> {
        let xr: Vec<f64> = x.iter().map(Scalar::re).collect();
        let yr: Vec<f64> = y.iter().map(Scalar::re).collect();
        let (iota, slopes, _) = iota_with_slopes(&self.base, self.energy, &xr, &yr)?;
        let inputs: Vec<S> = x.iter().chain(y).copied().collect();
        let iota_s = S::linearize(iota, &slopes, &inputs);
        let u: Vec<S> = y.iter().map(|&c| c / iota_s).collect();
        Ok(iota_s * (S::eval_field(&self.base, x, &u)? + self.energy))
    }
}

/// `Fₑ(x, y) = ι⁰ₑ(x, y) (L(x, y/ι⁰ₑ) + e)`, evaluated numerically.
pub fn jacobi_finsler(l: &LagrangianModel, e: f64) -> Result<FinslerModel> {
    if !e.is_finite() {
        return Err(Error::Precondition("energy level must be finite".into()));
    }
    Ok(FinslerModel {
        dim: l.dim(),
        provenance: Provenance::NumericFe {
            family: l.family().name().to_string(),
            energy: e,
        },
        field: Arc::new(JacobiFinslerField {
            base: l.clone(),
            energy: e,
        }),
    })
}

struct RandersField {
    data: MechanicalData,
    energy: f64,
}

impl GenericField for RandersField {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S> {
        let n = self.data.dim();
        let g = self.data.metric_at(x)?;
        let pot = self.data.potential_at(x)?;
        let c = -pot + self.energy;
        if !(c.re() > 0.0) {
            return Err(Error::domain("Randers form needs e > V(x)"));
        }
        let mut quad = S::cst(0.0);
        for i in 0..n {
            let mut row = g[i * n + i] * y[i];
            for j in 0..i {
                row += g[i * n + j] * y[j] * 2.0;
            }
            quad += row * y[i];
        }
        if !(quad.re() > 0.0) {
            return Err(Error::domain("Randers form is defined for y ≠ 0"));
        }
        let mut out = (c * quad * 2.0).sqrt();
        if self.data.has_one_form() {
            let b = self.data.one_form_at(x)?;
            for i in 0..n {
                out += b[i] * y[i];
            }
        }
        Ok(out)
    }
}

/// `Fₑ = √(g̃ᵢⱼyⁱyʲ) + βᵢyⁱ` with the Jacobi metric `g̃ = 2(e − V)g`.
pub fn randers_closed_form(data: &MechanicalData, e: f64) -> FinslerModel {
    FinslerModel {
        dim: data.dim(),
        provenance: Provenance::RandersClosedForm { energy: e },
        field: Arc::new(RandersField {
            data: data.clone(),
            energy: e,
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalCriterion {
    pub is_global: bool,
    /// `e − max(½gⁱʲβᵢβⱼ + V)` over the sampled points.
    pub margin: f64,
    pub worst_point: Vec<f64>,
}

/// Checks `e > ½gⁱʲβᵢβⱼ + V` at every sampled point.
pub fn randers_global_criterion(data: &MechanicalData, e: f64, samples: &[Vec<f64>]) -> Result<GlobalCriterion> {
    if samples.is_empty() {
        return Err(Error::Precondition("no sample points".into()));
    }
    let mut worst = f64::NEG_INFINITY;
    let mut worst_point = samples[0].clone();
    for x in samples {
        let h = 0.5 * data.one_form_norm_sq(x)? + data.potential_at(x)?;
        if h > worst {
            worst = h;
            worst_point = x.clone();
        }
    }
    let margin = e - worst;
    Ok(GlobalCriterion {
        is_global: margin > 0.0,
        margin,
        worst_point,
    })
}

struct KHomogeneousField {
    base: LagrangianModel,
    k: f64,
    energy: f64,
}

impl GenericField for KHomogeneousField {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S> {
        let l = S::eval_field(&self.base, x, y)?;
        if !(l.re() > 0.0) {
            return Err(Error::domain("k-homogeneous closed form needs L > 0"));
        }
        let k = self.k;
        let c = k * ((k - 1.0) / self.energy).powf((1.0 - k) / k);
        Ok(l.powf(1.0 / k) * c)
    }
}

/// `Fₑ = k((k−1)/e)^((1−k)/k) L^(1/k)` for a positive `k`-homogeneous `L`.
pub fn k_homogeneous_closed_form(l: &LagrangianModel, k: f64, e: f64) -> Result<FinslerModel> {
    if !(k >= 2.0) || !(e > 0.0) {
        return Err(Error::Precondition("closed form needs k ≥ 2 and e > 0".into()));
    }
    Ok(FinslerModel {
        dim: l.dim(),
        provenance: Provenance::KHomogeneousClosedForm { k, energy: e },
        field: Arc::new(KHomogeneousField {
            base: l.clone(),
            k,
            energy: e,
        }),
    })
}

struct FtauField {
    tau: f64,
    radius_sq: f64,
}

impl GenericField for FtauField {
    fn dim(&self) -> usize {
        2
    }
    fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S> {
        let r2 = x[0] * x[0] + x[1] * x[1];
        if !(r2.re() < self.radius_sq) {
            return Err(Error::domain("F_τ is Finsler only for |x|² < min(1, τ⁻²)"));
        }
        let ny2 = y[0] * y[0] + y[1] * y[1];
        if !(ny2.re() > 0.0) {
            return Err(Error::domain("F_τ is defined for y ≠ 0"));
        }
        let num = ny2.sqrt() + (x[1] * y[0] - x[0] * y[1]) * self.tau;
        Ok(num / ((-r2 + 1.0) * 2.0))
    }
}

/// `F_τ(x, y) = (|y| + τ(x₂y₁ − x₁y₂)) / (2(1 − |x|²))` on the disk of
/// radius `min(1, 1/τ)`; `τ = 1/√e` for the Poincaré magnetic Lagrangian.
pub fn ftau(tau: f64) -> Result<FinslerModel> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::Precondition(format!("τ must be finite and ≥ 0, got {tau}")));
    }
    let radius_sq = if tau > 1.0 { 1.0 / (tau * tau) } else { 1.0 };
    Ok(FinslerModel {
        dim: 2,
        provenance: Provenance::Ftau { tau },
        field: Arc::new(FtauField { tau, radius_sq }),
    })
}

/// A function `f(x)` used to add the total derivative `(∂f/∂xⁱ)yⁱ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeFunction {
    expr: Expr,
    gradient: Vec<Expr>,
}

impl GaugeFunction {
    pub fn new(dim: usize, expr: Expr) -> Result<Self> {
        expr.check_arity(dim)?;
        if expr.depends_on_velocity() {
            return Err(Error::Precondition("gauge functions depend on x only".into()));
        }
        let gradient = (0..dim).map(|i| expr.diff(Var::X(i))).collect();
        Ok(GaugeFunction { expr, gradient })
    }

    pub fn parse(dim: usize, text: &str) -> Result<Self> {
        GaugeFunction::new(dim, Expr::parse(text)?)
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn negated(&self) -> GaugeFunction {
        let expr = Expr::Neg(Box::new(self.expr.clone()));
        GaugeFunction::new(self.gradient.len(), expr).expect("same dimension")
    }

    pub fn gradient<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        self.gradient.iter().map(|g| g.eval(x, &[] as &[S])).collect()
    }
}

struct GaugeShiftField {
    base: FinslerModel,
    gauge: GaugeFunction,
}

impl GenericField for GaugeShiftField {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S> {
        let mut out = S::eval_field(&self.base, x, y)?;
        for (g, yi) in self.gauge.gradient(x)?.into_iter().zip(y) {
            out += g * *yi;
        }
        Ok(out)
    }
}

/// `F + (∂f/∂xⁱ)yⁱ`.
pub fn gauge_shift(f: &FinslerModel, gauge: &GaugeFunction) -> Result<FinslerModel> {
    if gauge.gradient.len() != f.dim() {
        return Err(Error::Dimension("gauge function dimension mismatch".into()));
    }
    Ok(FinslerModel {
        dim: f.dim(),
        provenance: Provenance::GaugeShifted {
            base: Box::new(f.provenance.clone()),
            gauge: gauge.expr.to_string(),
        },
        field: Arc::new(GaugeShiftField {
            base: f.clone(),
            gauge: gauge.clone(),
        }),
    })
}

/// Tolerances used by [`quasi_definite_check`], relative to the largest
/// Hessian entry.
pub const QUASI_DEFINITE_FLOOR: f64 = -1e-12;
pub const KERNEL_TOL: f64 = 1e-10;

/// Orthonormal basis of the complement of `y`.
fn complement_basis(y: &[f64]) -> DMatrix<f64> {
    let n = y.len();
    let mut m = DMatrix::zeros(n, n);
    let yn = norm(y);
    for i in 0..n {
        m[(i, 0)] = y[i] / yn;
    }
    // Fill with identity columns, then orthonormalize (Gram-Schmidt).
    let mut cols: Vec<DVector<f64>> = vec![m.column(0).into_owned()];
    for e in 0..n {
        if cols.len() == n {
            break;
        }
        let mut v = DVector::zeros(n);
        v[e] = 1.0;
        for c in &cols {
            let p = c.dot(&v);
            v -= c * p;
        }
        for c in &cols {
            let p = c.dot(&v);
            v -= c * p;
        }
        let vn = v.norm();
        if vn > 1e-8 {
            cols.push(v / vn);
        }
    }
    DMatrix::from_columns(&cols[1..].iter().map(|c| c.clone()).collect::<Vec<_>>())
}

/// Samples the fibre Hessian `h = ∂²F/∂y∂y` at `(x, y)`: `wᵀhw ≥ 0` for
/// random `w`, `h·y = 0`, and `h` positive-definite on the complement of `y`.
pub fn quasi_definite_check(
    f: &dyn ScalarField,
    x: &[f64],
    y: &[f64],
    samples: usize,
    rng: &mut SampleRng,
) -> Result<VerificationReport> {
    let j = jet(f, x, y)?;
    let h = &j.d_yy;
    let n = y.len();
    let scale = h.amax().max(f64::MIN_POSITIVE);
    let mut report = VerificationReport::new("quasi_definite");

    let yv = DVector::from_column_slice(y);
    let kernel = (h * &yv).amax() / (scale * yv.amax());
    report.at_most("kernel_residual", kernel, KERNEL_TOL);

    let mut min_form = f64::INFINITY;
    let mut min_transverse = f64::INFINITY;
    let yhat: Vec<f64> = y.iter().map(|c| c / norm(y)).collect();
    for _ in 0..samples {
        let w = unit_vector(rng, n);
        let wv = DVector::from_column_slice(&w);
        let q = wv.dot(&(h * &wv)) / scale;
        min_form = min_form.min(q);
        let c = dot(&w, &yhat);
        let perp2 = (1.0 - c * c).max(0.0);
        // angle > 1e-6 from ±y
        if perp2.sqrt() > 1e-6 {
            min_transverse = min_transverse.min(q / perp2);
        }
    }
    report.at_least("min_quadratic_form", min_form, QUASI_DEFINITE_FLOOR);
    if n > 1 {
        let b = complement_basis(y);
        let restricted = b.transpose() * h * &b;
        let lam = crate::linalg::min_eigenvalue(&restricted) / scale;
        report.at_least("transverse_min_eigenvalue", lam, 1e-12);
        if min_transverse.is_finite() {
            report.at_least("min_transverse_quadratic_form", min_transverse, 1e-12);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::fd_jet;
    use crate::lagrangian::{energy, parse_lagrangian};
    use crate::sampling::{in_ball, in_box, nonzero, rng};
    use approx::assert_relative_eq;

    fn free(n: usize) -> LagrangianModel {
        LagrangianModel::simple_mechanical(MechanicalData::flat(n, Expr::Num(0.0)).unwrap()).unwrap()
    }

    #[test]
    fn homogenized_examples() {
        let l = free(2);
        let f = homogenize(&l).unwrap();
        let v = crate::calculus::value(&f, &[0.0, 0.0, 0.0], &[2.0, 2.0, 0.0]).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-15);
        assert!(matches!(
            crate::calculus::value(&f, &[0.0, 0.0, 0.0], &[0.0, 1.0, 0.0]),
            Err(Error::Domain(_))
        ));

        let l = parse_lagrangian(2, "0.5*(1+x1^2)*v1^2 + 0.5*v2^2 + x2*v1 - cos(x1)").unwrap();
        let f = homogenize(&l).unwrap();
        let (x, v) = ([0.3, -0.4], [0.7, 1.1]);
        let jf = jet(&f, &[5.0, x[0], x[1]], &[1.0, v[0], v[1]]).unwrap();
        assert_relative_eq!(jf.d_y[0], -energy(&l, &x, &v).unwrap(), epsilon = 1e-13);
        assert_relative_eq!(jf.value, l.value(&x, &v).unwrap(), epsilon = 0.0);
        let jl = l.jet(&x, &v).unwrap();
        assert_relative_eq!(jf.d_y[1], jl.d_y[0], epsilon = 1e-14);
        assert!(jf.d_x[0].abs() == 0.0);
    }

    #[test]
    fn iota_examples() {
        let l = free(2);
        let r = solve_iota0(&l, 2.0, &[0.0, 0.0], &[2.0, 0.0], None).unwrap();
        assert_relative_eq!(r.iota0, 1.0, epsilon = 1e-12);

        let pot = LagrangianModel::simple_mechanical(MechanicalData::flat(2, Expr::parse("x1").unwrap()).unwrap()).unwrap();
        assert!(matches!(
            solve_iota0(&pot, 0.5, &[1.0, 0.0], &[1.0, 0.0], None),
            Err(Error::EnergyUnreachable { .. })
        ));
        assert!(matches!(
            solve_iota0(&pot, 0.5, &[1.0, 0.0], &[0.0, 0.0], None),
            Err(Error::Domain(_))
        ));
        // e exactly at the potential: only reached in the limit y/s → 0.
        assert!(matches!(
            solve_iota0(&pot, 0.5, &[0.5, 0.0], &[1.0, 0.0], None),
            Err(Error::EnergyUnreachable { .. })
        ));
    }

    #[test]
    fn iota_matches_magnetic_closed_form() {
        let data = MechanicalData::parse(2, &["1 + x1^2", "0.2*x2", "0.2*x2", "2"], Some(&["x2", "-x1"]), "0.5*x1^2").unwrap();
        let l = LagrangianModel::magnetic(data.clone());
        let e = 3.0;
        let mut r = rng(11);
        for _ in 0..200 {
            let x = in_ball(&mut r, 2, 1.0);
            let y = nonzero(&mut r, 2, 0.1, 3.0);
            let got = solve_iota0(&l, e, &x, &y, None).unwrap();
            let g = data.metric_at(&x).unwrap();
            let gyy = g[0] * y[0] * y[0] + 2.0 * g[1] * y[0] * y[1] + g[3] * y[1] * y[1];
            let pot = 0.5 * x[0] * x[0];
            let expect = (gyy / (2.0 * (e - pot))).sqrt();
            assert_relative_eq!(got.iota0, expect, max_relative = 1e-10);
            assert!(got.residual <= 1e-12 * (1.0 + e));
        }
    }

    #[test]
    fn numeric_fe_matches_closed_forms() {
        let l = free(2);
        let fe = jacobi_finsler(&l, 0.5).unwrap();
        let mut r = rng(5);
        for _ in 0..50 {
            let x = in_box(&mut r, 2, 2.0);
            let y = nonzero(&mut r, 2, 0.1, 4.0);
            assert_relative_eq!(fe.value(&x, &y).unwrap(), norm(&y), max_relative = 1e-10);
        }

        let cubic = parse_lagrangian(2, "(v1^2 + v2^2 + 0.5*v1*v2)^1.5").unwrap();
        let k = 3.0;
        let e = 0.7;
        let fe = jacobi_finsler(&cubic, e).unwrap();
        let closed = k_homogeneous_closed_form(&cubic, k, e).unwrap();
        for _ in 0..50 {
            let x = in_box(&mut r, 2, 1.0);
            let y = nonzero(&mut r, 2, 0.1, 4.0);
            let a = fe.jet(&x, &y).unwrap();
            let b = closed.jet(&x, &y).unwrap();
            assert!(a.max_rel_diff(&b) <= 1e-10, "{}", a.max_rel_diff(&b));
        }
    }

    #[test]
    fn numeric_fe_jet_matches_fd_and_randers() {
        let data = MechanicalData::parse(2, &["exp(0.3*x1)", "0", "0", "exp(0.3*x1)"], Some(&["0.2*x2", "0.1*x1"]), "0.3*sin(x2)").unwrap();
        let l = LagrangianModel::magnetic(data.clone());
        let e = 2.0;
        let fe = jacobi_finsler(&l, e).unwrap();
        let rf = randers_closed_form(&data, e);
        let mut r = rng(9);
        for _ in 0..100 {
            let x = in_ball(&mut r, 2, 1.0);
            let y = nonzero(&mut r, 2, 0.2, 2.0);
            let a = fe.jet(&x, &y).unwrap();
            let b = rf.jet(&x, &y).unwrap();
            assert!(a.max_rel_diff(&b) <= 1e-10, "{}", a.max_rel_diff(&b));
            let c = fd_jet(&fe, &x, &y, None).unwrap();
            assert!(a.max_rel_diff(&c) <= 1e-6, "{}", a.max_rel_diff(&c));
        }
    }

    #[test]
    fn ftau_is_numeric_fe_up_to_sqrt_e() {
        let l = LagrangianModel::poincare_magnetic();
        for &tau in &[0.25, 0.5, 1.0, 2.0] {
            let e = 1.0 / (tau * tau);
            let fe = jacobi_finsler(&l, e).unwrap();
            let ft = ftau(tau).unwrap();
            let mut r = rng(2);
            let mut ratio0 = None;
            for _ in 0..100 {
                let rad = 0.95 * f64::min(1.0, 1.0 / tau);
                let x = in_ball(&mut r, 2, rad);
                let y = nonzero(&mut r, 2, 0.1, 2.0);
                let ratio = fe.value(&x, &y).unwrap() / ft.value(&x, &y).unwrap();
                let r0 = *ratio0.get_or_insert(ratio);
                assert_relative_eq!(ratio, r0, max_relative = 1e-10);
            }
            assert_relative_eq!(ratio0.unwrap(), e.sqrt(), max_relative = 1e-10);
        }
    }

    #[test]
    fn global_criterion_examples() {
        let mut r = rng(1);
        let flat = MechanicalData::parse(2, &["1", "0", "0", "1"], None, "0.5*x1^2").unwrap();
        let pts: Vec<Vec<f64>> = (0..200).map(|_| in_box(&mut r, 2, 1.0)).collect();
        assert!(randers_global_criterion(&flat, 0.6, &pts).unwrap().is_global);

        let mag = MechanicalData::parse(2, &["1", "0", "0", "1"], Some(&["1", "0"]), "0").unwrap();
        let c = randers_global_criterion(&mag, 0.4, &pts).unwrap();
        assert!(!c.is_global);
        assert_relative_eq!(c.margin, -0.1, epsilon = 1e-14);
        assert!(randers_global_criterion(&mag, 0.51, &pts).unwrap().is_global);
    }

    #[test]
    fn gauge_shift_examples() {
        let data = MechanicalData::parse(2, &["1", "0", "0", "1"], Some(&["x2", "0"]), "0").unwrap();
        let base = randers_closed_form(&data, 1.0);
        let same = gauge_shift(&base, &GaugeFunction::parse(2, "3.5").unwrap()).unwrap();
        let (x, y) = ([0.2, 0.4], [1.0, -0.5]);
        assert_eq!(same.value(&x, &y).unwrap(), base.value(&x, &y).unwrap());

        // β − df with f = x1 x2 + sin(x1) equals shifting by −f.
        let f = GaugeFunction::parse(2, "x1*x2 + sin(x1)").unwrap();
        let shifted_data = MechanicalData::parse(2, &["1", "0", "0", "1"], Some(&["x2 - (x2 + cos(x1))", "0 - x1"]), "0").unwrap();
        let direct = randers_closed_form(&shifted_data, 1.0);
        let via = gauge_shift(&base, &f.negated()).unwrap();
        let mut r = rng(4);
        for _ in 0..50 {
            let x = in_box(&mut r, 2, 1.0);
            let y = nonzero(&mut r, 2, 0.1, 2.0);
            let a = direct.jet(&x, &y).unwrap();
            let b = via.jet(&x, &y).unwrap();
            assert!(a.max_rel_diff(&b) <= 1e-13);
        }
    }

    #[test]
    fn quasi_definite_examples() {
        let data = MechanicalData::parse(2, &["1", "0", "0", "1"], None, "0").unwrap();
        let f = randers_closed_form(&data, 0.5);
        let mut r = rng(8);
        let (x, y) = ([0.1, 0.2], [0.6, -0.8]);
        let rep = quasi_definite_check(&f, &x, &y, 100, &mut r).unwrap();
        assert!(rep.overall, "{rep:#?}");
        // w ⟂ y: wᵀhw = F|w|²/|y|².
        let j = f.jet(&x, &y).unwrap();
        let w = DVector::from_vec(vec![0.8, 0.6]);
        assert_relative_eq!(w.dot(&(&j.d_yy * &w)), j.value / 1.0, epsilon = 1e-14);
        let yv = DVector::from_column_slice(&y);
        assert!(yv.dot(&(&j.d_yy * &yv)).abs() <= 1e-12);

        let l = LagrangianModel::poincare_magnetic();
        let fe = jacobi_finsler(&l, 1.5).unwrap();
        let rep = quasi_definite_check(&fe, &[0.3, -0.5], &[1.0, 2.0], 100, &mut r).unwrap();
        assert!(rep.overall, "{rep:#?}");
    }

    #[test]
    fn ftau_domain() {
        let f = ftau(2.0).unwrap();
        assert!(f.value(&[0.4, 0.0], &[1.0, 0.0]).is_ok());
        assert!(matches!(f.value(&[0.6, 0.0], &[1.0, 0.0]), Err(Error::Domain(_))));
        assert!(ftau(-1.0).is_err());
        let f0 = ftau(0.0).unwrap();
        assert_relative_eq!(f0.value(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.5);
    }
}
