//! Lagrangian models, energy, strong convexity and the Euler-Lagrange flow.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::calculus::{jet, value, GenericField, ScalarField, SecondJet};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::jet::{Jet, Scalar};
use crate::linalg::{dot, euler_lagrange_acceleration, min_eigenvalue};
use crate::ode::{dopri5, OdeOptions, Sampling};
use crate::trajectory::Trajectory;

/// Metric `g(x)`, one-form `β(x)` and potential `V(x)` given as expressions
/// in the positions `x1..xn`.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanicalData {
    dim: usize,
    metric: Vec<Expr>,
    one_form: Vec<Expr>,
    potential: Expr,
}

impl MechanicalData {
    /// `metric` is row-major `n×n` and must be structurally symmetric;
    /// `one_form` defaults to zero.
    pub fn new(dim: usize, metric: Vec<Expr>, one_form: Option<Vec<Expr>>, potential: Expr) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("mechanical model needs dim ≥ 1".into()));
        }
        if metric.len() != dim * dim {
            return Err(Error::Dimension(format!(
                "metric needs {} entries, got {}",
                dim * dim,
                metric.len()
            )));
        }
        for i in 0..dim {
            for j in 0..i {
                if metric[i * dim + j] != metric[j * dim + i] {
                    return Err(Error::Precondition(format!(
                        "metric is not symmetric at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let one_form = one_form.unwrap_or_else(|| vec![Expr::Num(0.0); dim]);
        if one_form.len() != dim {
            return Err(Error::Dimension(format!(
                "one-form needs {dim} components, got {}",
                one_form.len()
            )));
        }
        for e in metric.iter().chain(&one_form).chain(std::iter::once(&potential)) {
            e.check_arity(dim)?;
            if e.depends_on_velocity() {
                return Err(Error::Precondition(
                    "metric, one-form and potential may only depend on x".into(),
                ));
            }
        }
        Ok(MechanicalData {
            dim,
            metric,
            one_form,
            potential,
        })
    }

    /// Parses entries from text.
    pub fn parse(dim: usize, metric: &[&str], one_form: Option<&[&str]>, potential: &str) -> Result<Self> {
        let metric = metric.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>>>()?;
        let one_form = match one_form {
            Some(b) => Some(b.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>>>()?),
            None => None,
        };
        MechanicalData::new(dim, metric, one_form, Expr::parse(potential)?)
    }

    /// Euclidean metric with the given potential.
    pub fn flat(dim: usize, potential: Expr) -> Result<Self> {
        let metric = (0..dim * dim)
            .map(|k| Expr::Num(if k / dim == k % dim { 1.0 } else { 0.0 }))
            .collect();
        MechanicalData::new(dim, metric, None, potential)
    }

    pub fn with_one_form(mut self, one_form: Vec<Expr>) -> Result<Self> {
        if one_form.len() != self.dim {
            return Err(Error::Dimension("one-form length mismatch".into()));
        }
        self.one_form = one_form;
        MechanicalData::new(self.dim, self.metric, Some(self.one_form), self.potential)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric_exprs(&self) -> &[Expr] {
        &self.metric
    }

    pub fn one_form_exprs(&self) -> &[Expr] {
        &self.one_form
    }

    pub fn potential_expr(&self) -> &Expr {
        &self.potential
    }

    pub fn has_one_form(&self) -> bool {
        self.one_form.iter().any(|e| *e != Expr::Num(0.0))
    }

    /// Metric at `x`, row-major; errors unless positive-definite.
    pub fn metric_at<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        let n = self.dim;
        let mut g = Vec::with_capacity(n * n);
        for e in &self.metric {
            g.push(e.eval(x, &[] as &[S])?);
        }
        let vals = nalgebra::DMatrix::from_fn(n, n, |i, j| g[i * n + j].re());
        if vals.cholesky().is_none() {
            return Err(Error::domain("metric is not positive-definite"));
        }
        Ok(g)
    }

    pub fn one_form_at<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        self.one_form.iter().map(|e| e.eval(x, &[] as &[S])).collect()
    }

    pub fn potential_at<S: Scalar>(&self, x: &[S]) -> Result<S> {
        self.potential.eval(x, &[] as &[S])
    }

    /// `gⁱʲβᵢβⱼ` at `x`.
    pub fn one_form_norm_sq(&self, x: &[f64]) -> Result<f64> {
        let n = self.dim;
        let g = self.metric_at(x)?;
        let b = self.one_form_at(x)?;
        let gm = nalgebra::DMatrix::from_row_slice(n, n, &g);
        let bv = DVector::from_vec(b);
        let sol = gm
            .cholesky()
            .ok_or_else(|| Error::domain("metric is not positive-definite"))?
            .solve(&bv);
        Ok(bv.dot(&sol))
    }

    /// `½gᵢⱼvⁱvʲ + βᵢvⁱ − V`.
    pub fn lagrangian<S: Scalar>(&self, x: &[S], v: &[S]) -> Result<S> {
        let n = self.dim;
        let g = self.metric_at(x)?;
        let mut kin = S::cst(0.0);
        for i in 0..n {
            let mut row = g[i * n + i] * v[i] * 0.5;
            for j in 0..i {
                row += g[i * n + j] * v[j];
            }
            kin += row * v[i];
        }
        let mut lin = S::cst(0.0);
        if self.has_one_form() {
            let b = self.one_form_at(x)?;
            for i in 0..n {
                lin += b[i] * v[i];
            }
        }
        Ok(kin + lin - self.potential_at(x)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    SimpleMechanical(MechanicalData),
    Magnetic(MechanicalData),
    /// `L` positively homogeneous of degree `k` in the velocities.
    KHomogeneous { expr: Expr, k: f64 },
    /// `L = |v|²/(16(1−|x|²)²) + (x₂v₁ − x₁v₂)/(2(1−|x|²))` on the open unit disk.
    PoincareMagnetic,
    CustomExpression(Expr),
    /// Routhian of `parent` on the shape space of a cyclic split.
    Routhian {
        parent: String,
        cyclic: Vec<usize>,
        mu: Vec<f64>,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::SimpleMechanical(_) => "simple_mechanical",
            Family::Magnetic(_) => "magnetic",
            Family::KHomogeneous { .. } => "k_homogeneous",
            Family::PoincareMagnetic => "poincare_magnetic",
            Family::CustomExpression(_) => "expression",
            Family::Routhian { .. } => "routhian",
        }
    }
}

/// An autonomous Lagrangian `L(x, v)` on a chart of dimension `n`.
#[derive(Clone)]
pub struct LagrangianModel {
    dim: usize,
    family: Family,
    field: Arc<dyn ScalarField>,
}

impl fmt::Debug for LagrangianModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LagrangianModel")
            .field("dim", &self.dim)
            .field("family", &self.family)
            .finish()
    }
}

impl ScalarField for LagrangianModel {
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

struct MechanicalField(MechanicalData);

impl GenericField for MechanicalField {
    fn dim(&self) -> usize {
        self.0.dim
    }
    fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S> {
        self.0.lagrangian(x, y)
    }
}

struct ExprField {
    dim: usize,
    expr: Expr,
}

impl GenericField for ExprField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S> {
        self.expr.eval(x, y)
    }
}

struct PoincareField;

impl GenericField for PoincareField {
    fn dim(&self) -> usize {
        2
    }
    fn eval<S: Scalar>(&self, x: &[S], v: &[S]) -> Result<S> {
        let s = -(x[0] * x[0] + x[1] * x[1]) + 1.0;
        if s.re() <= 0.0 {
            return Err(Error::domain("outside the open unit disk"));
        }
        let kin = (v[0] * v[0] + v[1] * v[1]) / (s * s * 16.0);
        let mag = (x[1] * v[0] - x[0] * v[1]) / (s * 2.0);
        Ok(kin + mag)
    }
}

impl LagrangianModel {
    /// Wraps an arbitrary field; `family` is descriptive metadata.
    pub fn from_field(family: Family, field: Arc<dyn ScalarField>) -> Self {
        LagrangianModel {
            dim: field.dim(),
            family,
            field,
        }
    }

    /// `½gᵢⱼvⁱvʲ − V`; any one-form in `data` is rejected.
    pub fn simple_mechanical(data: MechanicalData) -> Result<Self> {
        if data.has_one_form() {
            return Err(Error::Precondition(
                "simple mechanical Lagrangians have no one-form; use magnetic".into(),
            ));
        }
        Ok(LagrangianModel {
            dim: data.dim,
            family: Family::SimpleMechanical(data.clone()),
            field: Arc::new(MechanicalField(data)),
        })
    }

    /// `½gᵢⱼvⁱvʲ + βᵢvⁱ − V`.
    pub fn magnetic(data: MechanicalData) -> Self {
        LagrangianModel {
            dim: data.dim,
            family: Family::Magnetic(data.clone()),
            field: Arc::new(MechanicalField(data)),
        }
    }

    pub fn k_homogeneous(dim: usize, expr: Expr, k: f64) -> Result<Self> {
        if !(k >= 2.0) {
            return Err(Error::Precondition(format!("degree k must be ≥ 2, got {k}")));
        }
        expr.check_arity(dim)?;
        Ok(LagrangianModel {
            dim,
            family: Family::KHomogeneous { expr: expr.clone(), k },
            field: Arc::new(ExprField { dim, expr }),
        })
    }

    pub fn poincare_magnetic() -> Self {
        LagrangianModel {
            dim: 2,
            family: Family::PoincareMagnetic,
            field: Arc::new(PoincareField),
        }
    }

    pub fn custom(dim: usize, expr: Expr) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("dimension must be ≥ 1".into()));
        }
        expr.check_arity(dim)?;
        Ok(LagrangianModel {
            dim,
            family: Family::CustomExpression(expr.clone()),
            field: Arc::new(ExprField { dim, expr }),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn field(&self) -> Arc<dyn ScalarField> {
        self.field.clone()
    }

    pub fn value(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        value(self, x, v)
    }

    pub fn jet(&self, x: &[f64], v: &[f64]) -> Result<SecondJet> {
        jet(self, x, v)
    }

    /// Short human-readable description of where the model is defined.
    pub fn domain_note(&self) -> String {
        match &self.family {
            Family::PoincareMagnetic => "open unit disk |x| < 1".into(),
            Family::SimpleMechanical(_) | Family::Magnetic(_) => {
                "where the metric is positive-definite".into()
            }
            Family::KHomogeneous { .. } => "slit tangent bundle v ≠ 0".into(),
            _ => "where the expression is defined".into(),
        }
    }
}

/// Parses a Lagrangian written in the expression language.
pub fn parse_lagrangian(dim: usize, text: &str) -> Result<LagrangianModel> {
    let expr = Expr::parse_with_dim(text, dim)?;
    LagrangianModel::custom(dim, expr)
}

/// `E_L = vⁱ∂L/∂vⁱ − L`.
pub fn energy(l: &LagrangianModel, x: &[f64], v: &[f64]) -> Result<f64> {
    let j = l.jet(x, v)?;
    Ok(energy_from_jet(&j, v))
}

pub(crate) fn energy_from_jet(j: &SecondJet, v: &[f64]) -> f64 {
    dot(j.d_y.as_slice(), v) - j.value
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityCheck {
    pub is_convex: bool,
    pub min_eigenvalue: f64,
}

/// Positive-definiteness of `∂²L/∂v∂v` at `(x, v)`.
///
/// Only domain errors from evaluating `L` are returned; a Hessian that is
/// not positive-definite gives `is_convex == false`.
pub fn strong_convexity_check(l: &LagrangianModel, x: &[f64], v: &[f64]) -> Result<ConvexityCheck> {
    let j = l.jet(x, v)?;
    let is_convex = j.d_yy.clone().cholesky().is_some();
    Ok(ConvexityCheck {
        is_convex,
        min_eigenvalue: min_eigenvalue(&j.d_yy),
    })
}

/// Accelerations of the Euler-Lagrange flow at `(x, v)`.
pub fn el_acceleration(l: &LagrangianModel, x: &[f64], v: &[f64]) -> Result<DVector<f64>> {
    let j = l.jet(x, v)?;
    euler_lagrange_acceleration(&j, v)
}

/// Residual `d/dt(∂L/∂v) − ∂L/∂x` of the Euler-Lagrange equations for a
/// candidate acceleration `a`.
pub fn el_residual(l: &LagrangianModel, x: &[f64], v: &[f64], a: &[f64]) -> Result<DVector<f64>> {
    let j = l.jet(x, v)?;
    let av = DVector::from_column_slice(a);
    let vv = DVector::from_column_slice(v);
    Ok(&j.d_yy * av + j.d_xy.transpose() * vv - &j.d_x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrateOptions {
    pub tol: f64,
    pub sampling: Sampling,
}

impl IntegrateOptions {
    pub fn new(tol: f64, sampling: Sampling) -> Self {
        IntegrateOptions { tol, sampling }
    }

    pub(crate) fn ode(&self) -> OdeOptions {
        OdeOptions::with_tol(self.tol)
    }
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            tol: 1e-10,
            sampling: Sampling::Steps,
        }
    }
}

/// Integrates `ẋ = v, v̇ = a(x, v)` for a second-order field given by `accel`.
pub(crate) fn integrate_second_order<A>(
    n: usize,
    x0: &[f64],
    v0: &[f64],
    t_end: f64,
    opts: &IntegrateOptions,
    mut accel: A,
) -> Result<Trajectory>
where
    A: FnMut(&[f64], &[f64]) -> Result<DVector<f64>>,
{
    if x0.len() != n || v0.len() != n {
        return Err(Error::Dimension(format!("expected {n} coordinates")));
    }
    let y0: Vec<f64> = x0.iter().chain(v0).copied().collect();
    let sol = dopri5(
        |_t, y, dy| {
            let a = accel(&y[..n], &y[n..])?;
            dy[..n].copy_from_slice(&y[n..]);
            dy[n..].copy_from_slice(a.as_slice());
            Ok(())
        },
        0.0,
        &y0,
        t_end,
        &opts.ode(),
        &opts.sampling,
    )?;
    Ok(Trajectory::from_solution(sol, n))
}

/// Euler-Lagrange trajectory from `(x0, v0)` on `[0, t_end]`, with the energy
/// logged at every recorded sample.
pub fn integrate_el(
    l: &LagrangianModel,
    x0: &[f64],
    v0: &[f64],
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    let check = strong_convexity_check(l, x0, v0)?;
    if !check.is_convex {
        return Err(Error::Precondition(format!(
            "Lagrangian is not strongly convex at the initial state (min eigenvalue {:e})",
            check.min_eigenvalue
        )));
    }
    let mut traj = integrate_second_order(l.dim(), x0, v0, t_end, opts, |x, v| {
        el_acceleration(l, x, v)
    })?;
    traj.energy_log = traj
        .positions
        .iter()
        .zip(&traj.velocities)
        .map(|(x, v)| energy(l, x, v))
        .collect::<Result<_>>()?;
    Ok(traj)
}
