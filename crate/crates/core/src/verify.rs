//! Numerical checks that Euler-Lagrange trajectories at a fixed energy are
//! geodesics of `Fₑ`, plus the geometric helpers used to compare curves
//! (arc-length resampling, circle fitting, intersection angles).

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::calculus::value;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::homogenize::{gauge_shift, jacobi_finsler, FinslerModel, quasi_definite_check, solve_iota0, GaugeFunction, Iota0Level};
use crate::lagrangian::{energy, integrate_el, IntegrateOptions, LagrangianModel, MechanicalData};
use crate::linalg::{dist, norm};
use crate::ode::Sampling;
use crate::report::VerificationReport;
use crate::routh::cumulative_simpson;
use crate::sampling::{in_ball, rng, unit_vector};
use crate::spray::{canonical_spray, integrate_geodesic, Parametrization};
use crate::trajectory::Trajectory;

/// Points on the common arc-length grid of [`point_set_distance`].
pub const RESAMPLE_POINTS: usize = 1024;
/// Hermite refinement density: sub-chords per unit of total chord length
/// are chosen so that a curve is split into about this many pieces.
const REFINE_PIECES: f64 = 16384.0;
const MAX_REFINE_PER_STEP: usize = 4096;
pub const MIN_CURVE_LENGTH: f64 = 1e-12;

/// Positions refined between samples by cubic Hermite interpolation in time
/// (velocities are the time derivatives of positions).
fn dense_polyline(t: &Trajectory) -> Vec<Vec<f64>> {
    let m = t.len();
    if m < 2 {
        return t.positions.clone();
    }
    let chord: f64 = t.positions.windows(2).map(|w| dist(&w[0], &w[1])).sum();
    let delta = (chord / REFINE_PIECES).max(f64::MIN_POSITIVE);
    let n = t.dim();
    let mut out = vec![t.positions[0].clone()];
    for k in 0..m - 1 {
        let (p0, p1) = (&t.positions[k], &t.positions[k + 1]);
        let (v0, v1) = (&t.velocities[k], &t.velocities[k + 1]);
        let dt = t.times[k + 1] - t.times[k];
        let arc = dist(p0, p1).max(0.5 * dt * (norm(v0) + norm(v1)));
        let pieces = ((arc / delta).ceil() as usize).clamp(1, MAX_REFINE_PER_STEP);
        for j in 1..pieces {
            let s = j as f64 / pieces as f64;
            let (s2, s3) = (s * s, s * s * s);
            let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
            let h10 = s3 - 2.0 * s2 + s;
            let h01 = -2.0 * s3 + 3.0 * s2;
            let h11 = s3 - s2;
            out.push(
                (0..n)
                    .map(|i| h00 * p0[i] + h10 * dt * v0[i] + h01 * p1[i] + h11 * dt * v1[i])
                    .collect(),
            );
        }
        out.push(p1.clone());
    }
    out
}

fn cumulative_length(p: &[Vec<f64>]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    cum.push(0.0);
    for w in p.windows(2) {
        acc += dist(&w[0], &w[1]);
        cum.push(acc);
    }
    cum
}

/// `count` points at equal arc length on `[0, length]`.
fn resample(p: &[Vec<f64>], cum: &[f64], length: f64, count: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut k = 0;
    for i in 0..count {
        let s = length * i as f64 / (count - 1) as f64;
        while k + 2 < cum.len() && cum[k + 1] < s {
            k += 1;
        }
        let seg = cum[k + 1] - cum[k];
        let w = if seg > 0.0 { ((s - cum[k]) / seg).clamp(0.0, 1.0) } else { 0.0 };
        out.push(p[k].iter().zip(&p[k + 1]).map(|(a, b)| a + w * (b - a)).collect());
    }
    out
}

fn aligned_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let (ca, cb) = (cumulative_length(a), cumulative_length(b));
    let length = ca.last().copied().unwrap_or(0.0).min(cb.last().copied().unwrap_or(0.0));
    if !(length >= MIN_CURVE_LENGTH) {
        return Err(Error::DegenerateCurve { length });
    }
    let ra = resample(a, &ca, length, RESAMPLE_POINTS);
    let rb = resample(b, &cb, length, RESAMPLE_POINTS);
    Ok(ra.iter().zip(&rb).map(|(p, q)| dist(p, q)).fold(0.0, f64::max))
}

/// Largest distance between the position curves of `t1` and `t2` after
/// resampling both by chord length, truncated to the shorter curve.
///
/// When the curves run in opposite directions (judged by their end points)
/// one is reversed; both ways of doing so are tried and the worse one is
/// returned so that the result is symmetric.
pub fn point_set_distance(t1: &Trajectory, t2: &Trajectory) -> Result<f64> {
    if t1.is_empty() || t2.is_empty() {
        return Err(Error::DegenerateCurve { length: 0.0 });
    }
    if t1.dim() != t2.dim() {
        return Err(Error::Dimension(format!(
            "trajectories have dimensions {} and {}",
            t1.dim(),
            t2.dim()
        )));
    }
    t1.validate()?;
    t2.validate()?;
    let a = dense_polyline(t1);
    let b = dense_polyline(t2);
    let (sa, ea) = (&a[0], &a[a.len() - 1]);
    let (sb, eb) = (&b[0], &b[b.len() - 1]);
    let same = dist(sa, sb) + dist(ea, eb);
    let flipped = dist(sa, eb) + dist(ea, sb);
    if flipped < same {
        let ra: Vec<Vec<f64>> = a.iter().rev().cloned().collect();
        let rb: Vec<Vec<f64>> = b.iter().rev().cloned().collect();
        Ok(aligned_distance(&a, &rb)?.max(aligned_distance(&ra, &b)?))
    } else {
        aligned_distance(&a, &b)
    }
}

/// `λv0` with `E_L(x0, λv0) = e`, where `λ = 1/ι⁰ₑ(x0, v0)`.
pub fn rescale_to_energy(l: &LagrangianModel, x0: &[f64], v0: &[f64], e: f64) -> Result<Vec<f64>> {
    let iota = solve_iota0(l, e, x0, v0, None)?.iota0;
    Ok(v0.iter().map(|c| c / iota).collect())
}

#[derive(Debug, Clone)]
pub struct TheoremCheckOptions {
    pub tol: f64,
    /// Uniform samples per trajectory (rounded up to odd).
    pub samples: usize,
    /// Optional closed one-form `df` added to `Fₑ`.
    pub gauge: Option<GaugeFunction>,
    pub seed: u64,
}

impl Default for TheoremCheckOptions {
    fn default() -> Self {
        TheoremCheckOptions {
            tol: 1e-11,
            samples: 1025,
            gauge: None,
            seed: 0,
        }
    }
}

pub const ENERGY_MATCH_TOL: f64 = 1e-10;
pub const CURVE_TOL: f64 = 1e-6;
pub const DRIFT_TOL: f64 = 1e-8;
pub const HOMOGENEITY_TOL: f64 = 1e-10;
pub const SPRAY_HOMOGENEITY_TOL: f64 = 1e-8;

/// Cumulative `∫ F(x, ẋ) dt` at every sample of a trajectory.
pub fn f_length_profile(f: &FinslerModel, traj: &Trajectory) -> Result<Vec<f64>> {
    let vals: Vec<f64> = traj
        .positions
        .iter()
        .zip(&traj.velocities)
        .map(|(x, v)| value(f, x, v))
        .collect::<Result<_>>()?;
    Ok(cumulative_simpson(&traj.times, &vals))
}

/// Canonical geodesic of `f` from the first state of `reference`, sampled at
/// the `F`-lengths of the reference samples (so that, when `reference` is a
/// reparametrized geodesic, sample `k` of both curves is the same point).
pub fn matched_canonical_geodesic(f: &FinslerModel, reference: &Trajectory, opts: &IntegrateOptions) -> Result<Trajectory> {
    reference.validate()?;
    if reference.len() < 2 {
        return Err(Error::DegenerateCurve { length: 0.0 });
    }
    let (x0, v0) = (&reference.positions[0], &reference.velocities[0]);
    let f0 = value(f, x0, v0)?;
    if !(f0 > 0.0) {
        return Err(Error::domain(format!("F is not positive at the start ({f0:e})")));
    }
    let times: Vec<f64> = f_length_profile(f, reference)?.iter().map(|s| s / f0).collect();
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("F is not positive along the reference curve"));
    }
    let t_geo = times[times.len() - 1];
    let sampled = IntegrateOptions::new(opts.tol, Sampling::Times(times));
    integrate_geodesic(f, x0, v0, t_geo, &sampled, Parametrization::Canonical)
}

/// Compares, from `(x0, v0)` with `E_L(x0, v0) = e`:
/// (a) the Euler-Lagrange flow of `L`, (b) the canonical geodesic of `Fₑ` as
/// a point set, and (c) the geodesic tangent to `ι⁰ₑ = 1` pointwise in time.
/// Failures of individual computations are recorded in the report.
pub fn theorem_check(l: &LagrangianModel, e: f64, x0: &[f64], v0: &[f64], t_end: f64) -> VerificationReport {
    theorem_check_with(l, e, x0, v0, t_end, &TheoremCheckOptions::default())
}

pub fn theorem_check_with(
    l: &LagrangianModel,
    e: f64,
    x0: &[f64],
    v0: &[f64],
    t_end: f64,
    opts: &TheoremCheckOptions,
) -> VerificationReport {
    let mut report = VerificationReport::new("theorem_check");
    report.note(format!("family {}, e = {e}, t_end = {t_end}", l.family().name()));

    match energy(l, x0, v0) {
        Ok(e0) => {
            if !report.at_most("initial_energy_mismatch", (e0 - e).abs(), ENERGY_MATCH_TOL) {
                report.note(format!("E_L(x0, v0) = {e0} differs from e = {e}"));
                return report;
            }
        }
        Err(err) => {
            report.error("initial_energy", &err);
            return report;
        }
    }

    let samples = opts.samples.max(3) | 1;
    let iopts = IntegrateOptions::new(opts.tol, Sampling::Uniform(samples));

    let el = match integrate_el(l, x0, v0, t_end, &iopts) {
        Ok(t) => t,
        Err(err) => {
            report.error("el_flow", &err);
            return report;
        }
    };
    report.at_most("el_energy_drift", el.max_drift(), DRIFT_TOL);

    let fe = match jacobi_finsler(l, e).and_then(|f| match &opts.gauge {
        Some(g) => gauge_shift(&f, g),
        None => Ok(f),
    }) {
        Ok(f) => f,
        Err(err) => {
            report.error("finsler_model", &err);
            return report;
        }
    };

    let f_at = |x: &[f64], v: &[f64]| value(&fe, x, v);
    let f_start = match f_at(x0, v0) {
        Ok(v) => v,
        Err(err) => {
            report.error("f_initial", &err);
            return report;
        }
    };

    let canonical = matched_canonical_geodesic(&fe, &el, &iopts).and_then(|t| {
        let d = point_set_distance(&el, &t)?;
        Ok((t, d))
    });
    match canonical {
        Ok((t, d)) => {
            report.at_most("canonical_f_drift", t.max_drift() / f_start.abs().max(1.0), DRIFT_TOL);
            report.at_most("el_vs_canonical_point_set", d, CURVE_TOL);
        }
        Err(err) => report.error("canonical_geodesic", &err),
    }

    let level = Iota0Level::new(l, e);
    match integrate_geodesic(&fe, x0, v0, t_end, &iopts, Parametrization::TangentTo(&level)) {
        Ok(t) => {
            report.at_most("iota_drift", t.max_drift(), DRIFT_TOL);
            let d = el
                .positions
                .iter()
                .zip(&t.positions)
                .map(|(p, q)| dist(p, q))
                .fold(0.0, f64::max);
            report.at_most("el_vs_tangent_pointwise", d, CURVE_TOL);
        }
        Err(err) => report.error("tangent_geodesic", &err),
    }

    let scaled = |lambda: f64| -> Vec<f64> { v0.iter().map(|c| lambda * c).collect() };
    match f_at(x0, &scaled(3.0)) {
        Ok(f3) => {
            let rel = (f3 - 3.0 * f_start).abs() / (3.0 * f_start).abs().max(1e-300);
            report.at_most("euler_homogeneity", rel, HOMOGENEITY_TOL);
        }
        Err(err) => report.error("euler_homogeneity", &err),
    }
    let spray_rel = (|| -> Result<f64> {
        let a = canonical_spray(&fe, x0, v0)?.accel;
        let mut worst: f64 = 0.0;
        for lambda in [0.5, 2.0] {
            let b = canonical_spray(&fe, x0, &scaled(lambda))?.accel;
            let expect = &a * (lambda * lambda);
            worst = worst.max((b - &expect).amax() / expect.amax().max(1e-300));
        }
        Ok(worst)
    })();
    match spray_rel {
        Ok(r) => {
            report.at_most("spray_homogeneity", r, SPRAY_HOMOGENEITY_TOL);
        }
        Err(err) => report.error("spray_homogeneity", &err),
    }
    let mut r = rng(opts.seed);
    match quasi_definite_check(&fe, x0, v0, 64, &mut r) {
        Ok(q) => report.merge("quasi_definite", q),
        Err(err) => report.error("quasi_definite", &err),
    }
    report
}

/// One entry of the randomized family matrix.
#[derive(Debug, Clone)]
pub struct TheoremCase {
    pub label: String,
    pub lagrangian: LagrangianModel,
    pub energy: f64,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub t_end: f64,
}

pub const FAMILIES: [&str; 5] = ["simple", "magnetic", "k_homogeneous", "poincare_magnetic", "expression"];

/// A built-in Lagrangian of the named family, with the energy floor used by
/// [`random_theorem_cases`]. For `magnetic` the floor bounds `V + ½|β|²`
/// on the whole plane.
pub fn builtin_lagrangian(family: &str) -> Result<(LagrangianModel, f64)> {
    Ok(match family {
        "simple" => (
            LagrangianModel::simple_mechanical(MechanicalData::parse(
                2,
                &["1 + 0.3*x1^2", "0.1*x1*x2", "0.1*x1*x2", "1 + 0.2*sin(x2)^2"],
                None,
                "0.1*cos(x1)*cos(x2)",
            )?)?,
            0.1,
        ),
        "magnetic" => (
            // V + ½|β|²_g ≤ 0.1 + 0.08·exp(0.2) < 0.2 on the whole plane.
            LagrangianModel::magnetic(MechanicalData::parse(
                2,
                &["exp(0.2*sin(x1))", "0", "0", "exp(0.2*sin(x1))"],
                Some(&["-0.4*x2/(1 + 0.25*(x1^2 + x2^2))", "0.4*x1/(1 + 0.25*(x1^2 + x2^2))"]),
                "0.1*sin(x1)",
            )?),
            0.2,
        ),
        "k_homogeneous" => (
            LagrangianModel::k_homogeneous(2, Expr::parse("(1 + 0.2*x1^2)*(v1^2 + v2^2)^1.5")?, 3.0)?,
            0.0,
        ),
        "poincare_magnetic" => (LagrangianModel::poincare_magnetic(), 0.0),
        "expression" => (
            LagrangianModel::custom(
                2,
                Expr::parse("0.5*(v1^2 + v2^2) + 0.05*v1^4 + 0.3*x2*v1 - 0.05*cos(x1 + x2)")?,
            )?,
            0.05,
        ),
        other => return Err(Error::Precondition(format!("unknown family '{other}'"))),
    })
}

/// `count` cases cycling through [`FAMILIES`]: random start point, random
/// direction rescaled onto a random energy level above the family's floor.
pub fn random_theorem_cases(seed: u64, count: usize) -> Result<Vec<TheoremCase>> {
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let family = FAMILIES[i % FAMILIES.len()];
        let (l, floor) = builtin_lagrangian(family)?;
        let (x0, e, t_end) = if family == "poincare_magnetic" {
            let e = r.gen_range(1.0..3.0);
            (in_ball(&mut r, 2, 0.5), e, r.gen_range(0.2..0.4) / f64::sqrt(e))
        } else {
            (in_ball(&mut r, 2, 0.8), floor + r.gen_range(0.5..2.0), r.gen_range(1.0..2.0))
        };
        let dir: Vec<f64> = unit_vector(&mut r, 2).iter().map(|c| c * r.gen_range(0.5..1.5)).collect();
        let v0 = rescale_to_energy(&l, &x0, &dir, e)?;
        out.push(TheoremCase {
            label: format!("{family}#{i}"),
            lagrangian: l,
            energy: e,
            x0,
            v0,
            t_end,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CircleFit {
    Circle {
        center: [f64; 2],
        radius: f64,
        rms_residual: f64,
    },
    /// Collinear input: a circle of infinite radius.
    Line {
        point: [f64; 2],
        direction: [f64; 2],
        rms_residual: f64,
    },
}

impl CircleFit {
    pub fn radius(&self) -> f64 {
        match self {
            CircleFit::Circle { radius, .. } => *radius,
            CircleFit::Line { .. } => f64::INFINITY,
        }
    }

    pub fn rms_residual(&self) -> f64 {
        match self {
            CircleFit::Circle { rms_residual, .. } | CircleFit::Line { rms_residual, .. } => *rms_residual,
        }
    }
}

pub const COLLINEAR_RATIO: f64 = 1e-10;

/// Algebraic (Kåsa) circle fit refined by Gauss-Newton on the orthogonal
/// distances. Points are centered and scaled first.
pub fn circle_fit(points: &[[f64; 2]]) -> Result<CircleFit> {
    let m = points.len();
    if m < 3 {
        return Err(Error::Precondition(format!("circle fit needs at least 3 points, got {m}")));
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::Precondition("non-finite point".into()));
    }
    let mean = [
        points.iter().map(|p| p[0]).sum::<f64>() / m as f64,
        points.iter().map(|p| p[1]).sum::<f64>() / m as f64,
    ];
    let scale = (points
        .iter()
        .map(|p| (p[0] - mean[0]).powi(2) + (p[1] - mean[1]).powi(2))
        .sum::<f64>()
        / m as f64)
        .sqrt();
    if !(scale > 0.0) {
        return Err(Error::DegenerateCurve { length: 0.0 });
    }
    let u: Vec<[f64; 2]> = points
        .iter()
        .map(|p| [(p[0] - mean[0]) / scale, (p[1] - mean[1]) / scale])
        .collect();

    let design = DMatrix::from_fn(m, 3, |i, j| match j {
        0 => u[i][0],
        1 => u[i][1],
        _ => 1.0,
    });
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin < COLLINEAR_RATIO * smax {
        return Ok(fit_line(&u, mean, scale));
    }
    let rhs = DVector::from_fn(m, |i, _| -(u[i][0] * u[i][0] + u[i][1] * u[i][1]));
    let sol = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::Precondition(format!("circle fit solve failed: {e}")))?;
    let (mut cx, mut cy) = (-0.5 * sol[0], -0.5 * sol[1]);
    let r2 = cx * cx + cy * cy - sol[2];
    if !(r2 > 0.0) {
        return Ok(fit_line(&u, mean, scale));
    }
    let mut r = r2.sqrt();

    for _ in 0..100 {
        let mut jac = DMatrix::zeros(m, 3);
        let mut res = DVector::zeros(m);
        for (i, p) in u.iter().enumerate() {
            let (dx, dy) = (p[0] - cx, p[1] - cy);
            let d = (dx * dx + dy * dy).sqrt().max(f64::MIN_POSITIVE);
            res[i] = d - r;
            jac[(i, 0)] = -dx / d;
            jac[(i, 1)] = -dy / d;
            jac[(i, 2)] = -1.0;
        }
        let Ok(step) = jac.svd(true, true).solve(&res, 0.0) else {
            break;
        };
        cx -= step[0];
        cy -= step[1];
        r -= step[2];
        if step.amax() <= 1e-15 * (1.0 + r) {
            break;
        }
    }
    let rms = (u
        .iter()
        .map(|p| {
            let d = ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt() - r;
            d * d
        })
        .sum::<f64>()
        / m as f64)
        .sqrt();
    Ok(CircleFit::Circle {
        center: [mean[0] + scale * cx, mean[1] + scale * cy],
        radius: scale * r.abs(),
        rms_residual: scale * rms,
    })
}

fn fit_line(u: &[[f64; 2]], mean: [f64; 2], scale: f64) -> CircleFit {
    // Principal direction of the centered points.
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in u {
        sxx += p[0] * p[0];
        sxy += p[0] * p[1];
        syy += p[1] * p[1];
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let dir = [theta.cos(), theta.sin()];
    let rms = (u
        .iter()
        .map(|p| (p[0] * dir[1] - p[1] * dir[0]).powi(2))
        .sum::<f64>()
        / u.len() as f64)
        .sqrt();
    CircleFit::Line {
        point: mean,
        direction: dir,
        rms_residual: scale * rms,
    }
}

/// Circles whose gap to the unit circle is at most this are treated as
/// touching it.
pub const CONTACT_TOL: f64 = 1e-6;

/// Distance from tangency with the unit circle: `min(|d − |r − 1||, |d − (r + 1)|)`
/// for center distance `d`.
pub fn unit_circle_gap(center: [f64; 2], radius: f64) -> f64 {
    let d = center[0].hypot(center[1]);
    (d - (radius - 1.0).abs()).abs().min((d - (radius + 1.0)).abs())
}

/// Angle in degrees between the radii of the circle and of the unit circle at
/// an intersection point: `cos θ = (1 + r² − d²)/(2r)`. 90° means the circles
/// cross perpendicularly, 0° internal tangency.
pub fn boundary_angle(center: [f64; 2], radius: f64) -> Result<f64> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::NoIntersection);
    }
    let d = center[0].hypot(center[1]);
    if d < 1e-12 || d > radius + 1.0 + CONTACT_TOL || d < (radius - 1.0).abs() - CONTACT_TOL {
        return Err(Error::NoIntersection);
    }
    let c = ((1.0 + radius * radius - d * d) / (2.0 * radius)).clamp(-1.0, 1.0);
    Ok(c.acos().to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::IntegratorStats;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    /// Curve `p(t)` sampled at `times`, with velocities by the chain rule.
    fn curve(times: Vec<f64>, p: impl Fn(f64) -> [f64; 2], dp: impl Fn(f64) -> [f64; 2]) -> Trajectory {
        Trajectory {
            positions: times.iter().map(|&t| p(t).to_vec()).collect(),
            velocities: times.iter().map(|&t| dp(t).to_vec()).collect(),
            energy_log: Vec::new(),
            times,
            stats: IntegratorStats::default(),
        }
    }

    fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn identical_and_reparametrized_circles() {
        let c1 = curve(grid(0.0, 2.0, 200), |t| [t.cos(), t.sin()], |t| [-t.sin(), t.cos()]);
        assert_eq!(point_set_distance(&c1, &c1).unwrap(), 0.0);
        // Same arc at speed 1 + s², s ∈ [0, s_end].
        let s_end = 1.0945;
        let phi = |s: f64| s + s * s * s / 3.0;
        let c2 = curve(
            grid(0.0, s_end, 250),
            |s| [phi(s).cos(), phi(s).sin()],
            |s| [-(1.0 + s * s) * phi(s).sin(), (1.0 + s * s) * phi(s).cos()],
        );
        let d = point_set_distance(&c1, &c2).unwrap();
        assert!(d <= 1e-8, "{d}");
        assert_eq!(d, point_set_distance(&c2, &c1).unwrap());
    }

    #[test]
    fn reversed_orientation_is_aligned() {
        let c1 = curve(grid(0.0, 1.5, 30), |t| [t.cos(), t.sin()], |t| [-t.sin(), t.cos()]);
        let d = point_set_distance(&c1, &c1.reversed()).unwrap();
        assert!(d <= 1e-8, "{d}");
    }

    #[test]
    fn segment_vs_quadrant() {
        let seg = curve(grid(0.0, 1.0, 11), |t| [t, 0.0], |_| [1.0, 0.0]);
        let quad = curve(grid(0.0, PI / 2.0, 50), |t| [t.cos(), t.sin()], |t| [-t.sin(), t.cos()]);
        // Reversed segment from (1,0) against the arc from (1,0), both by
        // arc length s ∈ [0, 1].
        let brute = (0..=100_000)
            .map(|i| {
                let s = i as f64 / 100_000.0;
                ((1.0 - s - s.cos()).powi(2) + s.sin().powi(2)).sqrt()
            })
            .fold(0.0, f64::max);
        let d = point_set_distance(&seg, &quad).unwrap();
        assert!(d >= 0.1);
        assert_relative_eq!(d, brute, epsilon = 1e-6);
    }

    #[test]
    fn degenerate_curves() {
        let p = curve(vec![0.0, 1.0], |_| [0.5, 0.5], |_| [0.0, 0.0]);
        assert!(matches!(
            point_set_distance(&p, &p),
            Err(Error::DegenerateCurve { .. })
        ));
    }

    #[test]
    fn rescale_examples() {
        let free = LagrangianModel::simple_mechanical(MechanicalData::flat(2, Expr::Num(0.0)).unwrap()).unwrap();
        let v = rescale_to_energy(&free, &[0.0, 0.0], &[1.0, 0.0], 2.0).unwrap();
        assert_relative_eq!(v[0], 2.0, epsilon = 1e-12);
        assert_eq!(v[1], 0.0);

        let pot = LagrangianModel::simple_mechanical(MechanicalData::flat(1, Expr::parse("x1^2").unwrap()).unwrap())
            .unwrap();
        assert!(matches!(
            rescale_to_energy(&pot, &[1.0], &[1.0], 0.5),
            Err(Error::EnergyUnreachable { .. })
        ));
    }

    #[test]
    fn circle_fit_examples() {
        let pts: Vec<[f64; 2]> = (0..50)
            .map(|i| {
                let a = 0.3 + 0.04 * i as f64;
                [1.5 + 0.7 * a.cos(), -2.0 + 0.7 * a.sin()]
            })
            .collect();
        let CircleFit::Circle { center, radius, rms_residual } = circle_fit(&pts).unwrap() else {
            panic!("expected a circle");
        };
        assert_relative_eq!(center[0], 1.5, epsilon = 1e-12);
        assert_relative_eq!(center[1], -2.0, epsilon = 1e-12);
        assert_relative_eq!(radius, 0.7, epsilon = 1e-12);
        assert!(rms_residual <= 1e-12);

        let line: Vec<[f64; 2]> = (0..20).map(|i| [i as f64 * 0.1 - 0.9, 0.0]).collect();
        let fit = circle_fit(&line).unwrap();
        assert!(matches!(fit, CircleFit::Line { .. }));
        assert_eq!(fit.radius(), f64::INFINITY);
        assert!(circle_fit(&line[..2]).is_err());
    }

    #[test]
    fn boundary_angle_examples() {
        // Orthogonal: d² = 1 + r².
        let r: f64 = 0.75;
        let d = (1.0 + r * r).sqrt();
        assert_relative_eq!(boundary_angle([d, 0.0], r).unwrap(), 90.0, epsilon = 1e-10);
        // Internally tangent horocycle.
        assert!(boundary_angle([0.6, 0.0], 0.4).unwrap() < 1e-6);
        assert!(unit_circle_gap([0.6, 0.0], 0.4) < 1e-15);
        assert!(matches!(boundary_angle([0.0, 0.0], 0.5), Err(Error::NoIntersection)));
        assert!(matches!(boundary_angle([0.1, 0.0], 0.3), Err(Error::NoIntersection)));
    }

    #[test]
    fn theorem_check_flat() {
        let free = LagrangianModel::simple_mechanical(MechanicalData::flat(2, Expr::Num(0.0)).unwrap()).unwrap();
        let v0 = rescale_to_energy(&free, &[0.1, 0.2], &[1.0, 0.5], 0.7).unwrap();
        let r = theorem_check(&free, 0.7, &[0.1, 0.2], &v0, 1.5);
        assert!(r.overall, "{r:#?}");
    }

    #[test]
    fn theorem_check_wrong_energy() {
        let free = LagrangianModel::simple_mechanical(MechanicalData::flat(2, Expr::Num(0.0)).unwrap()).unwrap();
        let r = theorem_check(&free, 0.7, &[0.0, 0.0], &[1.0, 0.0], 1.0);
        assert!(!r.overall);
        assert!(!r.numerical_failure);
        assert!(!r.metric("initial_energy_mismatch").unwrap().pass);
    }

    #[test]
    fn theorem_check_poincare_and_gauge() {
        let l = LagrangianModel::poincare_magnetic();
        let x0 = [0.2, 0.1];
        let v0 = rescale_to_energy(&l, &x0, &[0.3, 1.0], 1.0).unwrap();
        let plain = theorem_check(&l, 1.0, &x0, &v0, 0.3);
        assert!(plain.overall, "{plain:#?}");
        let opts = TheoremCheckOptions {
            gauge: Some(GaugeFunction::parse(2, "0.1*x1*x2 + 0.05*x1^2").unwrap()),
            ..Default::default()
        };
        let shifted = theorem_check_with(&l, 1.0, &x0, &v0, 0.3, &opts);
        assert!(shifted.overall, "{shifted:#?}");
        for label in ["el_vs_canonical_point_set", "el_vs_tangent_pointwise"] {
            let a = plain.metric(label).unwrap().value;
            let b = shifted.metric(label).unwrap().value;
            assert!((a - b).abs() <= 1e-6);
        }
    }
}
