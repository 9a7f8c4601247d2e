//! Batch checks over seeded random samples: closed-form reproductions for
//! the worked examples, the Euler-Lagrange/geodesic matrix over the built-in
//! families, and the invariant suites.
//!
//! Every check returns a [`VerificationReport`] whose metrics hold the worst
//! value seen over all samples.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::{fd_jet, jet, value};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::homogenize::{
    ftau, jacobi_finsler, k_homogeneous_closed_form, quasi_definite_check, randers_closed_form,
    randers_global_criterion, FinslerModel,
};
use crate::lagrangian::{energy, integrate_el, IntegrateOptions, LagrangianModel, MechanicalData};
use crate::ode::Sampling;
use crate::report::VerificationReport;
use crate::sampling::{in_ball, nonzero, rng, unit_vector, SampleRng};
use crate::spray::{canonical_spray, integrate_geodesic, Parametrization};
use crate::verify::{
    boundary_angle, builtin_lagrangian, circle_fit, matched_canonical_geodesic, point_set_distance,
    random_theorem_cases, rescale_to_energy, theorem_check_with, unit_circle_gap, CircleFit,
    TheoremCheckOptions, FAMILIES,
};

pub const CLOSED_FORM_TOL: f64 = 1e-10;

/// Keeps the worst value per metric and the first few errors.
struct Worst {
    report: VerificationReport,
    failures: usize,
}

impl Worst {
    fn new(name: &str) -> Self {
        Worst {
            report: VerificationReport::new(name),
            failures: 0,
        }
    }

    fn fail(&mut self, label: &str, err: &Error) {
        self.failures += 1;
        if self.failures <= 5 {
            self.report.error(label.to_string(), err);
        }
    }

    fn finish(mut self, samples: usize) -> VerificationReport {
        self.report.note(format!("{samples} samples"));
        self.report.at_most("failed_samples", self.failures as f64, 0.0);
        self.report
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Numeric `Fₑ` against `k((k−1)/e)^((1−k)/k) L^(1/k)` at random points.
pub fn k_homogeneous_agreement(
    l: &LagrangianModel,
    k: f64,
    e: f64,
    radius: f64,
    samples: usize,
    r: &mut SampleRng,
) -> Result<f64> {
    let numeric = jacobi_finsler(l, e)?;
    let closed = k_homogeneous_closed_form(l, k, e)?;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = in_ball(r, l.dim(), radius);
        let y = nonzero(r, l.dim(), 0.1, 3.0);
        worst = worst.max(rel(value(&numeric, &x, &y)?, value(&closed, &x, &y)?));
    }
    Ok(worst)
}

/// Numeric `Fₑ` against the Randers closed form at random points.
pub fn randers_agreement(data: &MechanicalData, e: f64, radius: f64, samples: usize, r: &mut SampleRng) -> Result<f64> {
    let numeric = jacobi_finsler(&LagrangianModel::magnetic(data.clone()), e)?;
    let closed = randers_closed_form(data, e);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = in_ball(r, data.dim(), radius);
        let y = nonzero(r, data.dim(), 0.1, 3.0);
        worst = worst.max(rel(value(&numeric, &x, &y)?, value(&closed, &x, &y)?));
    }
    Ok(worst)
}

/// Convex `k`-homogeneous Lagrangians for `k = 2, 3, 4`.
pub fn k_homogeneous_examples() -> Result<Vec<(f64, LagrangianModel)>> {
    let exprs = [
        (2.0, "0.5*((1 + 0.2*x1^2)*v1^2 + 0.3*v1*v2 + v2^2)"),
        (3.0, "(1 + 0.1*x2^2)*(v1^2 + v2^2)^1.5"),
        (4.0, "(v1^2 + 0.5*v2^2)^2*exp(0.1*x1) + 0.1*v1^4"),
    ];
    exprs
        .iter()
        .map(|&(k, s)| Ok((k, LagrangianModel::k_homogeneous(2, Expr::parse(s)?, k)?)))
        .collect()
}

/// Closed form of the `k`-homogeneous example for `k ∈ {2, 3, 4}`.
pub fn example1_check(samples: usize, seed: u64) -> VerificationReport {
    let mut report = VerificationReport::new("k_homogeneous_closed_form");
    let mut r = rng(seed);
    let cases = match k_homogeneous_examples() {
        Ok(c) => c,
        Err(err) => {
            report.error("models", &err);
            return report;
        }
    };
    for (k, l) in cases {
        let e = r.gen_range(0.5..3.0);
        match k_homogeneous_agreement(&l, k, e, 1.0, samples, &mut r) {
            Ok(w) => {
                report.at_most(format!("k={k}/max_rel_error"), w, CLOSED_FORM_TOL);
            }
            Err(err) => report.error(format!("k={k}"), &err),
        }
    }
    report
}

/// A random magnetic model with conformally flat metric, linear one-form and
/// bounded potential, as `(data, sup V over the unit disk)`.
pub fn random_randers_data(r: &mut SampleRng) -> Result<(MechanicalData, f64)> {
    let a = r.gen_range(-0.3..0.3);
    let b = r.gen_range(-0.3..0.3);
    let conf = format!("exp({a}*x1 + {b}*x2^2)");
    let c: Vec<f64> = (0..4).map(|_| r.gen_range(-0.5..0.5)).collect();
    let beta = [format!("{} + {}*x2", c[0], c[1]), format!("{} + {}*x1", c[2], c[3])];
    let (p, q) = (r.gen_range(0.0..0.3), r.gen_range(0.0..0.3));
    let data = MechanicalData::parse(
        2,
        &[&conf, "0", "0", &conf],
        Some(&[&beta[0], &beta[1]]),
        &format!("{p}*cos(x1) + {q}*sin(2*x2)"),
    )?;
    Ok((data, p + q))
}

/// Randers closed form at random magnetic models, and the global criterion
/// against sampled positivity of the numeric `Fₑ`.
pub fn example2_check(samples: usize, seed: u64) -> VerificationReport {
    let mut report = VerificationReport::new("randers_closed_form");
    let mut r = rng(seed);
    let models = 4;
    let mut worst: f64 = 0.0;
    let mut disagreements = 0usize;
    let mut criteria = (0usize, 0usize);
    for i in 0..models {
        let run = (|| -> Result<()> {
            let (data, vmax) = random_randers_data(&mut r)?;
            // Alternate a comfortable level and one near the Mañé-type threshold.
            let e = if i % 2 == 0 {
                vmax + r.gen_range(1.0..2.0)
            } else {
                vmax + r.gen_range(0.05..0.2)
            };
            worst = worst.max(randers_agreement(&data, e, 1.0, samples / models, &mut r)?);

            let pts: Vec<Vec<f64>> = (0..samples / models).map(|_| in_ball(&mut r, 2, 1.0)).collect();
            let crit = randers_global_criterion(&data, e, &pts)?;
            let numeric = jacobi_finsler(&LagrangianModel::magnetic(data.clone()), e)?;
            let mut all_positive = true;
            for x in &pts {
                // F is smallest along y = −g⁻¹β.
                let g = data.metric_at(x)?;
                let beta = data.one_form_at(x)?;
                let det = g[0] * g[3] - g[1] * g[2];
                let mut y = vec![-(g[3] * beta[0] - g[1] * beta[1]) / det, -(-g[2] * beta[0] + g[0] * beta[1]) / det];
                if y[0].hypot(y[1]) < 1e-8 {
                    y = unit_vector(&mut r, 2);
                }
                let f = value(&numeric, x, &y)?;
                let local = 0.5 * data.one_form_norm_sq(x)? + data.potential_at(x)?;
                let margin = e - local;
                if margin.abs() > 1e-9 && (f > 0.0) != (margin > 0.0) {
                    disagreements += 1;
                }
                all_positive &= f > 0.0;
            }
            if crit.is_global != all_positive {
                disagreements += 1;
            }
            if crit.is_global {
                criteria.0 += 1;
            } else {
                criteria.1 += 1;
            }
            Ok(())
        })();
        if let Err(err) = run {
            report.error(format!("model {i}"), &err);
        }
    }
    report.at_most("max_rel_error", worst, CLOSED_FORM_TOL);
    report.at_most("criterion_disagreements", disagreements as f64, 0.0);
    report.note(format!(
        "global criterion held for {} models, failed for {}",
        criteria.0, criteria.1
    ));
    report
}

pub const CIRCLE_RMS_REL: f64 = 1e-6;
pub const ANGLE_TOL_DEG: f64 = 0.1;
pub const CONTACT_GAP_TOL: f64 = 1e-4;

fn fit_geodesic(report: &mut VerificationReport, prefix: &str, tau: f64, traj: &crate::Trajectory) -> Result<CircleFit> {
    let pts: Vec<[f64; 2]> = traj.positions.iter().map(|p| [p[0], p[1]]).collect();
    let fit = circle_fit(&pts)?;
    match fit {
        CircleFit::Circle {
            center,
            radius,
            rms_residual,
        } => {
            report.at_most(format!("{prefix}/circle_rms_rel"), rms_residual / radius, CIRCLE_RMS_REL);
            if tau == 0.0 {
                let angle = boundary_angle(center, radius)?;
                report.at_most(format!("{prefix}/boundary_angle_error_deg"), (angle - 90.0).abs(), ANGLE_TOL_DEG);
            }
            if tau == 1.0 {
                report.at_most(format!("{prefix}/contact_gap"), unit_circle_gap(center, radius), CONTACT_GAP_TOL);
                let angle = boundary_angle(center, radius)?;
                report.at_most(format!("{prefix}/tangency_angle_deg"), angle, ANGLE_TOL_DEG);
            }
        }
        CircleFit::Line {
            point,
            direction,
            rms_residual,
        } => {
            report.at_most(format!("{prefix}/line_rms"), rms_residual, CIRCLE_RMS_REL);
            report.note(format!("{prefix}: straight line (circle of infinite radius)"));
            if tau == 0.0 {
                // A line meets the unit circle perpendicularly iff it passes
                // through the origin.
                let offset = (point[0] * direction[1] - point[1] * direction[0]).abs();
                report.at_most(format!("{prefix}/line_offset_from_origin"), offset, 1e-6);
            } else {
                report.at_most(format!("{prefix}/unexpected_line"), 1.0, 0.0);
            }
        }
    }
    Ok(fit)
}

/// Geodesics of `F_τ` are circles; at `τ = 0` they meet the unit circle
/// perpendicularly, at `τ = 1` they are tangent to it; for `τ > 0` the
/// Euler-Lagrange flow of the Poincaré magnetic Lagrangian at `e = 1/τ²`
/// traces the same curves.
pub fn example3_check(taus: &[f64], seed: u64) -> VerificationReport {
    let mut report = VerificationReport::new("poincare_magnetic_circles");
    let mut r = rng(seed);
    let opts = IntegrateOptions::new(1e-11, Sampling::Uniform(1025));
    let l = LagrangianModel::poincare_magnetic();
    for &tau in taus {
        let mut starts = vec![(vec![0.3, 0.0], vec![0.0, 1.0])];
        let radius = if tau > 1.0 { 0.5 / tau } else { 0.5 };
        for _ in 0..2 {
            starts.push((in_ball(&mut r, 2, radius), unit_vector(&mut r, 2)));
        }
        for (i, (x0, dir)) in starts.iter().enumerate() {
            let prefix = format!("tau={tau}/start{i}");
            let run = (|| -> Result<()> {
                let f = ftau(tau)?;
                let f0 = value(&f, x0, dir)?;
                let y0: Vec<f64> = dir.iter().map(|c| c / f0).collect();
                let traj = integrate_geodesic(&f, x0, &y0, 0.5, &opts, Parametrization::Canonical)?;
                fit_geodesic(&mut report, &prefix, tau, &traj)?;
                if tau > 0.0 {
                    let e = 1.0 / (tau * tau);
                    let v0 = rescale_to_energy(&l, x0, dir, e)?;
                    let el = integrate_el(&l, x0, &v0, 0.375 / e.sqrt(), &opts)?;
                    let geo = matched_canonical_geodesic(&f, &el, &opts)?;
                    report.at_most(format!("{prefix}/el_vs_ftau_point_set"), point_set_distance(&el, &geo)?, 1e-6);
                }
                Ok(())
            })();
            if let Err(err) = run {
                report.error(prefix, &err);
            }
        }
    }
    report
}

/// [`crate::verify::theorem_check`] over `count` random cases of the
/// built-in families.
pub fn theorem_matrix(count: usize, seed: u64) -> VerificationReport {
    let mut report = VerificationReport::new("theorem_matrix");
    let cases = match random_theorem_cases(seed, count) {
        Ok(c) => c,
        Err(err) => {
            report.error("cases", &err);
            return report;
        }
    };
    let opts = TheoremCheckOptions {
        seed,
        ..Default::default()
    };
    let mut failed = 0usize;
    let mut worst: std::collections::BTreeMap<String, f64> = Default::default();
    for case in &cases {
        let sub = theorem_check_with(&case.lagrangian, case.energy, &case.x0, &case.v0, case.t_end, &opts);
        if !sub.overall {
            failed += 1;
            report.merge(&case.label, sub);
            continue;
        }
        for m in &sub.metrics {
            let w = worst.entry(m.label.clone()).or_insert(f64::NAN);
            // Worst in the failing direction.
            *w = match m.comparison {
                crate::report::Comparison::AtMost => w.max(m.value),
                crate::report::Comparison::AtLeast => w.min(m.value),
            };
        }
    }
    report.note(format!("{} cases, seed {seed}", cases.len()));
    for (label, v) in worst {
        report.note(format!("worst {label}: {v:e}"));
    }
    report.at_most("failed_cases", failed as f64, 0.0);
    report
}

/// The invariant suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    EulerHomogeneity,
    SprayHomogeneity,
    Conservation,
    AutodiffVsFd,
    QuasiDefinite,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::EulerHomogeneity,
        Suite::SprayHomogeneity,
        Suite::Conservation,
        Suite::AutodiffVsFd,
        Suite::QuasiDefinite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::EulerHomogeneity => "euler_homogeneity",
            Suite::SprayHomogeneity => "spray_homogeneity",
            Suite::Conservation => "conservation",
            Suite::AutodiffVsFd => "autodiff_vs_fd",
            Suite::QuasiDefinite => "quasi_definite",
        }
    }
}

struct Sample {
    l: LagrangianModel,
    fe: FinslerModel,
    e: f64,
    x: Vec<f64>,
    y: Vec<f64>,
    family: &'static str,
}

fn draw(models: &[(LagrangianModel, f64)], i: usize, r: &mut SampleRng) -> Result<Sample> {
    let family = FAMILIES[i % FAMILIES.len()];
    let (l, floor) = &models[i % FAMILIES.len()];
    let (x, e) = if family == "poincare_magnetic" {
        (in_ball(r, 2, 0.5), r.gen_range(1.0..3.0))
    } else {
        (in_ball(r, 2, 0.8), floor + r.gen_range(0.5..2.0))
    };
    let y = nonzero(r, 2, 0.2, 2.0);
    Ok(Sample {
        fe: jacobi_finsler(l, e)?,
        l: l.clone(),
        e,
        x,
        y,
        family,
    })
}

/// Runs one invariant suite on `samples` random points cycling through the
/// built-in families (with `Fₑ` the numeric Finsler function).
pub fn invariant_suite(suite: Suite, samples: usize, seed: u64) -> VerificationReport {
    let mut w = Worst::new(suite.name());
    let models: Vec<(LagrangianModel, f64)> = match FAMILIES.iter().map(|f| builtin_lagrangian(f)).collect() {
        Ok(m) => m,
        Err(err) => {
            w.fail("models", &err);
            return w.finish(0);
        }
    };
    let mut r = rng(seed);
    let mut acc: Vec<(&'static str, f64, f64, bool)> = Vec::new();
    let mut record = |label: &'static str, v: f64, tol: f64, at_most: bool| {
        if let Some(slot) = acc.iter_mut().find(|s| s.0 == label) {
            slot.1 = if at_most { slot.1.max(v) } else { slot.1.min(v) };
        } else {
            acc.push((label, v, tol, at_most));
        }
    };
    for i in 0..samples {
        let s = match draw(&models, i, &mut r) {
            Ok(s) => s,
            Err(err) => {
                w.fail(&format!("sample {i}"), &err);
                continue;
            }
        };
        let lambda = r.gen_range(0.1..10.0);
        let outcome = (|| -> Result<()> {
            match suite {
                Suite::EulerHomogeneity => {
                    let f = value(&s.fe, &s.x, &s.y)?;
                    let ys: Vec<f64> = s.y.iter().map(|c| lambda * c).collect();
                    record("scaling_rel_error", rel(value(&s.fe, &s.x, &ys)?, lambda * f), 1e-10, true);
                    let j = jet(&s.fe, &s.x, &s.y)?;
                    let liouville = j.d_y.dot(&DVector::from_column_slice(&s.y));
                    record("liouville_rel_error", rel(liouville, f), 1e-10, true);
                }
                Suite::SprayHomogeneity => {
                    let a = canonical_spray(&s.fe, &s.x, &s.y)?.accel;
                    let ys: Vec<f64> = s.y.iter().map(|c| lambda * c).collect();
                    let b = canonical_spray(&s.fe, &s.x, &ys)?.accel;
                    let expect = &a * (lambda * lambda);
                    record("rel_error", (b - &expect).amax() / expect.amax().max(1e-300), 1e-8, true);
                }
                Suite::Conservation => {
                    let opts = IntegrateOptions::new(1e-11, Sampling::Steps);
                    let t_end = if s.family == "poincare_magnetic" { 0.15 } else { 0.5 };
                    let v = rescale_to_energy(&s.l, &s.x, &s.y, s.e)?;
                    let el = integrate_el(&s.l, &s.x, &v, t_end, &opts)?;
                    record("energy_drift", el.max_drift(), 1e-8, true);
                    let geo = integrate_geodesic(&s.fe, &s.x, &v, t_end, &opts, Parametrization::Canonical)?;
                    let f0 = geo.energy_log[0].abs().max(1.0);
                    record("f_drift", geo.max_drift() / f0, 1e-8, true);
                    let e_end = energy(&s.l, el.positions.last().unwrap(), el.velocities.last().unwrap())?;
                    record("energy_level_error", (e_end - s.e).abs(), 1e-8, true);
                }
                Suite::AutodiffVsFd => {
                    let jl = s.l.jet(&s.x, &s.y)?;
                    record("lagrangian_max_rel_diff", jl.max_rel_diff(&fd_jet(&s.l, &s.x, &s.y, None)?), 1e-6, true);
                    let jf = jet(&s.fe, &s.x, &s.y)?;
                    record("finsler_max_rel_diff", jf.max_rel_diff(&fd_jet(&s.fe, &s.x, &s.y, None)?), 1e-6, true);
                }
                Suite::QuasiDefinite => {
                    let q = quasi_definite_check(&s.fe, &s.x, &s.y, 16, &mut r)?;
                    for m in &q.metrics {
                        let label: &'static str = match m.label.as_str() {
                            "kernel_residual" => "kernel_residual",
                            "min_quadratic_form" => "min_quadratic_form",
                            "transverse_min_eigenvalue" => "transverse_min_eigenvalue",
                            _ => "min_transverse_quadratic_form",
                        };
                        record(label, m.value, m.tolerance, m.comparison == crate::report::Comparison::AtMost);
                    }
                }
            }
            Ok(())
        })();
        if let Err(err) = outcome {
            w.fail(&format!("sample {i} ({})", s.family), &err);
        }
    }
    for (label, v, tol, at_most) in acc {
        if at_most {
            w.report.at_most(label, v, tol);
        } else {
            w.report.at_least(label, v, tol);
        }
    }
    w.finish(samples)
}
