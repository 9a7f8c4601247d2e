//! The subcommands. Each returns an [`Outcome`]; `lib.rs` turns it into a
//! report file and an exit code.

use std::path::{Path, PathBuf};

use routhlab_core::calculus::value;
use routhlab_core::checks::{
    example1_check, example2_check, example3_check, invariant_suite, k_homogeneous_agreement, randers_agreement,
    theorem_matrix, Suite, CLOSED_FORM_TOL,
};
use routhlab_core::homogenize::{
    ftau, jacobi_finsler, k_homogeneous_closed_form, randers_closed_form, randers_global_criterion, solve_iota0,
    FinslerModel, GaugeFunction, Iota0Level,
};
use routhlab_core::lagrangian::{energy, integrate_el, strong_convexity_check, IntegrateOptions};
use routhlab_core::ode::Sampling;
use routhlab_core::report::VerificationReport;
use routhlab_core::routh::{check_cyclic, momentum, reconstruct, routhian_with_guess, verify_reduction, CyclicSplit, REDUCTION_SAMPLES};
use routhlab_core::sampling::{in_ball, nonzero, rng};
use routhlab_core::spray::{integrate_geodesic, Parametrization};
use routhlab_core::verify::{rescale_to_energy, theorem_check_with, TheoremCheckOptions, DRIFT_TOL};
use routhlab_core::{Error, Family, LagrangianModel, Trajectory};
use serde_json::{json, Map, Value};

use crate::config::{FinslerSource, LoadedConfig, ParametrizationName, RunConfig};
use crate::csvio::{read_trajectory_file, write_table, write_trajectory_file, Cell};
use crate::error::{CliError, CliResult};
use crate::svg::{self, Curve};

pub struct Context {
    pub loaded: LoadedConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Context {
    fn cfg(&self) -> &RunConfig {
        &self.loaded.config
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: VerificationReport,
    pub summary: Map<String, Value>,
}

impl Outcome {
    fn new(name: &str) -> Self {
        Outcome {
            report: VerificationReport::new(name),
            summary: Map::new(),
        }
    }

    fn set(&mut self, key: &str, v: impl Into<Value>) {
        self.summary.insert(key.to_string(), v.into());
    }

    fn artifact(&mut self, path: &Path) {
        self.report.artifacts.push(path.display().to_string());
    }
}

/// Number of seeded samples used by `describe`.
pub const DESCRIBE_SAMPLES: usize = 256;

pub fn describe(ctx: &Context) -> CliResult<Outcome> {
    let cfg = ctx.cfg();
    let l = cfg.lagrangian()?;
    let n = l.dim();
    let mut out = Outcome::new("describe");
    out.set("family", l.family().name());
    out.set("dim", n);
    out.set("domain", l.domain_note());

    let mut r = rng(ctx.seed);
    let (mut checked, mut non_convex, mut skipped) = (0usize, 0usize, 0usize);
    let mut min_eig = f64::INFINITY;
    let mut min_e = f64::INFINITY;
    let mut argmin: Vec<f64> = Vec::new();
    for k in 0..DESCRIBE_SAMPLES {
        let x = in_ball(&mut r, n, cfg.sample_radius);
        let at_rest = k % 4 == 0;
        let v = if at_rest { vec![0.0; n] } else { nonzero(&mut r, n, 0.2, 2.0) };
        match energy(&l, &x, &v) {
            Ok(e) if e.is_finite() => {
                if e < min_e {
                    min_e = e;
                    argmin = x.clone();
                }
            }
            _ => skipped += 1,
        }
        // Homogeneous models of degree > 2 are degenerate at v = 0.
        if at_rest {
            continue;
        }
        match strong_convexity_check(&l, &x, &v) {
            Ok(c) => {
                checked += 1;
                non_convex += usize::from(!c.is_convex);
                min_eig = min_eig.min(c.min_eigenvalue);
            }
            Err(_) => skipped += 1,
        }
    }
    out.report.at_most("non_convex_samples", non_convex as f64, 0.0);
    out.report.at_least("convexity_samples_checked", checked as f64, 1.0);
    out.set("min_hessian_eigenvalue", min_eig);
    out.set("min_sampled_energy", min_e);
    out.set("min_energy_point", argmin);
    out.set("skipped_samples", skipped);
    out.set("sample_radius", cfg.sample_radius);
    if let Some(e) = cfg.energy {
        out.set("energy", e);
        out.set("energy_above_sampled_floor", e > min_e);
    }
    Ok(out)
}

/// `initial.v0`, scaled onto the energy level when requested.
fn initial_velocity(cfg: &RunConfig, l: &LagrangianModel) -> CliResult<Vec<f64>> {
    let init = cfg.require_initial()?;
    if init.rescale_to_energy {
        Ok(rescale_to_energy(l, &init.x0, &init.v0, cfg.require_energy()?)?)
    } else {
        Ok(init.v0.clone())
    }
}

fn integrate_options(cfg: &RunConfig) -> IntegrateOptions {
    IntegrateOptions::new(cfg.integrator.tol, cfg.integrator.sampling())
}

fn draws_disk(l: &LagrangianModel) -> bool {
    matches!(l.family(), Family::PoincareMagnetic)
}

fn write_svg(ctx: &Context, out: &mut Outcome, name: &str, traj: &Trajectory, label: &str, disk: bool) -> CliResult<()> {
    if !ctx.cfg().output.svg || traj.dim() < 2 {
        return Ok(());
    }
    let path = ctx.artifact(name);
    let curve = Curve {
        label: label.to_string(),
        points: traj.positions.iter().map(|p| [p[0], p[1]]).collect(),
    };
    std::fs::write(&path, svg::render(&[curve], disk)).map_err(|e| CliError::io(&path, e))?;
    out.artifact(&path);
    Ok(())
}

fn trajectory_summary(out: &mut Outcome, traj: &Trajectory) {
    out.set("samples", traj.len());
    out.set("steps", traj.stats.steps);
    out.set("rejected_steps", traj.stats.rejected);
    if let (Some(x), Some(v)) = (traj.positions.last(), traj.velocities.last()) {
        out.set("final_position", x.clone());
        out.set("final_velocity", v.clone());
    }
}

pub fn integrate_el_cmd(ctx: &Context) -> CliResult<Outcome> {
    let cfg = ctx.cfg();
    let l = cfg.lagrangian()?;
    let x0 = cfg.require_initial()?.x0.clone();
    let v0 = initial_velocity(cfg, &l)?;
    let traj = integrate_el(&l, &x0, &v0, cfg.integrator.t_end, &integrate_options(cfg))?;

    let mut out = Outcome::new("integrate_el");
    let csv = ctx.artifact("trajectory.csv");
    write_trajectory_file(&csv, &traj, "E_L")?;
    out.artifact(&csv);
    write_svg(ctx, &mut out, "trajectory.svg", &traj, "trajectory", draws_disk(&l))?;
    out.report.at_most("energy_drift", traj.max_drift(), DRIFT_TOL);
    out.set("energy", traj.energy_log[0]);
    trajectory_summary(&mut out, &traj);
    Ok(out)
}

/// Closed-form `Fₑ` when the family has one.
fn closed_form(l: &LagrangianModel, e: f64) -> CliResult<Option<FinslerModel>> {
    Ok(match l.family() {
        Family::SimpleMechanical(d) | Family::Magnetic(d) => Some(randers_closed_form(d, e)),
        Family::KHomogeneous { k, .. } => Some(k_homogeneous_closed_form(l, *k, e)?),
        _ => None,
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn finslerize(ctx: &Context) -> CliResult<Outcome> {
    let cfg = ctx.cfg();
    let e = cfg.require_energy()?;
    let l = cfg.lagrangian()?;
    let n = l.dim();
    let fcfg = cfg.finslerize.clone().unwrap_or_default();
    let f = jacobi_finsler(&l, e)?;
    let closed = closed_form(&l, e)?;
    let dirs: Vec<Vec<f64>> = fcfg.directions.clone().unwrap_or_else(|| {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect()
    });
    let base: Vec<f64> = cfg.initial.as_ref().map_or_else(|| vec![0.0; n], |i| i.x0.clone());

    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.extend((1..=n).map(|i| format!("y{i}")));
    header.extend(["iota0".to_string(), "F_e".to_string(), "F_e_2y".to_string()]);
    if closed.is_some() {
        header.push("F_closed".to_string());
    }
    header.push("status".to_string());

    let g = fcfg.grid;
    let coord = |k: usize| {
        if g == 1 {
            0.0
        } else {
            -cfg.sample_radius + 2.0 * cfg.sample_radius * k as f64 / (g - 1) as f64
        }
    };
    let (gx, gy) = (g, if n >= 2 { g } else { 1 });
    let mut rows = Vec::new();
    let (mut ok, mut unreachable, mut failed) = (0usize, 0usize, 0usize);
    let (mut homog, mut closed_err, mut closed_failures) = (0.0f64, 0.0f64, 0usize);
    for a in 0..gx {
        for b in 0..gy {
            let mut x = base.clone();
            x[0] = coord(a);
            if n >= 2 {
                x[1] = coord(b);
            }
            for y in &dirs {
                let mut row: Vec<Cell> = x.iter().chain(y).map(|&c| Cell::Num(c)).collect();
                let y2: Vec<f64> = y.iter().map(|c| 2.0 * c).collect();
                let eval = solve_iota0(&l, e, &x, y, None)
                    .map_err(CliError::from)
                    .and_then(|s| Ok((s.iota0, value(&f, &x, y)?, value(&f, &x, &y2)?)));
                let status = match eval {
                    Ok((iota, fv, f2)) => {
                        ok += 1;
                        homog = homog.max(rel(f2, 2.0 * fv));
                        row.extend([Cell::Num(iota), Cell::Num(fv), Cell::Num(f2)]);
                        if let Some(c) = &closed {
                            match value(c, &x, y) {
                                Ok(cv) => {
                                    closed_err = closed_err.max(rel(fv, cv));
                                    row.push(Cell::Num(cv));
                                }
                                Err(_) => {
                                    closed_failures += 1;
                                    row.push(Cell::Empty);
                                }
                            }
                        }
                        "ok"
                    }
                    Err(err) => {
                        let s = match err {
                            CliError::Core(Error::EnergyUnreachable { .. }) => {
                                unreachable += 1;
                                "unreachable"
                            }
                            _ => {
                                failed += 1;
                                "failed"
                            }
                        };
                        let blanks = 3 + usize::from(closed.is_some());
                        row.extend(std::iter::repeat_n(Cell::Empty, blanks));
                        s
                    }
                };
                row.push(Cell::Text(status.to_string()));
                rows.push(row);
            }
        }
    }
    let mut out = Outcome::new("finslerize");
    let path = ctx.artifact("finsler.csv");
    write_table(&path, &header, &rows)?;
    out.artifact(&path);
    out.report.at_least("evaluated_cells", ok as f64, 1.0);
    out.report.at_most("homogeneity_rel_error", homog, 1e-10);
    if closed.is_some() {
        out.report.at_most("closed_form_rel_error", closed_err, CLOSED_FORM_TOL);
        out.report.at_most("closed_form_failures", closed_failures as f64, 0.0);
    }
    out.set("energy", e);
    out.set("cells", rows.len());
    out.set("ok_cells", ok);
    out.set("unreachable_cells", unreachable);
    out.set("failed_cells", failed);
    Ok(out)
}

pub fn geodesic(ctx: &Context) -> CliResult<Outcome> {
    let cfg = ctx.cfg();
    let gcfg = cfg.geodesic.clone().unwrap_or_default();
    let init = cfg.require_initial()?;
    let l = cfg.lagrangian()?;
    let f = match gcfg.finsler {
        FinslerSource::Numeric => jacobi_finsler(&l, cfg.require_energy()?)?,
        FinslerSource::ClosedForm => closed_form(&l, cfg.require_energy()?)?
            .ok_or_else(|| CliError::Config(format!("family {} has no closed-form Fₑ", l.family().name())))?,
        FinslerSource::Ftau => ftau(gcfg.tau.unwrap_or_default())?,
    };
    if f.dim() != init.x0.len() {
        return Err(CliError::Config("initial state does not match the Finsler function's dimension".into()));
    }
    let opts = integrate_options(cfg);
    let t_end = cfg.integrator.t_end;
    let (traj, label) = match gcfg.parametrization {
        ParametrizationName::Canonical => (
            integrate_geodesic(&f, &init.x0, &init.v0, t_end, &opts, Parametrization::Canonical)?,
            "F",
        ),
        ParametrizationName::TangentToIota => {
            if gcfg.finsler == FinslerSource::Ftau {
                return Err(CliError::Config("tangent_to_iota needs the configured Lagrangian, not ftau".into()));
            }
            let level = Iota0Level::new(&l, cfg.require_energy()?);
            (
                integrate_geodesic(&f, &init.x0, &init.v0, t_end, &opts, Parametrization::TangentTo(&level))?,
                "iota",
            )
        }
    };
    let mut out = Outcome::new("geodesic");
    let csv = ctx.artifact("geodesic.csv");
    write_trajectory_file(&csv, &traj, label)?;
    out.artifact(&csv);
    let disk = draws_disk(&l) || gcfg.finsler == FinslerSource::Ftau;
    write_svg(ctx, &mut out, "geodesic.svg", &traj, "geodesic", disk)?;
    out.report.at_most(format!("{label}_drift"), traj.max_drift(), DRIFT_TOL);
    out.set("finsler", serde_json::to_value(f.provenance()).unwrap_or(Value::Null));
    trajectory_summary(&mut out, &traj);
    Ok(out)
}

fn suite_by_name(name: &str) -> CliResult<Vec<Suite>> {
    if name == "all" {
        return Ok(Suite::ALL.to_vec());
    }
    Suite::ALL
        .iter()
        .find(|s| s.name() == name)
        .map(|&s| vec![s])
        .ok_or_else(|| CliError::Config(format!("unknown suite '{name}'")))
}

pub fn verify(ctx: &Context) -> CliResult<Outcome> {
    let cfg = ctx.cfg();
    let vcfg = cfg.verify.clone().unwrap_or_default();
    let mut out = Outcome::new("verify");
    let mut ran = 0usize;
    let l = cfg.lagrangian()?;

    if vcfg.theorem {
        let e = cfg.require_energy()?;
        let x0 = cfg.require_initial()?.x0.clone();
        let v0 = initial_velocity(cfg, &l)?;
        let gauge = vcfg
            .gauge
            .as_deref()
            .map(|g| GaugeFunction::parse(l.dim(), g))
            .transpose()?;
        let opts = TheoremCheckOptions {
            tol: cfg.integrator.tol,
            samples: cfg.integrator.samples.unwrap_or(TheoremCheckOptions::default().samples),
            gauge,
            seed: ctx.seed,
        };
        out.report
            .merge("theorem", theorem_check_with(&l, e, &x0, &v0, cfg.integrator.t_end, &opts));
        out.set("energy", e);
        out.set("initial_velocity", v0);
        ran += 1;
    }
    for name in &vcfg.closed_form {
        let n = vcfg.closed_form_samples;
        match name.as_str() {
            "k_homogeneous" => out.report.merge("example1", example1_check(n, ctx.seed)),
            "randers" => out.report.merge("example2", example2_check(n, ctx.seed)),
            "model" => model_closed_form(ctx, &l, n, &mut out)?,
            other => return Err(CliError::Config(format!("unknown closed_form check '{other}'"))),
        }
        ran += 1;
    }
    if let Some(taus) = &vcfg.circles {
        if taus.is_empty() || taus.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(CliError::Config("verify.circles needs finite τ ≥ 0".into()));
        }
        out.report.merge("example3", example3_check(taus, ctx.seed));
        ran += 1;
    }
    for name in &vcfg.suites {
        for s in suite_by_name(name)? {
            out.report.merge(s.name(), invariant_suite(s, vcfg.suite_samples, ctx.seed));
            ran += 1;
        }
    }
    if vcfg.random_cases > 0 {
        out.report.merge("matrix", theorem_matrix(vcfg.random_cases, ctx.seed));
        ran += 1;
    }
    if ran == 0 {
        return Err(CliError::Config("verify selects no checks".into()));
    }
    out.set("checks", ran);
    Ok(out)
}

/// Closed form against the numeric pipeline for the configured model.
fn model_closed_form(ctx: &Context, l: &LagrangianModel, samples: usize, out: &mut Outcome) -> CliResult<()> {
    let cfg = ctx.cfg();
    let e = cfg.require_energy()?;
    let mut r = rng(ctx.seed);
    match l.family() {
        Family::SimpleMechanical(d) | Family::Magnetic(d) => {
            match randers_agreement(d, e, cfg.sample_radius, samples, &mut r) {
                Ok(err) => {
                    out.report.at_most("model/closed_form_rel_error", err, CLOSED_FORM_TOL);
                }
                Err(err) => out.report.error("model/closed_form_rel_error", &err),
            }
            let pts: Vec<Vec<f64>> = (0..samples).map(|_| in_ball(&mut r, d.dim(), cfg.sample_radius)).collect();
            let g = randers_global_criterion(d, e, &pts)?;
            out.set("global_finsler", g.is_global);
            out.set("global_margin", g.margin);
        }
        Family::KHomogeneous { k, .. } => match k_homogeneous_agreement(l, *k, e, cfg.sample_radius, samples, &mut r) {
            Ok(err) => {
                out.report.at_most("model/closed_form_rel_error", err, CLOSED_FORM_TOL);
            }
            Err(err) => out.report.error("model/closed_form_rel_error", &err),
        },
        other => {
            return Err(CliError::Config(format!("family {} has no closed-form Fₑ", other.name())));
        }
    }
    Ok(())
}

pub fn routh_reduce(ctx: &Context) -> CliResult<Outcome> {
    let cfg = ctx.cfg();
    let rcfg = cfg
        .routh
        .clone()
        .ok_or_else(|| CliError::Config("routh-reduce needs a routh section".into()))?;
    let l = cfg.lagrangian()?;
    let n = l.dim();
    let x0 = cfg.require_initial()?.x0.clone();
    let v0 = initial_velocity(cfg, &l)?;
    let cyclic: Vec<usize> = rcfg.cyclic.iter().map(|i| i - 1).collect();
    if cyclic.len() >= n {
        return Err(Error::Dimension(format!(
            "all {n} coordinates are cyclic; the reduced system would have dimension 0"
        ))
        .into());
    }
    let split = CyclicSplit::new(n, &cyclic)?;

    let mut r = rng(ctx.seed);
    let mut points = vec![(x0.clone(), v0.clone())];
    for _ in 0..rcfg.check_points {
        let x: Vec<f64> = x0.iter().zip(in_ball(&mut r, n, 0.1)).map(|(a, b)| a + b).collect();
        points.push((x, nonzero(&mut r, n, 0.2, 2.0)));
    }
    check_cyclic(&l, &split, &points)?;

    let mu = momentum(&l, &split, &x0, &v0)?;
    let t_end = cfg.integrator.t_end;
    let mut out = Outcome::new("routh_reduce");
    out.report
        .merge("round_trip", verify_reduction(&l, &split, &mu, &x0, &v0, t_end, cfg.integrator.tol)?);

    let samples = cfg.integrator.samples.unwrap_or(REDUCTION_SAMPLES);
    let opts = IntegrateOptions::new(cfg.integrator.tol, Sampling::Uniform(samples));
    let reduced_model = routhian_with_guess(&l, &split, &mu, Some(&split.cyclic_part(&v0)))?;
    let reduced = integrate_el(&reduced_model, &split.shape_part(&x0), &split.shape_part(&v0), t_end, &opts)?;
    let rec = reconstruct(&l, &split, &mu, &reduced, &split.cyclic_part(&x0))?;
    for (name, traj) in [("reduced.csv", &reduced), ("reconstructed.csv", &rec.trajectory)] {
        let path = ctx.artifact(name);
        write_trajectory_file(&path, traj, "E_L")?;
        out.artifact(&path);
    }
    for w in rec.branch_warnings {
        out.report.note(w);
    }
    out.set("mu", mu);
    out.set("cyclic", rcfg.cyclic.clone());
    out.set("shape_dim", split.shape_dim());
    out.set("routhian_energy", reduced.energy_log[0]);
    Ok(out)
}

pub fn plot(ctx: &Context) -> CliResult<Outcome> {
    let pcfg = ctx
        .cfg()
        .plot
        .clone()
        .ok_or_else(|| CliError::Config("plot needs a plot section".into()))?;
    if pcfg.inputs.is_empty() {
        return Err(CliError::Usage("plot needs at least one input CSV".into()));
    }
    let mut curves = Vec::with_capacity(pcfg.inputs.len());
    for input in &pcfg.inputs {
        let path = ctx.loaded.resolve(input);
        let table = read_trajectory_file(&path)?;
        if table.trajectory.dim() < 2 {
            return Err(CliError::Config(format!("{}: plots need at least two coordinates", path.display())));
        }
        let label = path
            .file_stem()
            .map_or_else(|| input.clone(), |s| s.to_string_lossy().into_owned());
        curves.push(Curve {
            label,
            points: table.trajectory.positions.iter().map(|p| [p[0], p[1]]).collect(),
        });
    }
    let path = ctx.artifact(pcfg.output.as_deref().unwrap_or("plot.svg"));
    std::fs::write(&path, svg::render(&curves, pcfg.unit_disk)).map_err(|e| CliError::io(&path, e))?;
    let mut out = Outcome::new("plot");
    out.artifact(&path);
    out.report.at_least("curves", curves.len() as f64, 1.0);
    out.set("inputs", json!(pcfg.inputs));
    Ok(out)
}
