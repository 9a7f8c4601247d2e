//! Run configuration: one JSON document per invocation.

use std::path::{Path, PathBuf};

use routhlab_core::expr::Expr;
use routhlab_core::lagrangian::parse_lagrangian;
use routhlab_core::ode::Sampling;
use routhlab_core::{LagrangianModel, MechanicalData};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    #[serde(alias = "simple")]
    SimpleMechanical,
    Magnetic,
    KHomogeneous,
    PoincareMagnetic,
    Expression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: FamilyName,
    #[serde(default)]
    pub dim: Option<usize>,
    /// Row-major `n × n` entries; identity when omitted.
    #[serde(default)]
    pub metric: Option<Vec<String>>,
    #[serde(default)]
    pub one_form: Option<Vec<String>>,
    #[serde(default)]
    pub potential: Option<String>,
    #[serde(default)]
    pub expression: Option<String>,
    #[serde(default)]
    pub k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    /// Scale `v0` onto the energy level before use.
    #[serde(default)]
    pub rescale_to_energy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Uniform output samples; every accepted step when omitted.
    #[serde(default)]
    pub samples: Option<usize>,
}

fn default_t_end() -> f64 {
    1.0
}
fn default_tol() -> f64 {
    1e-10
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            t_end: default_t_end(),
            tol: default_tol(),
            samples: None,
        }
    }
}

impl IntegratorConfig {
    pub fn sampling(&self) -> Sampling {
        match self.samples {
            Some(n) => Sampling::Uniform(n),
            None => Sampling::Steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinslerizeConfig {
    /// Grid points per axis over `[-sample_radius, sample_radius]` in `x1, x2`.
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Fibre directions evaluated at every grid point.
    #[serde(default)]
    pub directions: Option<Vec<Vec<f64>>>,
}

fn default_grid() -> usize {
    11
}

impl Default for FinslerizeConfig {
    fn default() -> Self {
        FinslerizeConfig {
            grid: default_grid(),
            directions: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FinslerSource {
    #[default]
    Numeric,
    ClosedForm,
    Ftau,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ParametrizationName {
    #[default]
    Canonical,
    TangentToIota,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GeodesicConfig {
    #[serde(default)]
    pub finsler: FinslerSource,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub parametrization: ParametrizationName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "yes")]
    pub theorem: bool,
    /// Gauge function `f(x)` whose differential is added to `Fₑ`.
    #[serde(default)]
    pub gauge: Option<String>,
    #[serde(default)]
    pub suites: Vec<String>,
    #[serde(default = "default_samples")]
    pub suite_samples: usize,
    #[serde(default)]
    pub random_cases: usize,
    /// Any of `k_homogeneous`, `randers`.
    #[serde(default)]
    pub closed_form: Vec<String>,
    #[serde(default = "default_samples")]
    pub closed_form_samples: usize,
    /// Values of `τ` for the `F_τ` circle checks.
    #[serde(default)]
    pub circles: Option<Vec<f64>>,
}

fn yes() -> bool {
    true
}
fn default_samples() -> usize {
    1000
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            theorem: true,
            gauge: None,
            suites: Vec::new(),
            suite_samples: default_samples(),
            random_cases: 0,
            closed_form: Vec::new(),
            closed_form_samples: default_samples(),
            circles: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouthConfig {
    /// 1-based indices of the cyclic coordinates.
    pub cyclic: Vec<usize>,
    #[serde(default = "default_check_points")]
    pub check_points: usize,
}

fn default_check_points() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotConfig {
    /// Trajectory CSV files, relative to the config file.
    pub inputs: Vec<String>,
    #[serde(default)]
    pub unit_disk: bool,
    #[serde(default)]
    pub output: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<String>,
    /// Also emit an SVG next to trajectory CSVs.
    #[serde(default)]
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub model: ModelConfig,
    #[serde(default)]
    pub energy: Option<f64>,
    #[serde(default)]
    pub initial: Option<InitialConfig>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default = "default_radius")]
    pub sample_radius: f64,
    #[serde(default)]
    pub finslerize: Option<FinslerizeConfig>,
    #[serde(default)]
    pub geodesic: Option<GeodesicConfig>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
    #[serde(default)]
    pub routh: Option<RouthConfig>,
    #[serde(default)]
    pub plot: Option<PlotConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_radius() -> f64 {
    0.8
}

/// A parsed config together with the directory relative paths resolve from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

pub fn load(path: &Path) -> CliResult<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let config = parse(&text)?;
    Ok(LoadedConfig {
        config,
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    })
}

pub fn parse(text: &str) -> CliResult<RunConfig> {
    let config: RunConfig = serde_json::from_str(text)
        .map_err(|e| CliError::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    config.validate()?;
    Ok(config)
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn dim(&self) -> usize {
        match self.model.family {
            FamilyName::PoincareMagnetic => 2,
            _ => self.model.dim.unwrap_or(2),
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let n = self.dim();
        if n == 0 {
            return Err(bad("model.dim must be positive"));
        }
        let m = &self.model;
        if m.family == FamilyName::PoincareMagnetic && m.dim.is_some_and(|d| d != 2) {
            return Err(bad("poincare_magnetic is two-dimensional"));
        }
        if let Some(g) = &m.metric {
            if g.len() != n * n {
                return Err(bad(format!("model.metric needs {} entries for dim {n}", n * n)));
            }
        }
        if let Some(b) = &m.one_form {
            if b.len() != n {
                return Err(bad(format!("model.one_form needs {n} entries")));
            }
        }
        match m.family {
            FamilyName::Magnetic if m.one_form.is_none() => return Err(bad("magnetic family needs model.one_form")),
            FamilyName::KHomogeneous if m.expression.is_none() || m.k.is_none() => {
                return Err(bad("k_homogeneous family needs model.expression and model.k"))
            }
            FamilyName::Expression if m.expression.is_none() => return Err(bad("expression family needs model.expression")),
            _ => {}
        }
        if let Some(e) = self.energy {
            if !e.is_finite() {
                return Err(bad("energy must be finite"));
            }
        }
        if let Some(init) = &self.initial {
            if init.x0.len() != n || init.v0.len() != n {
                return Err(bad(format!("initial.x0 and initial.v0 need {n} components")));
            }
            if init.x0.iter().chain(&init.v0).any(|c| !c.is_finite()) {
                return Err(bad("initial state must be finite"));
            }
            if init.rescale_to_energy && self.energy.is_none() {
                return Err(bad("initial.rescale_to_energy needs energy"));
            }
        }
        let it = &self.integrator;
        if !(it.t_end.is_finite() && it.t_end > 0.0) {
            return Err(bad("integrator.t_end must be positive"));
        }
        if !(it.tol > 0.0 && it.tol < 1.0) {
            return Err(bad("integrator.tol must lie in (0, 1)"));
        }
        if it.samples.is_some_and(|s| s < 2) {
            return Err(bad("integrator.samples must be at least 2"));
        }
        if !(self.sample_radius > 0.0 && self.sample_radius.is_finite()) {
            return Err(bad("sample_radius must be positive"));
        }
        if let Some(f) = &self.finslerize {
            if f.grid < 1 {
                return Err(bad("finslerize.grid must be at least 1"));
            }
            if let Some(d) = &f.directions {
                if d.is_empty() || d.iter().any(|y| y.len() != n) {
                    return Err(bad(format!("finslerize.directions need {n} components each")));
                }
            }
        }
        if let Some(g) = &self.geodesic {
            if g.finsler == FinslerSource::Ftau && g.tau.is_none() {
                return Err(bad("geodesic.finsler = ftau needs geodesic.tau"));
            }
        }
        if let Some(r) = &self.routh {
            if r.cyclic.iter().any(|&i| i == 0 || i > n) {
                return Err(bad(format!("routh.cyclic indices are 1-based and at most {n}")));
            }
        }
        Ok(())
    }

    /// Builds the Lagrangian the config describes.
    pub fn lagrangian(&self) -> CliResult<LagrangianModel> {
        let n = self.dim();
        let m = &self.model;
        let mechanical = || -> CliResult<MechanicalData> {
            let metric: Vec<Expr> = match &m.metric {
                Some(g) => g.iter().map(|s| Expr::parse_with_dim(s, n)).collect::<Result<_, _>>()?,
                None => (0..n * n)
                    .map(|k| Expr::Num(if k / n == k % n { 1.0 } else { 0.0 }))
                    .collect(),
            };
            let one_form = m
                .one_form
                .as_ref()
                .map(|b| b.iter().map(|s| Expr::parse_with_dim(s, n)).collect::<Result<Vec<_>, _>>())
                .transpose()?;
            let potential = Expr::parse_with_dim(m.potential.as_deref().unwrap_or("0"), n)?;
            Ok(MechanicalData::new(n, metric, one_form, potential)?)
        };
        Ok(match m.family {
            FamilyName::SimpleMechanical => {
                if m.one_form.is_some() {
                    return Err(bad("simple_mechanical takes no one_form; use the magnetic family"));
                }
                LagrangianModel::simple_mechanical(mechanical()?)?
            }
            FamilyName::Magnetic => LagrangianModel::magnetic(mechanical()?),
            FamilyName::KHomogeneous => {
                let expr = Expr::parse_with_dim(m.expression.as_deref().unwrap_or_default(), n)?;
                LagrangianModel::k_homogeneous(n, expr, m.k.unwrap_or_default())?
            }
            FamilyName::PoincareMagnetic => LagrangianModel::poincare_magnetic(),
            FamilyName::Expression => parse_lagrangian(n, m.expression.as_deref().unwrap_or_default())?,
        })
    }

    /// Mechanical data for families that have a closed-form Randers `Fₑ`.
    pub fn mechanical_data(&self) -> CliResult<Option<MechanicalData>> {
        Ok(match self.lagrangian()?.family() {
            routhlab_core::Family::SimpleMechanical(d) | routhlab_core::Family::Magnetic(d) => Some(d.clone()),
            _ => None,
        })
    }

    pub fn require_energy(&self) -> CliResult<f64> {
        self.energy.ok_or_else(|| bad("this command needs energy"))
    }

    pub fn require_initial(&self) -> CliResult<&InitialConfig> {
        self.initial.as_ref().ok_or_else(|| bad("this command needs initial.x0 and initial.v0"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let c = parse(r#"{"model": {"family": "simple", "potential": "0.5*(x1^2 + x2^2)"}}"#).unwrap();
        assert_eq!(c.dim(), 2);
        assert_eq!(c.integrator.tol, 1e-10);
        c.lagrangian().unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(matches!(
            parse(r#"{"model": {"family": "simple"}, "energie": 1}"#),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn malformed_expression_reports_location() {
        let c = parse(r#"{"model": {"family": "expression", "expression": "0.5*v1^2 + (x1"}}"#).unwrap();
        let err = c.lagrangian().unwrap_err();
        assert!(matches!(err, CliError::Core(routhlab_core::Error::Parse { .. })), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(parse(r#"{"model": {"family": "simple", "dim": 3, "metric": ["1","0","0","1"]}}"#).is_err());
        assert!(parse(r#"{"model": {"family": "simple"}, "initial": {"x0": [0], "v0": [1, 0]}}"#).is_err());
    }
}
