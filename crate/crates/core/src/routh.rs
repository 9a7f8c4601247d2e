//! Routh reduction for Lagrangians with cyclic coordinates.
//!
//! Given a split of the chart coordinates into cyclic ones `xᵃ` (absent from
//! `L`) and shape coordinates `xⁱ`, the momentum relation `∂L/∂yᵃ = μₐ` is
//! solved for the cyclic velocities `yᵃ = ιᵃ_μ(xⁱ, yⁱ)` and the Routhian
//! `L_μ = L∘ι_μ − μₐιᵃ_μ` is a Lagrangian on the shape space whose
//! Euler-Lagrange flow is the reduced dynamics.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::calculus::{GenericField, SecondJet};
use crate::error::{Error, Result};
use crate::jet::Scalar;
use crate::lagrangian::{energy, integrate_el, Family, IntegrateOptions, LagrangianModel};
use crate::linalg::dist;
use crate::ode::Sampling;
use crate::report::VerificationReport;
use crate::trajectory::Trajectory;

/// Tolerance for sampled `|∂L/∂xᵃ|` when checking that a coordinate is cyclic.
pub const INVARIANCE_TOL: f64 = 1e-12;
pub const MAX_NEWTON_ITERS: usize = 50;

/// Partition of `0..n` into cyclic and shape coordinate indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CyclicSplit {
    n: usize,
    cyclic: Vec<usize>,
    shape: Vec<usize>,
}

impl CyclicSplit {
    pub fn new(n: usize, cyclic: &[usize]) -> Result<Self> {
        let mut c = cyclic.to_vec();
        c.sort_unstable();
        c.dedup();
        if c.len() != cyclic.len() {
            return Err(Error::Precondition("duplicate cyclic index".into()));
        }
        if let Some(&bad) = c.iter().find(|&&i| i >= n) {
            return Err(Error::Dimension(format!(
                "cyclic index {bad} out of range for dimension {n}"
            )));
        }
        if c.is_empty() {
            return Err(Error::Precondition("at least one cyclic coordinate is required".into()));
        }
        let shape: Vec<usize> = (0..n).filter(|i| !c.contains(i)).collect();
        Ok(CyclicSplit {
            n,
            cyclic: cyclic.to_vec(),
            shape,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn cyclic(&self) -> &[usize] {
        &self.cyclic
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn shape_dim(&self) -> usize {
        self.shape.len()
    }

    /// Full coordinates from shape and cyclic parts.
    pub fn assemble<S: Copy>(&self, shape: &[S], cyclic: &[S]) -> Vec<S> {
        let mut full = Vec::with_capacity(self.n);
        // Fill in index order.
        let mut si = 0;
        for i in 0..self.n {
            if let Some(pos) = self.cyclic.iter().position(|&c| c == i) {
                full.push(cyclic[pos]);
            } else {
                full.push(shape[si]);
                si += 1;
            }
        }
        full
    }

    pub fn shape_part(&self, full: &[f64]) -> Vec<f64> {
        self.shape.iter().map(|&i| full[i]).collect()
    }

    pub fn cyclic_part(&self, full: &[f64]) -> Vec<f64> {
        self.cyclic.iter().map(|&i| full[i]).collect()
    }
}

/// Momentum level `μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumLevel {
    pub mu: Vec<f64>,
}

impl MomentumLevel {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::Precondition("momentum level must be finite".into()));
        }
        Ok(MomentumLevel { mu })
    }
}

fn check_model(l: &LagrangianModel, split: &CyclicSplit) -> Result<()> {
    if l.dim() != split.dim() {
        return Err(Error::Dimension(format!(
            "split is for dimension {}, Lagrangian has {}",
            split.dim(),
            l.dim()
        )));
    }
    Ok(())
}

/// Samples `∂L/∂xᵃ` on the cyclic indices at the given points and fails with
/// [`Error::Invariance`] if any exceeds [`INVARIANCE_TOL`] (relative to
/// `max(1, |∂L|)`).
pub fn check_cyclic(l: &LagrangianModel, split: &CyclicSplit, points: &[(Vec<f64>, Vec<f64>)]) -> Result<()> {
    check_model(l, split)?;
    for (x, y) in points {
        let j = l.jet(x, y)?;
        let scale = j.d_x.amax().max(j.d_y.amax()).max(1.0);
        for &a in split.cyclic() {
            if j.d_x[a].abs() > INVARIANCE_TOL * scale {
                return Err(Error::Invariance {
                    index: a,
                    derivative: j.d_x[a],
                });
            }
        }
    }
    Ok(())
}

/// `∂L/∂yᵃ` on the cyclic indices.
pub fn momentum(l: &LagrangianModel, split: &CyclicSplit, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_model(l, split)?;
    let j = l.jet(x, y)?;
    Ok(split.cyclic().iter().map(|&a| j.d_y[a]).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentumSolve {
    /// Cyclic velocities `ιᵃ_μ`.
    pub velocities: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn cyclic_block(j: &SecondJet, split: &CyclicSplit) -> DMatrix<f64> {
    let c = split.cyclic();
    DMatrix::from_fn(c.len(), c.len(), |p, q| j.d_yy[(c[p], c[q])])
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, c| m.max(c.abs()))
}

/// Solves `∂L/∂yᵃ(x, y) = μₐ` for the cyclic velocities by damped Newton
/// iteration on the `(∂²L/∂yᵃ∂yᵇ)` block. The cyclic positions are set to
/// zero (`L` does not depend on them). `guess` defaults to zero.
pub fn solve_momentum(
    l: &LagrangianModel,
    split: &CyclicSplit,
    mu: &[f64],
    x_shape: &[f64],
    y_shape: &[f64],
    guess: Option<&[f64]>,
) -> Result<MomentumSolve> {
    check_model(l, split)?;
    let m = split.cyclic().len();
    if mu.len() != m || x_shape.len() != split.shape_dim() || y_shape.len() != split.shape_dim() {
        return Err(Error::Dimension("momentum solve argument lengths".into()));
    }
    let x = split.assemble(x_shape, &vec![0.0; m]);
    let tol = 1e-12 * (1.0 + inf_norm(mu));
    let mut ya: Vec<f64> = guess.map_or_else(|| vec![0.0; m], <[f64]>::to_vec);

    let residual_at = |ya: &[f64]| -> Result<(Vec<f64>, SecondJet)> {
        let y = split.assemble(y_shape, ya);
        let j = l.jet(&x, &y)?;
        let r: Vec<f64> = split
            .cyclic()
            .iter()
            .zip(mu)
            .map(|(&a, m)| j.d_y[a] - m)
            .collect();
        Ok((r, j))
    };

    let (mut r, mut j) = residual_at(&ya)?;
    let mut rn = inf_norm(&r);
    for iter in 0..=MAX_NEWTON_ITERS {
        if rn <= tol {
            return Ok(MomentumSolve {
                velocities: ya,
                iterations: iter,
                residual: rn,
            });
        }
        if iter == MAX_NEWTON_ITERS {
            break;
        }
        let h = cyclic_block(&j, split);
        let lu = h.lu();
        let step = lu
            .solve(&DVector::from_vec(r.clone()))
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .ok_or(Error::SingularBlock)?;
        // Backtracking on the residual norm.
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = ya.iter().zip(step.iter()).map(|(y, s)| y - lambda * s).collect();
            if let Ok((rt, jt)) = residual_at(&trial) {
                let rtn = inf_norm(&rt);
                if rtn < rn || rtn <= tol {
                    ya = trial;
                    r = rt;
                    j = jt;
                    rn = rtn;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            // Stagnation at rounding level counts as converged if close.
            if rn <= 1e3 * tol {
                return Ok(MomentumSolve {
                    velocities: ya,
                    iterations: iter + 1,
                    residual: rn,
                });
            }
            return Err(Error::NoConvergence {
                iterations: iter + 1,
                residual: rn,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_NEWTON_ITERS,
        residual: rn,
    })
}

/// First derivatives of `ι_μ` with respect to the shape positions and
/// velocities, by the implicit function theorem:
/// `∂ι/∂yʲ = −h⁻¹h_{·j}`, `∂ι/∂xⁱ = −h⁻¹∂²L/∂xⁱ∂y^{·}`.
///
/// Returns an `m × 2k` matrix, columns ordered `(xⁱ…, yⁱ…)`.
fn iota_slopes(j: &SecondJet, split: &CyclicSplit) -> Result<DMatrix<f64>> {
    let c = split.cyclic();
    let s = split.shape();
    let k = s.len();
    let h = cyclic_block(j, split);
    let mut rhs = DMatrix::zeros(c.len(), 2 * k);
    for (col, &i) in s.iter().enumerate() {
        for (row, &a) in c.iter().enumerate() {
            rhs[(row, col)] = j.d_xy[(i, a)];
            rhs[(row, k + col)] = j.d_yy[(a, i)];
        }
    }
    let sol = h.lu().solve(&rhs).ok_or(Error::SingularBlock)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularBlock);
    }
    Ok(-sol)
}

/// The Routhian `L_μ` as a field on the shape space.
///
/// The objective `L(x, y) − μₐyᵃ` is stationary in the cyclic velocities at
/// `ι_μ`, so composing `L` with a first-order-exact `ι_μ` already gives the
/// exact second-order jet of `L_μ`.
struct RouthianField {
    parent: LagrangianModel,
    split: CyclicSplit,
    mu: Vec<f64>,
    guess: Vec<f64>,
}

impl GenericField for RouthianField {
    fn dim(&self) -> usize {
        self.split.shape_dim()
    }

    fn eval<S: Scalar>(&self, xs: &[S], ys: &[S]) -> Result<S> {
        let k = self.split.shape_dim();
        let m = self.mu.len();
        let xr: Vec<f64> = xs.iter().map(Scalar::re).collect();
        let yr: Vec<f64> = ys.iter().map(Scalar::re).collect();
        let sol = solve_momentum(&self.parent, &self.split, &self.mu, &xr, &yr, Some(&self.guess))?;
        let x_full = self.split.assemble(&xr, &vec![0.0; m]);
        let y_full = self.split.assemble(&yr, &sol.velocities);
        let j = self.parent.jet(&x_full, &y_full)?;
        let slopes = iota_slopes(&j, &self.split)?;

        let inputs: Vec<S> = xs.iter().chain(ys).copied().collect();
        let iota: Vec<S> = (0..m)
            .map(|a| {
                let row: Vec<f64> = (0..2 * k).map(|c| slopes[(a, c)]).collect();
                S::linearize(sol.velocities[a], &row, &inputs)
            })
            .collect();
        let zeros = vec![S::cst(0.0); m];
        let x_s = self.split.assemble(xs, &zeros);
        let y_s = self.split.assemble(ys, &iota);
        let mut out = S::eval_field(&self.parent, &x_s, &y_s)?;
        for a in 0..m {
            out -= iota[a] * self.mu[a];
        }
        Ok(out)
    }
}

/// Routhian `L_μ = L∘ι_μ − μₐιᵃ_μ` as a Lagrangian on the shape space.
pub fn routhian(l: &LagrangianModel, split: &CyclicSplit, mu: &[f64]) -> Result<LagrangianModel> {
    routhian_with_guess(l, split, mu, None)
}

/// As [`routhian`], with a fixed initial Newton guess for `ι_μ` that selects
/// the branch of the momentum relation.
pub fn routhian_with_guess(
    l: &LagrangianModel,
    split: &CyclicSplit,
    mu: &[f64],
    guess: Option<&[f64]>,
) -> Result<LagrangianModel> {
    check_model(l, split)?;
    let m = split.cyclic().len();
    if split.shape_dim() == 0 {
        return Err(Error::Dimension(
            "every coordinate is cyclic: the reduced space has dimension 0".into(),
        ));
    }
    let level = MomentumLevel::new(mu.to_vec())?;
    if level.mu.len() != m {
        return Err(Error::Dimension(format!("μ needs {m} components")));
    }
    let guess = guess.map_or_else(|| vec![0.0; m], <[f64]>::to_vec);
    let parent_name = l.family().name().to_string();
    let field = RouthianField {
        parent: l.clone(),
        split: split.clone(),
        mu: level.mu.clone(),
        guess,
    };
    Ok(LagrangianModel::from_field(
        Family::Routhian {
            parent: parent_name,
            cyclic: split.cyclic().to_vec(),
            mu: level.mu,
        },
        Arc::new(field),
    ))
}

/// Full trajectory rebuilt from a reduced one, with any momentum-branch
/// changes observed along the way.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub trajectory: Trajectory,
    pub branch_warnings: Vec<String>,
}

/// `∫ f` from `times[0]` to every sample, by composite Simpson on sample
/// pairs (exact Simpson at even indices; odd indices use the matching
/// three-point rule on the half pair).
pub(crate) fn cumulative_simpson(times: &[f64], f: &[f64]) -> Vec<f64> {
    let m = times.len();
    let mut out = vec![0.0; m];
    if m < 2 {
        return out;
    }
    if m == 2 {
        out[1] = 0.5 * (f[0] + f[1]) * (times[1] - times[0]);
        return out;
    }
    // Quadratic through (k0, k1, k2) integrated over [t_a, t_b].
    let quad = |k0: usize, k1: usize, k2: usize, a: f64, b: f64| -> f64 {
        let (t0, t1, t2) = (times[k0], times[k1], times[k2]);
        let d1 = (f[k1] - f[k0]) / (t1 - t0);
        let d2 = ((f[k2] - f[k1]) / (t2 - t1) - d1) / (t2 - t0);
        // p(t) = f0 + d1 (t - t0) + d2 (t - t0)(t - t1)
        let prim = |t: f64| {
            let s = t - t0;
            f[k0] * s + 0.5 * d1 * s * s + d2 * (s * s * s / 3.0 - 0.5 * (t1 - t0) * s * s)
        };
        prim(b) - prim(a)
    };
    for k in 0..m - 1 {
        let piece = if k % 2 == 0 && k + 2 < m {
            quad(k, k + 1, k + 2, times[k], times[k + 1])
        } else {
            quad(k - 1, k, k + 1, times[k], times[k + 1])
        };
        out[k + 1] = out[k] + piece;
    }
    out
}

/// Rebuilds the cyclic coordinates along a reduced trajectory:
/// `xᵃ(t) = xᵃ(0) + ∫₀ᵗ ιᵃ_μ(xⁱ(s), ẋⁱ(s)) ds`.
///
/// `ι_μ` is warm-started from the previous sample; whenever the warm-started
/// root differs from the root reached from the default guess, a branch
/// warning is recorded.
pub fn reconstruct(
    l: &LagrangianModel,
    split: &CyclicSplit,
    mu: &[f64],
    reduced: &Trajectory,
    xa0: &[f64],
) -> Result<Reconstruction> {
    check_model(l, split)?;
    reduced.validate()?;
    let m = split.cyclic().len();
    if xa0.len() != m {
        return Err(Error::Dimension(format!("initial cyclic position needs {m} components")));
    }
    if !reduced.is_empty() && reduced.dim() != split.shape_dim() {
        return Err(Error::Dimension("reduced trajectory has the wrong dimension".into()));
    }
    let mut warnings = Vec::new();
    let mut iotas: Vec<Vec<f64>> = Vec::with_capacity(reduced.len());
    let mut prev: Option<Vec<f64>> = None;
    for (k, (xs, vs)) in reduced.positions.iter().zip(&reduced.velocities).enumerate() {
        let sol = solve_momentum(l, split, mu, xs, vs, prev.as_deref())?;
        if let Ok(cold) = solve_momentum(l, split, mu, xs, vs, None) {
            if dist(&cold.velocities, &sol.velocities) > 1e-8 * (1.0 + inf_norm(&sol.velocities)) {
                warnings.push(format!(
                    "t = {}: tracked momentum branch differs from the default-guess branch",
                    reduced.times[k]
                ));
            }
        }
        prev = Some(sol.velocities.clone());
        iotas.push(sol.velocities);
    }
    let mut cyclic_pos: Vec<Vec<f64>> = vec![Vec::with_capacity(m); reduced.len()];
    for a in 0..m {
        let fa: Vec<f64> = iotas.iter().map(|v| v[a]).collect();
        let integral = cumulative_simpson(&reduced.times, &fa);
        for (k, val) in integral.into_iter().enumerate() {
            cyclic_pos[k].push(xa0[a] + val);
        }
    }
    let mut traj = Trajectory {
        times: reduced.times.clone(),
        positions: Vec::with_capacity(reduced.len()),
        velocities: Vec::with_capacity(reduced.len()),
        energy_log: Vec::with_capacity(reduced.len()),
        stats: reduced.stats,
    };
    for k in 0..reduced.len() {
        let x = split.assemble(&reduced.positions[k], &cyclic_pos[k]);
        let v = split.assemble(&reduced.velocities[k], &iotas[k]);
        traj.energy_log.push(energy(l, &x, &v)?);
        traj.positions.push(x);
        traj.velocities.push(v);
    }
    Ok(Reconstruction {
        trajectory: traj,
        branch_warnings: warnings,
    })
}

/// Number of samples used when comparing full and reduced flows.
pub const REDUCTION_SAMPLES: usize = 2001;

/// Integrates the full system and the Routhian system from matching data
/// and reports the largest distance between the shape components, plus the
/// round trip through [`reconstruct`] on all coordinates.
pub fn verify_reduction(
    l: &LagrangianModel,
    split: &CyclicSplit,
    mu: &[f64],
    x0: &[f64],
    y0: &[f64],
    t_end: f64,
    tol: f64,
) -> Result<VerificationReport> {
    check_model(l, split)?;
    let p0 = momentum(l, split, x0, y0)?;
    let mismatch = dist(&p0, mu);
    if mismatch > 1e-10 * (1.0 + inf_norm(mu)) {
        return Err(Error::Precondition(format!(
            "initial momentum {p0:?} does not match μ = {mu:?}"
        )));
    }
    let opts = IntegrateOptions::new(tol, Sampling::Uniform(REDUCTION_SAMPLES));
    let full = integrate_el(l, x0, y0, t_end, &opts)?;
    let reduced_model = routhian_with_guess(l, split, mu, Some(&split.cyclic_part(y0)))?;
    let xs0 = split.shape_part(x0);
    let ys0 = split.shape_part(y0);
    let reduced = integrate_el(&reduced_model, &xs0, &ys0, t_end, &opts)?;

    let mut shape_dev: f64 = 0.0;
    for k in 0..full.len() {
        let fs = split.shape_part(&full.positions[k]);
        shape_dev = shape_dev.max(dist(&fs, &reduced.positions[k]));
    }
    let mut momentum_drift: f64 = 0.0;
    for (x, y) in full.positions.iter().zip(&full.velocities) {
        momentum_drift = momentum_drift.max(dist(&momentum(l, split, x, y)?, mu));
    }
    let rec = reconstruct(l, split, mu, &reduced, &split.cyclic_part(x0))?;
    let mut round_trip: f64 = 0.0;
    for k in 0..full.len() {
        round_trip = round_trip.max(dist(&full.positions[k], &rec.trajectory.positions[k]));
    }

    let mut report = VerificationReport::new("routh_reduction");
    report.at_most("shape_mismatch", shape_dev, 1e-8);
    report.at_most("momentum_drift", momentum_drift, 1e-8);
    report.at_most("reconstruction_round_trip", round_trip, 1e-7);
    report.at_most("full_energy_drift", full.max_drift(), 1e-8);
    report.at_most("reduced_energy_drift", reduced.max_drift(), 1e-8);
    for w in rec.branch_warnings {
        report.note(w);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::{parse_lagrangian, MechanicalData};
    use approx::assert_relative_eq;

    fn polar() -> LagrangianModel {
        // (r, θ): ½(ṙ² + r²θ̇²) − V(r), V = −1/r
        let d = MechanicalData::parse(2, &["1", "0", "0", "x1^2"], None, "-1/x1").unwrap();
        LagrangianModel::simple_mechanical(d).unwrap()
    }

    #[test]
    fn split_validation() {
        assert!(CyclicSplit::new(2, &[2]).is_err());
        assert!(CyclicSplit::new(2, &[]).is_err());
        assert!(CyclicSplit::new(3, &[1, 1]).is_err());
        let s = CyclicSplit::new(3, &[1]).unwrap();
        assert_eq!(s.shape(), &[0, 2]);
        assert_eq!(s.assemble(&[1.0, 3.0], &[2.0]), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn momentum_examples() {
        let free = parse_lagrangian(2, "0.5*(v1^2+v2^2)").unwrap();
        let s = CyclicSplit::new(2, &[0]).unwrap();
        assert_eq!(momentum(&free, &s, &[0.0, 0.0], &[1.5, 2.0]).unwrap(), vec![1.5]);
        let sol = solve_momentum(&free, &s, &[5.0], &[0.0], &[1.0], None).unwrap();
        assert_relative_eq!(sol.velocities[0], 5.0, epsilon = 1e-12);

        let p = polar();
        let s = CyclicSplit::new(2, &[1]).unwrap();
        assert_relative_eq!(momentum(&p, &s, &[2.0, 0.7], &[0.1, 3.0]).unwrap()[0], 12.0, epsilon = 1e-13);
        let sol = solve_momentum(&p, &s, &[12.0], &[2.0], &[0.1], None).unwrap();
        assert_relative_eq!(sol.velocities[0], 3.0, epsilon = 1e-12);

        let mag = LagrangianModel::magnetic(
            MechanicalData::parse(2, &["1", "0", "0", "1"], Some(&["1", "0"]), "0").unwrap(),
        );
        let s = CyclicSplit::new(2, &[0]).unwrap();
        assert_relative_eq!(momentum(&mag, &s, &[0.0, 0.0], &[2.0, -1.0]).unwrap()[0], 3.0);
        let sol = solve_momentum(&mag, &s, &[3.0], &[0.0], &[-1.0], None).unwrap();
        assert_relative_eq!(sol.velocities[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn singular_block_and_nonconvergence() {
        let l = parse_lagrangian(2, "v1 + 0.5*v2^2").unwrap();
        let s = CyclicSplit::new(2, &[0]).unwrap();
        assert_eq!(solve_momentum(&l, &s, &[2.0], &[0.0], &[1.0], None), Err(Error::SingularBlock));
    }

    #[test]
    fn nonlinear_momentum_relation() {
        // ∂L/∂v1 = v1 + v1^3 is monotone; Newton from zero converges.
        let l = parse_lagrangian(2, "0.5*v1^2 + 0.25*v1^4 + 0.5*v2^2 - x2^2").unwrap();
        let s = CyclicSplit::new(2, &[0]).unwrap();
        let sol = solve_momentum(&l, &s, &[10.0], &[0.3], &[0.2], None).unwrap();
        assert_relative_eq!(sol.velocities[0], 2.0, epsilon = 1e-12);
        assert!(sol.residual <= 1e-12 * 11.0);
    }

    #[test]
    fn routhian_closed_forms() {
        // ½(y1² + v²) − V: L_μ = ½v² − V − ½μ².
        let l = parse_lagrangian(2, "0.5*(v1^2 + v2^2) - cos(x2)").unwrap();
        let s = CyclicSplit::new(2, &[0]).unwrap();
        let mu = 1.7;
        let r = routhian(&l, &s, &[mu]).unwrap();
        for &(x, v) in &[(0.3, 0.4), (-1.2, 2.0)] {
            let expect = 0.5 * v * v - f64::cos(x) - 0.5 * mu * mu;
            assert_relative_eq!(r.value(&[x], &[v]).unwrap(), expect, epsilon = 1e-13);
        }

        // Polar: L_μ = ½ṙ² − μ²/(2r²) − V(r), V = −1/r.
        let p = polar();
        let s = CyclicSplit::new(2, &[1]).unwrap();
        let mu = 0.8;
        let r = routhian(&p, &s, &[mu]).unwrap();
        let closed = parse_lagrangian(1, &format!("0.5*v1^2 - {mu}^2/(2*x1^2) + 1/x1")).unwrap();
        for &(x, v) in &[(1.0, 0.3), (2.5, -1.0), (0.6, 0.0)] {
            let a = r.jet(&[x], &[v]).unwrap();
            let b = closed.jet(&[x], &[v]).unwrap();
            assert!(a.max_rel_diff(&b) < 1e-12, "{a:?} {b:?}");
        }
    }

    #[test]
    fn all_cyclic_is_rejected() {
        let free = parse_lagrangian(2, "0.5*(v1^2+v2^2)").unwrap();
        let s = CyclicSplit::new(2, &[0, 1]).unwrap();
        assert!(matches!(routhian(&free, &s, &[1.0, 1.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn cyclic_check_detects_dependence() {
        let p = polar();
        let pts = vec![(vec![1.0, 0.3], vec![0.2, 0.5])];
        assert!(check_cyclic(&p, &CyclicSplit::new(2, &[1]).unwrap(), &pts).is_ok());
        assert!(matches!(
            check_cyclic(&p, &CyclicSplit::new(2, &[0]).unwrap(), &pts),
            Err(Error::Invariance { index: 0, .. })
        ));
    }

    #[test]
    fn cumulative_simpson_is_exact_for_cubics_at_even_nodes() {
        let t: Vec<f64> = (0..11).map(|k| k as f64 * 0.1).collect();
        let f: Vec<f64> = t.iter().map(|s| 1.0 + 2.0 * s + 3.0 * s * s).collect();
        let c = cumulative_simpson(&t, &f);
        for (k, s) in t.iter().enumerate() {
            assert_relative_eq!(c[k], s + s * s + s * s * s, epsilon = 1e-14);
        }
        let f3: Vec<f64> = t.iter().map(|s| s * s * s).collect();
        let c3 = cumulative_simpson(&t, &f3);
        assert_relative_eq!(c3[10], 0.25, epsilon = 1e-14);
    }

    #[test]
    fn reconstruct_linear_drift_and_degenerate() {
        let free = parse_lagrangian(2, "0.5*(v1^2+v2^2)").unwrap();
        let s = CyclicSplit::new(2, &[0]).unwrap();
        let r = routhian(&free, &s, &[0.5]).unwrap();
        let opts = IntegrateOptions::new(1e-12, Sampling::Uniform(21));
        let red = integrate_el(&r, &[0.0], &[1.0], 2.0, &opts).unwrap();
        let rec = reconstruct(&free, &s, &[0.5], &red, &[3.0]).unwrap();
        for (t, x) in rec.trajectory.times.iter().zip(&rec.trajectory.positions) {
            assert_relative_eq!(x[0], 3.0 + 0.5 * t, epsilon = 1e-14);
        }
        assert!(rec.branch_warnings.is_empty());

        let single = Trajectory::single(vec![0.2], vec![1.0], 0.0);
        let rec = reconstruct(&free, &s, &[0.5], &single, &[1.0]).unwrap();
        assert_eq!(rec.trajectory.len(), 1);
        assert_eq!(rec.trajectory.positions[0], vec![1.0, 0.2]);
    }

    #[test]
    fn polar_reduction_matches_full_flow() {
        let p = polar();
        let s = CyclicSplit::new(2, &[1]).unwrap();
        let x0 = [1.0, 0.0];
        let y0 = [0.1, 1.1];
        let mu = momentum(&p, &s, &x0, &y0).unwrap();
        let rep = verify_reduction(&p, &s, &mu, &x0, &y0, 10.0, 1e-11).unwrap();
        assert!(rep.overall, "{rep:#?}");

        let err = verify_reduction(&p, &s, &[mu[0] + 0.1], &x0, &y0, 10.0, 1e-11).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn routhian_derivative_identities() {
        // ∂L_μ/∂yⁱ = ∂L/∂yⁱ∘ι_μ and ∂L_μ/∂xⁱ = ∂L/∂xⁱ∘ι_μ.
        let l = parse_lagrangian(3, "0.5*(1+x2^2)*v1^2 + 0.5*v2^2 + 0.5*v3^2 + 0.3*x2*v1*v3 + 0.1*v1^4 - x2*x3").unwrap();
        let s = CyclicSplit::new(3, &[0]).unwrap();
        let mu = [0.9];
        let r = routhian(&l, &s, &mu).unwrap();
        let mut rng = crate::sampling::rng(3);
        for _ in 0..50 {
            let xs = crate::sampling::in_box(&mut rng, 2, 1.0);
            let ys = crate::sampling::in_box(&mut rng, 2, 1.0);
            let jr = r.jet(&xs, &ys).unwrap();
            let sol = solve_momentum(&l, &s, &mu, &xs, &ys, None).unwrap();
            let xf = s.assemble(&xs, &[0.0]);
            let yf = s.assemble(&ys, &sol.velocities);
            let jl = l.jet(&xf, &yf).unwrap();
            for (c, &i) in s.shape().iter().enumerate() {
                assert!((jr.d_y[c] - jl.d_y[i]).abs() <= 1e-10);
                assert!((jr.d_x[c] - jl.d_x[i]).abs() <= 1e-10);
            }
            let fd = crate::calculus::fd_jet(&r, &xs, &ys, None).unwrap();
            assert!(jr.max_rel_diff(&fd) < 1e-6, "{}", jr.max_rel_diff(&fd));
        }
    }
}
