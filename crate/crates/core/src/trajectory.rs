use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{IntegratorStats, OdeSolution};

/// Time-stamped states `(x, v)` of a second-order flow, with a log of the
/// quantity the flow is expected to conserve (energy for Euler-Lagrange
/// flows, `F` for canonical geodesics, the level function for projectively
/// shifted sprays).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub energy_log: Vec<f64>,
    pub stats: IntegratorStats,
}

impl Trajectory {
    pub fn single(x: Vec<f64>, v: Vec<f64>, energy: f64) -> Self {
        Trajectory {
            times: vec![0.0],
            positions: vec![x],
            velocities: vec![v],
            energy_log: vec![energy],
            stats: IntegratorStats::default(),
        }
    }

    /// Splits first-order states `(x, v)` of length `2n` into a trajectory.
    pub(crate) fn from_solution(sol: OdeSolution, n: usize) -> Self {
        let mut positions = Vec::with_capacity(sol.y.len());
        let mut velocities = Vec::with_capacity(sol.y.len());
        for s in &sol.y {
            positions.push(s[..n].to_vec());
            velocities.push(s[n..].to_vec());
        }
        Trajectory {
            times: sol.t,
            positions,
            velocities,
            energy_log: Vec::new(),
            stats: sol.stats,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    /// `max |log(t) − log(0)|`.
    pub fn max_drift(&self) -> f64 {
        let Some(&first) = self.energy_log.first() else {
            return 0.0;
        };
        self.energy_log
            .iter()
            .map(|e| (e - first).abs())
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.times.len();
        if self.positions.len() != m || self.velocities.len() != m {
            return Err(Error::Precondition("trajectory columns differ in length".into()));
        }
        if !self.energy_log.is_empty() && self.energy_log.len() != m {
            return Err(Error::Precondition("energy log length differs from times".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Precondition("times must be strictly increasing".into()));
        }
        let n = self.dim();
        if self
            .positions
            .iter()
            .chain(&self.velocities)
            .any(|s| s.len() != n)
        {
            return Err(Error::Precondition("inconsistent state dimensions".into()));
        }
        Ok(())
    }

    /// Copy with the sample order reversed in time (positions traversed
    /// backwards, velocities negated, times `t_end − t`).
    pub fn reversed(&self) -> Trajectory {
        let t_end = self.times.last().copied().unwrap_or(0.0);
        Trajectory {
            times: self.times.iter().rev().map(|t| t_end - t).collect(),
            positions: self.positions.iter().rev().cloned().collect(),
            velocities: self
                .velocities
                .iter()
                .rev()
                .map(|v| v.iter().map(|c| -c).collect())
                .collect(),
            energy_log: self.energy_log.iter().rev().copied().collect(),
            stats: self.stats,
        }
    }
}
