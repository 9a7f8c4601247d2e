use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// Passes when `value ≤ tolerance`.
    AtMost,
    /// Passes when `value ≥ tolerance`.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub label: String,
    pub value: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub pass: bool,
}

/// Outcome of a numerical check; `overall` is the conjunction of every
/// metric's `pass` flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub name: String,
    pub metrics: Vec<Metric>,
    pub overall: bool,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default)]
    pub artifacts: Vec<String>,
    /// Set when a metric failed because the computation itself broke down
    /// (see [`Error::is_numerical`]).
    #[serde(default)]
    pub numerical_failure: bool,
}

impl VerificationReport {
    pub fn new(name: impl Into<String>) -> Self {
        VerificationReport {
            name: name.into(),
            metrics: Vec::new(),
            overall: true,
            notes: Vec::new(),
            artifacts: Vec::new(),
            numerical_failure: false,
        }
    }

    fn push(&mut self, label: String, value: f64, tolerance: f64, comparison: Comparison) -> bool {
        let pass = match comparison {
            Comparison::AtMost => value <= tolerance,
            Comparison::AtLeast => value >= tolerance,
        };
        self.overall &= pass;
        self.metrics.push(Metric {
            label,
            value,
            tolerance,
            comparison,
            pass,
        });
        pass
    }

    pub fn at_most(&mut self, label: impl Into<String>, value: f64, tolerance: f64) -> bool {
        self.push(label.into(), value, tolerance, Comparison::AtMost)
    }

    pub fn at_least(&mut self, label: impl Into<String>, value: f64, tolerance: f64) -> bool {
        self.push(label.into(), value, tolerance, Comparison::AtLeast)
    }

    /// Records a failed metric for a computation that errored.
    pub fn error(&mut self, label: impl Into<String>, err: &Error) {
        let label = label.into();
        self.notes.push(format!("{label}: {err}"));
        self.numerical_failure |= err.is_numerical();
        self.push(label, f64::NAN, 0.0, Comparison::AtMost);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Appends another report's metrics under a label prefix.
    pub fn merge(&mut self, prefix: &str, other: VerificationReport) {
        for m in other.metrics {
            self.push(format!("{prefix}/{}", m.label), m.value, m.tolerance, m.comparison);
        }
        self.notes
            .extend(other.notes.into_iter().map(|n| format!("{prefix}: {n}")));
        self.artifacts.extend(other.artifacts);
        self.numerical_failure |= other.numerical_failure;
    }

    pub fn metric(&self, label: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.label == label)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Metric> {
        self.metrics.iter().filter(|m| !m.pass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overall_is_conjunction() {
        let mut r = VerificationReport::new("t");
        assert!(r.overall);
        r.at_most("a", 1e-9, 1e-8);
        r.at_least("b", 3.0, 2.0);
        assert!(r.overall);
        r.at_most("c", f64::NAN, 1.0);
        assert!(!r.overall);
        assert_eq!(r.failures().count(), 1);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"overall\":false"));
    }
}
