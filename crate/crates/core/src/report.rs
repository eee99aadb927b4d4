//! Human-readable and JSON run reports.

use serde::Serialize;
use serde_json::Value;

use crate::coeffs::ConversionReport;

/// One asserted check: a residual compared against an echoed tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub task: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    /// Task-specific values that are reported but not asserted.
    pub data: serde_json::Map<String, Value>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(task: impl Into<String>) -> Self {
        Self {
            task: task.into(),
            passed: true,
            checks: Vec::new(),
            data: serde_json::Map::new(),
            notes: Vec::new(),
        }
    }

    /// Records `residual ≤ tolerance`.
    pub fn check(&mut self, name: impl Into<String>, residual: f64, tolerance: f64) -> bool {
        let passed = residual <= tolerance;
        self.push(name.into(), residual, tolerance, passed)
    }

    /// Records a check whose verdict is computed by the caller, e.g. a strict
    /// inequality or a rule with an error floor.
    pub fn check_with(&mut self, name: impl Into<String>, residual: f64, tolerance: f64, passed: bool) -> bool {
        self.push(name.into(), residual, tolerance, passed)
    }

    fn push(&mut self, name: String, residual: f64, tolerance: f64, passed: bool) -> bool {
        self.passed &= passed;
        self.checks.push(Check {
            name,
            residual,
            tolerance,
            passed,
        });
        passed
    }

    pub fn conversion(&mut self, prefix: &str, rep: &ConversionReport) -> bool {
        let mut ok = true;
        for (k, r) in &rep.residual_norms {
            ok &= self.check(format!("{prefix} {k}"), *r, rep.tolerance);
        }
        ok
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.data.insert(
            key.to_string(),
            serde_json::to_value(value).expect("report values serialize"),
        );
    }

    pub fn note(&mut self, msg: impl Into<String>) {
        self.notes.push(msg.into());
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("task: {}\n", self.task);
        for c in &self.checks {
            s += &format!(
                "{} {}: residual {:.3e} (tolerance {:.3e})\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.residual,
                c.tolerance
            );
        }
        for n in &self.notes {
            s += &format!("note: {n}\n");
        }
        s += &format!("result: {}\n", if self.passed { "PASS" } else { "FAIL" });
        s
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_flag_follows_checks() {
        let mut r = Report::new("check");
        assert!(r.check("a", 0.0, 1e-10));
        assert!(r.passed);
        assert!(!r.check("b", 2e-10, 1e-10));
        assert!(!r.passed);
        assert_eq!(r.failures().count(), 1);
        assert!(r.to_text().contains("FAIL b: residual 2.000e-10"));
        let v: Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["checks"][1]["tolerance"], 1e-10);
    }
}
