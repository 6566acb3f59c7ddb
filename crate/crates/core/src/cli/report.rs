use std::fmt;

/// One measured residual against its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            residual,
            tolerance,
        }
    }

    /// NaN residuals fail.
    pub fn passed(&self) -> bool {
        self.residual.abs() <= self.tolerance
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub checks: Vec<Check>,
    /// Checks that could not run for this configuration, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl Report {
    pub fn push(&mut self, name: impl Into<String>, residual: f64, tolerance: f64) {
        self.checks.push(Check::new(name, residual, tolerance));
    }

    pub fn skip(&mut self, name: impl Into<String>, reason: impl Into<String>) {
        self.skipped.push((name.into(), reason.into()));
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed()).count()
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {:<40} residual={:.3e} tolerance={:.3e}",
                if c.passed() { "PASS" } else { "FAIL" },
                c.name,
                c.residual.abs(),
                c.tolerance
            )?;
        }
        for (name, reason) in &self.skipped {
            writeln!(f, "SKIP {name:<40} {reason}")?;
        }
        let failed: Vec<&str> = self
            .checks
            .iter()
            .filter(|c| !c.passed())
            .map(|c| c.name.as_str())
            .collect();
        if failed.is_empty() {
            writeln!(f, "all {} checks passed", self.checks.len())
        } else {
            writeln!(f, "failed: {}", failed.join(", "))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_residuals_fail_and_failures_are_named() {
        let mut r = Report::default();
        r.push("ok", -1e-9, 1e-8);
        r.push("bad", f64::NAN, 1.0);
        r.push("loose", 2.0, 1.0);
        assert_eq!(r.failures(), 2);
        let text = r.to_string();
        assert!(text.contains("PASS ok"));
        assert!(text.contains("failed: bad, loose"));
    }
}
