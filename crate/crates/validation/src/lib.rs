//! Reporting and Monte Carlo summary helpers for the acceptance run.

use std::fmt;
use std::time::Duration;

use elliptical_moments::harness::{ReplicateRecord, SummaryRow};

/// One assertion inside a criterion.
#[derive(Debug, Clone)]
pub struct Check {
    pub label: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(label: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check { label: label.into(), pass, detail: detail.into() }
    }

    /// `|got − want| ≤ tol`.
    pub fn near(label: impl Into<String>, got: f64, want: f64, tol: f64) -> Self {
        let err = (got - want).abs();
        Check::new(label, err <= tol, format!("{got:.6} vs {want:.6} (|Δ| = {err:.2e}, tol {tol:.0e})"))
    }

    /// `|got/want − 1| ≤ rel`.
    pub fn within_rel(label: impl Into<String>, got: f64, want: f64, rel: f64) -> Self {
        let dev = (got / want - 1.0).abs();
        Check::new(
            label,
            dev <= rel,
            format!("{got:.4} vs {want:.4} ({:+.1}%, tol ±{:.0}%)", 100.0 * (got / want - 1.0), 100.0 * rel),
        )
    }

    /// `got ∈ [lo, hi]`.
    pub fn in_range(label: impl Into<String>, got: f64, lo: f64, hi: f64) -> Self {
        Check::new(label, (lo..=hi).contains(&got), format!("{got:.4} in [{lo}, {hi}]"))
    }

    /// `|mean − want| ≤ k·se`.
    pub fn within_se(label: impl Into<String>, mean: f64, se: f64, want: f64, k: f64) -> Self {
        let z = (mean - want) / se;
        Check::new(label, z.abs() <= k, format!("{mean:.4} ± {se:.4} vs {want:.4} (z = {z:+.2}, limit {k})"))
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: String,
    pub title: String,
    pub checks: Vec<Check>,
    pub elapsed: Duration,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass() { "PASS" } else { "FAIL" };
        write!(f, "{verdict} [{}] {} ({:.1} s)", self.id, self.title, self.elapsed.as_secs_f64())?;
        for c in &self.checks {
            write!(f, "\n    {} {}: {}", if c.pass { "ok " } else { "bad" }, c.label, c.detail)?;
        }
        Ok(())
    }
}

/// Mean and its standard error (`n − 1` variance).
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sample variance and its large-sample standard error
/// `√((m₄ − s⁴)/n)`.
pub fn variance_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    (m2 * n / (n - 1.0), ((m4 - m2 * m2) / n).sqrt())
}

pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn row<'a>(summary: &'a [SummaryRow], n: usize, p: usize, estimator: &str) -> &'a SummaryRow {
    summary
        .iter()
        .find(|r| r.n == n && r.p == p && r.estimator == estimator)
        .unwrap_or_else(|| panic!("no summary row for n={n} p={p} {estimator}"))
}

/// Successful `θ̂` values of one estimator in one cell.
pub fn values(records: &[ReplicateRecord], n: usize, p: usize, estimator: &str) -> Vec<f64> {
    records.iter().filter(|r| r.n == n && r.p == p && r.estimator == estimator).filter_map(|r| r.theta_hat).collect()
}
