//! Estimators and tests that turn distributional claims into pass/fail numbers.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grid::ScalarPath;

/// `Σ (Δp)²` over all grid steps.
pub fn realized_qv(path: &ScalarPath) -> f64 {
    path.increments().map(|d| d * d).sum()
}

/// `Σ (Δp)²` over the first `steps` grid steps.
pub fn realized_qv_until(path: &ScalarPath, steps: usize) -> f64 {
    path.increments().take(steps).map(|d| d * d).sum()
}

/// `Σ Δp₁·Δp₂` over all grid steps.
pub fn realized_cross_qv(p1: &ScalarPath, p2: &ScalarPath) -> Result<f64> {
    check_len(p1.len(), p2.len())?;
    Ok(p1.increments().zip(p2.increments()).map(|(a, b)| a * b).sum())
}

/// Sample mean and its standard error.
pub fn mean_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Pearson correlation; zero when either sample is constant.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sided two-sample Kolmogorov-Smirnov test with the asymptotic
/// Kolmogorov p-value at effective size `n_a n_b / (n_a + n_b)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("KS test needs two non-empty samples"));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::invalid("KS samples contain NaN"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let lambda = (na * nb / (na + nb)).sqrt() * d;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_survival(lambda),
    })
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let p = if lambda < 1.0 {
        // Jacobi-transformed series, fast for small λ
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp())
            .sum();
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        2.0 * s
    };
    p.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    /// Passes when `value > threshold`.
    PValue,
    /// Passes when `value < threshold`.
    Gap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub kind: ReportKind,
    pub statistic: f64,
    pub value: f64,
    pub n_samples: usize,
    pub threshold: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl TestReport {
    pub fn new(
        name: impl Into<String>,
        kind: ReportKind,
        statistic: f64,
        value: f64,
        n_samples: usize,
        threshold: f64,
    ) -> Self {
        let pass = match kind {
            ReportKind::PValue => value > threshold,
            ReportKind::Gap => value < threshold,
        };
        Self {
            name: name.into(),
            kind,
            statistic,
            value,
            n_samples,
            threshold,
            pass,
            note: String::new(),
        }
    }

    pub fn p_value(name: impl Into<String>, ks: KsResult, n_samples: usize, threshold: f64) -> Self {
        Self::new(name, ReportKind::PValue, ks.statistic, ks.p_value, n_samples, threshold)
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

/// z-score of `estimate` against `target`; an exact hit with zero standard
/// error scores zero.
fn z_score(estimate: f64, target: f64, se: f64) -> f64 {
    let diff = estimate - target;
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Sample mean, unbiased variance and the standard error of that variance
/// from the fourth central moment.
fn moments(samples: &[f64]) -> (f64, f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let m2 = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = samples.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    (mean, m2 * n / (n - 1.0), ((m4 - m2 * m2).max(0.0) / n).sqrt())
}

/// Mean and variance bands. The report value is the larger `|z|`; it passes
/// when both are below 3.
pub fn moment_report(name: impl Into<String>, samples: &[f64], target_mean: f64, target_var: f64) -> TestReport {
    let (mean, var, var_se) = moments(samples);
    let z_mean = z_score(mean, target_mean, (var / samples.len() as f64).sqrt());
    let z_var = z_score(var, target_var, var_se);
    let worst = z_mean.abs().max(z_var.abs());
    TestReport::new(name, ReportKind::Gap, worst, worst, samples.len(), 3.0).with_note(format!(
        "mean {mean:.6} (target {target_mean:.6}, z {z_mean:.2}); var {var:.6} (target {target_var:.6}, z {z_var:.2})"
    ))
}

/// Variance within `k` standard errors of `target`; the mean is free.
pub fn variance_band(name: impl Into<String>, samples: &[f64], target: f64, k: f64) -> TestReport {
    let (_, var, se) = moments(samples);
    let z = z_score(var, target, se).abs();
    TestReport::new(name, ReportKind::Gap, var, z, samples.len(), k)
        .with_note(format!("var {var:.6} target {target:.6} se {se:.2e}"))
}

/// Mean of `samples` within `k` standard errors of `target`.
pub fn mean_band(name: impl Into<String>, samples: &[f64], target: f64, k: f64) -> TestReport {
    let (mean, se) = mean_se(samples);
    let z = z_score(mean, target, se).abs();
    TestReport::new(name, ReportKind::Gap, mean, z, samples.len(), k)
        .with_note(format!("mean {mean:.6} target {target:.6} se {se:.2e}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnRung {
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnDiagnostic {
    pub rungs: Vec<RnRung>,
    /// Every consecutive drop exceeds two combined standard errors.
    pub strictly_decreasing: bool,
    /// Last rung mean over first rung mean.
    pub final_ratio: f64,
}

/// Second moments `E[R²]` per ladder rung from per-sample squared values.
pub fn rn_diagnostic(rungs: &[(usize, Vec<f64>)]) -> RnDiagnostic {
    let rungs: Vec<RnRung> = rungs
        .iter()
        .map(|(n, sq)| {
            let (mean, se) = mean_se(sq);
            RnRung { n: *n, mean, se }
        })
        .collect();
    let strictly_decreasing = rungs.len() > 1
        && rungs
            .windows(2)
            .all(|w| w[0].mean - w[1].mean > 2.0 * (w[0].se.powi(2) + w[1].se.powi(2)).sqrt());
    let final_ratio = match (rungs.first(), rungs.last()) {
        (Some(a), Some(b)) if a.mean > 0.0 => b.mean / a.mean,
        _ => f64::NAN,
    };
    RnDiagnostic {
        rungs,
        strictly_decreasing,
        final_ratio,
    }
}
