//! One-way ANOVA and Welch's t-test.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f: f64,
    pub p: f64,
    pub df_between: f64,
    pub df_within: f64,
    /// No variance at all, within or between groups.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    /// Two-sided.
    pub p: f64,
    /// Welch–Satterthwaite degrees of freedom.
    pub df: f64,
    pub degenerate: bool,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// Upper tail of the F distribution.
pub fn f_sf(f: f64, d1: f64, d2: f64) -> f64 {
    if f.is_infinite() {
        return 0.0;
    }
    if f <= 0.0 {
        return 1.0;
    }
    beta_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
}

/// Two-sided tail of Student's t distribution.
pub fn t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).min(1.0)
}

fn check_finite(groups: &[&[f64]]) -> Result<()> {
    if groups.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(Error::Config("statistics input contains a non-finite value".into()));
    }
    Ok(())
}

/// One-way ANOVA over at least two groups of at least two values each.
///
/// Groups with zero spread everywhere and equal means give F = 0, p = 1 and
/// the degenerate flag; zero spread with different means gives F = ∞, p = 0.
pub fn anova_oneway<G: AsRef<[f64]>>(groups: &[G]) -> Result<AnovaResult> {
    let groups: Vec<&[f64]> = groups.iter().map(|g| g.as_ref()).collect();
    if groups.len() < 2 || groups.iter().any(|g| g.len() < 2) {
        return Err(Error::Config("ANOVA needs at least two groups with two values each".into()));
    }
    check_finite(&groups)?;
    let n: usize = groups.iter().map(|g| g.len()).sum();
    let k = groups.len();
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in &groups {
        let m = mean(g);
        ss_between += g.len() as f64 * (m - grand).powi(2);
        ss_within += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let df_between = (k - 1) as f64;
    let df_within = (n - k) as f64;
    // spreads at rounding level of the data count as zero
    let scale = groups.iter().flat_map(|g| g.iter()).fold(0.0f64, |a, v| a.max(v.abs()));
    let tiny = (scale * 1e-12).powi(2) * n as f64;
    if ss_within <= tiny {
        let degenerate = ss_between <= tiny;
        let (f, p) = if degenerate { (0.0, 1.0) } else { (f64::INFINITY, 0.0) };
        return Ok(AnovaResult { f, p, df_between, df_within, degenerate });
    }
    let f = (ss_between / df_between) / (ss_within / df_within);
    Ok(AnovaResult { f, p: f_sf(f, df_between, df_within), df_between, df_within, degenerate: false })
}

/// Welch's unequal-variance t-test, two-sided; `t` is positive when `a`
/// has the larger mean.
///
/// Both samples constant and equal give t = 0, p = 1 (degenerate). Both
/// constant but different give t = ±∞, p = 0 with df = n_a + n_b − 2.
pub fn ttest_pairwise(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Config("t-test needs at least two values per sample".into()));
    }
    check_finite(&[a, b])?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a) / na, variance(b) / nb);
    let diff = mean(a) - mean(b);
    let se2 = va + vb;
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
    if se2 <= (scale * 1e-12).powi(2) {
        let df = na + nb - 2.0;
        if diff.abs() <= scale * 1e-12 {
            return Ok(TTestResult { t: 0.0, p: 1.0, df, degenerate: true });
        }
        return Ok(TTestResult { t: diff.signum() * f64::INFINITY, p: 0.0, df, degenerate: true });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(TTestResult { t, p: t_two_sided(t, df), df, degenerate: false })
}
