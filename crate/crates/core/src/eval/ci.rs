//! Summary statistics over bootstrap replicate scores.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    /// `mean +- t(0.975, B - 1) * sd / sqrt(B)`
    #[default]
    T,
    /// 2.5th and 97.5th percentiles of the scores, linearly interpolated.
    Percentile,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (denominator `n - 1`).
pub fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Two-sided 95% Student-t multiplier.
pub fn t_multiplier(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("df is positive")
        .inverse_cdf(0.975)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(scores: &[f64], method: CiMethod) -> Result<Summary> {
    if scores.len() < 2 {
        return Err(Error::Config(format!("need at least 2 scores, got {}", scores.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::data("non-finite replicate score"));
    }
    let m = mean(scores);
    let sd = sample_sd(scores);
    let se = sd / (scores.len() as f64).sqrt();
    let (low, high) = match method {
        CiMethod::T => {
            let half = t_multiplier(scores.len() - 1) * se;
            (m - half, m + half)
        }
        CiMethod::Percentile => {
            let mut sorted = scores.to_vec();
            sorted.sort_by(f64::total_cmp);
            (percentile(&sorted, 0.025), percentile(&sorted, 0.975))
        }
    };
    // Identical scores can leave rounding noise in either direction.
    Ok(Summary { mean: m, std_error: se, ci_low: low.min(m), ci_high: high.max(m) })
}

/// 95% interval for the mean of `scores`.
pub fn confidence_interval(scores: &[f64]) -> Result<(f64, f64)> {
    let s = summarize(scores, CiMethod::T)?;
    Ok((s.ci_low, s.ci_high))
}
