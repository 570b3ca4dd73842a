//! Descriptive statistics for the summary tables.
//!
//! Percentiles use linear interpolation between order statistics (the
//! "type 7" rule): for quantile `q` over `n` sorted values the 1-based rank
//! is `h = (n - 1) q + 1`, interpolated between `floor(h)` and `ceil(h)`.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("cannot summarize an empty list")]
    Empty,
    #[error("non-finite value {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatsRow {
    pub n: usize,
    pub mean: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    /// Sample standard deviation (n - 1 denominator); zero for one value.
    pub sd: f64,
    /// `sd / mean`, absent when the mean is zero.
    pub cv: Option<f64>,
    pub max: f64,
}

fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Result<StatsRow, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite(bad));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // Summing in sorted order makes the result independent of input order.
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        let ss: f64 = sorted.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(StatsRow {
        n,
        mean,
        p25: percentile_sorted(&sorted, 0.25),
        p50: percentile_sorted(&sorted, 0.5),
        p75: percentile_sorted(&sorted, 0.75),
        sd,
        cv: (mean != 0.0).then(|| sd / mean),
        max: sorted[n - 1],
    })
}
