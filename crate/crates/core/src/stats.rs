//! Latency statistics shared by the server metrics endpoint and the benchmark client.
//!
//! Percentiles use the nearest-rank definition: the `ceil(p/100 * n)`-th
//! smallest observation. The median is the middle order statistic for odd
//! `n` and the mean of the two middle ones for even `n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// 1-based nearest rank, clamped to `[1, n]`.
fn nearest_rank(p: f64, n: usize) -> usize {
    ((p * n as f64 / 100.0).ceil() as usize).clamp(1, n)
}

fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    sorted[nearest_rank(p, sorted.len()) - 1]
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

pub fn percentile(records: &[f64], p: f64) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::validation("percentile of an empty record set"));
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::validation(format!("percentile {p} outside (0, 100]")));
    }
    Ok(percentile_sorted(&sorted(records), p))
}

pub fn median(records: &[f64]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::validation("median of an empty record set"));
    }
    Ok(median_sorted(&sorted(records)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub count: usize,
    pub mean_ms: Option<f64>,
    pub median_ms: Option<f64>,
    pub p90_ms: Option<f64>,
    pub min_ms: Option<f64>,
    pub max_ms: Option<f64>,
    pub throughput_rps: Option<f64>,
    pub window: String,
}

impl MetricsSummary {
    pub fn empty() -> Self {
        Self {
            count: 0,
            mean_ms: None,
            median_ms: None,
            p90_ms: None,
            min_ms: None,
            max_ms: None,
            throughput_rps: None,
            window: "lifetime".into(),
        }
    }

    /// Summarizes `latencies_ms`; `span_secs` is the time between the first
    /// request's start and the last one's end.
    pub fn from_latencies(latencies_ms: &[f64], span_secs: Option<f64>) -> Self {
        if latencies_ms.is_empty() {
            return Self::empty();
        }
        let s = sorted(latencies_ms);
        let n = s.len();
        Self {
            count: n,
            mean_ms: Some(s.iter().sum::<f64>() / n as f64),
            median_ms: Some(median_sorted(&s)),
            p90_ms: Some(percentile_sorted(&s, 90.0)),
            min_ms: Some(s[0]),
            max_ms: Some(s[n - 1]),
            throughput_rps: span_secs.filter(|&t| t > 0.0).map(|t| n as f64 / t),
            window: "lifetime".into(),
        }
    }

    /// `min <= median <= p90 <= max`, vacuously true when empty.
    pub fn is_ordered(&self) -> bool {
        match (self.min_ms, self.median_ms, self.p90_ms, self.max_ms) {
            (Some(a), Some(b), Some(c), Some(d)) => a <= b && b <= c && c <= d,
            (None, None, None, None) => self.count == 0,
            _ => false,
        }
    }
}

/// Tukey boxplot: hinges are the medians of the lower and upper halves (the
/// middle value belongs to both halves when `n` is odd), whiskers reach the
/// most extreme observations within 1.5 IQR of the hinges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boxplot {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

impl Boxplot {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let s = sorted(values);
        let n = s.len();
        let half = n.div_ceil(2);
        let q1 = median_sorted(&s[..half]);
        let q3 = median_sorted(&s[n - half..]);
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside: Vec<f64> = s
            .iter()
            .copied()
            .filter(|v| (lo_fence..=hi_fence).contains(v))
            .collect();
        Some(Self {
            q1,
            q2: median_sorted(&s),
            q3,
            whisker_lo: inside.first().copied().unwrap_or(q1),
            whisker_hi: inside.last().copied().unwrap_or(q3),
            outliers: s
                .into_iter()
                .filter(|v| !(lo_fence..=hi_fence).contains(v))
                .collect(),
        })
    }
}
