//! Lifetime latency records of successfully served requests.

use std::sync::RwLock;

use aifgen_core::MetricsSummary;
use serde::{Deserialize, Serialize};

/// Timestamps are milliseconds on the server's monotonic clock, counted from startup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRecord {
    pub request_id: String,
    pub enqueue_ts: f64,
    pub start_ts: f64,
    pub end_ts: f64,
}

impl LatencyRecord {
    pub fn latency_ms(&self) -> f64 {
        self.end_ts - self.enqueue_ts
    }
}

#[derive(Debug, Default)]
pub struct MetricsStore {
    records: RwLock<Vec<LatencyRecord>>,
}

impl MetricsStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, record: LatencyRecord) {
        self.records.write().unwrap().push(record);
    }

    pub fn len(&self) -> usize {
        self.records.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Vec<LatencyRecord> {
        self.records.read().unwrap().clone()
    }

    /// Throughput is taken over the span from the earliest arrival to the latest completion.
    pub fn summary(&self) -> MetricsSummary {
        let records = self.records.read().unwrap();
        let latencies: Vec<f64> = records.iter().map(LatencyRecord::latency_ms).collect();
        let first = records.iter().map(|r| r.enqueue_ts).fold(f64::INFINITY, f64::min);
        let last = records.iter().map(|r| r.end_ts).fold(f64::NEG_INFINITY, f64::max);
        let span = (!records.is_empty()).then(|| (last - first) / 1e3);
        MetricsSummary::from_latencies(&latencies, span)
    }
}
