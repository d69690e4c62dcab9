//! Closed-loop benchmark client: one outstanding request at a time.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use aifgen_core::tensor::load_tensors;
use aifgen_core::{DType, MetricsSummary};
use aifgen_server::wire::{Health, InferRequest, WireTensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub server_url: String,
    pub dataset_ref: PathBuf,
    pub request_count: usize,
    /// Requests sent first and left out of the statistics.
    pub warmup_count: usize,
    pub timeout_ms: u64,
    /// Prefix for the variant id, usually the model name.
    pub model: Option<String>,
}

impl BenchConfig {
    pub fn new(server_url: impl Into<String>, dataset_ref: impl Into<PathBuf>) -> Self {
        Self {
            server_url: server_url.into(),
            dataset_ref: dataset_ref.into(),
            request_count: 1000,
            warmup_count: 10,
            timeout_ms: 10_000,
            model: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.request_count == 0 {
            return Err(Error::Config("request_count must be >= 1".into()));
        }
        if self.timeout_ms == 0 {
            return Err(Error::Config("timeout_ms must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub variant_id: String,
    #[serde(rename = "latencies_ms")]
    pub client_latencies_ms: Vec<f64>,
    pub summary: MetricsSummary,
    pub server_summary: MetricsSummary,
    pub errors: usize,
    pub request_count: usize,
    pub warmup_count: usize,
    #[serde(default)]
    pub warmup_errors: usize,
    /// Server request count observed before the first warmup request.
    #[serde(default)]
    pub server_count_before: usize,
}

/// Outcome of comparing client-side and server-side statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub problems: Vec<String>,
}

impl Verdict {
    pub fn is_ok(&self) -> bool {
        self.problems.is_empty()
    }
}

fn trim_url(url: &str) -> &str {
    url.trim_end_matches('/')
}

fn agent(timeout_ms: u64) -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_millis(timeout_ms)))
        .build()
        .into()
}

fn get_json<T: serde::de::DeserializeOwned>(agent: &ureq::Agent, url: &str) -> std::result::Result<T, String> {
    let mut resp = agent.get(url).call().map_err(|e| e.to_string())?;
    if resp.status() != 200 {
        return Err(format!("{url} answered {}", resp.status()));
    }
    resp.body_mut().read_json().map_err(|e| e.to_string())
}

pub fn fetch_health(server_url: &str, timeout_ms: u64) -> Result<Health> {
    let url = format!("{}/api/health", trim_url(server_url));
    get_json(&agent(timeout_ms), &url).map_err(|reason| Error::Unreachable {
        url: server_url.to_string(),
        reason,
    })
}

pub fn fetch_metrics(server_url: &str, timeout_ms: u64) -> Result<MetricsSummary> {
    let url = format!("{}/api/metrics", trim_url(server_url));
    get_json(&agent(timeout_ms), &url).map_err(|reason| Error::Unreachable {
        url: server_url.to_string(),
        reason,
    })
}

/// Request bodies, one per dataset sample.
fn load_bodies(config: &BenchConfig) -> Result<Vec<String>> {
    let samples = load_tensors(&config.dataset_ref)?;
    if samples.is_empty() {
        return Err(Error::Config(format!(
            "dataset {} has no samples",
            config.dataset_ref.display()
        )));
    }
    samples
        .iter()
        .map(|s| {
            if s.dtype() != DType::F32 {
                return Err(Error::Config(format!("sample {} is not f32", s.name())));
            }
            let req = InferRequest {
                request_id: None,
                tensor: WireTensor::from_f32(s.shape().to_vec(), &s.to_f32_vec()?),
            };
            Ok(serde_json::to_string(&req).expect("request serializes"))
        })
        .collect()
}

/// Sends one request and returns its wall-clock latency, or `None` on any failure.
fn timed_request(agent: &ureq::Agent, url: &str, body: &str) -> Option<f64> {
    let start = Instant::now();
    let mut resp = agent
        .post(url)
        .header("content-type", "application/json")
        .send(body)
        .ok()?;
    let ok = resp.status() == 200;
    resp.body_mut().read_to_vec().ok()?;
    ok.then(|| start.elapsed().as_secs_f64() * 1e3)
}

pub fn run_bench(config: &BenchConfig) -> Result<BenchResult> {
    config.validate()?;
    let health = fetch_health(&config.server_url, config.timeout_ms)?;
    let bodies = load_bodies(config)?;
    let before = fetch_metrics(&config.server_url, config.timeout_ms)?;

    let agent = agent(config.timeout_ms);
    let url = format!("{}/api/infer", trim_url(&config.server_url));
    let mut samples = bodies.iter().cycle();

    let mut warmup_errors = 0;
    for _ in 0..config.warmup_count {
        if timed_request(&agent, &url, samples.next().unwrap()).is_none() {
            warmup_errors += 1;
        }
    }

    let mut latencies = Vec::with_capacity(config.request_count);
    let mut errors = 0;
    let started = Instant::now();
    for _ in 0..config.request_count {
        match timed_request(&agent, &url, samples.next().unwrap()) {
            Some(ms) => latencies.push(ms),
            None => errors += 1,
        }
    }
    let span = started.elapsed().as_secs_f64();

    let server_summary = fetch_metrics(&config.server_url, config.timeout_ms)?;
    let variant_id = match &config.model {
        Some(m) => format!("{m}-{}-{}", health.target, health.precision),
        None => format!("{}-{}", health.target, health.precision),
    };
    Ok(BenchResult {
        variant_id,
        summary: MetricsSummary::from_latencies(&latencies, Some(span)),
        client_latencies_ms: latencies,
        server_summary,
        errors,
        request_count: config.request_count,
        warmup_count: config.warmup_count,
        warmup_errors,
        server_count_before: before.count,
    })
}

/// Checks that the server saw exactly the requests that succeeded and that
/// its latencies, which exclude the network round trip, are not above the client's.
pub fn cross_check(result: &BenchResult) -> Verdict {
    let mut problems = Vec::new();
    if result.client_latencies_ms.len() + result.errors != result.request_count {
        problems.push(format!(
            "{} latencies + {} errors != {} requests",
            result.client_latencies_ms.len(),
            result.errors,
            result.request_count
        ));
    }
    let expected = (result.request_count + result.warmup_count)
        .saturating_sub(result.errors + result.warmup_errors);
    let served = result
        .server_summary
        .count
        .saturating_sub(result.server_count_before);
    if served != expected {
        problems.push(format!(
            "server counted {served} requests, expected {expected}"
        ));
    }
    if let (Some(server), Some(client)) = (result.server_summary.median_ms, result.summary.median_ms) {
        if server > client {
            problems.push(format!(
                "server median {server:.3} ms exceeds client median {client:.3} ms"
            ));
        }
    }
    if !result.summary.is_ordered() {
        problems.push("client statistics are not ordered".into());
    }
    if !result.server_summary.is_ordered() {
        problems.push("server statistics are not ordered".into());
    }
    Verdict { problems }
}
