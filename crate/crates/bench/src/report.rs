//! Comparison reports over several benchmarked variants.

use std::fs;
use std::path::Path;

use aifgen_core::Boxplot;
use serde::{Deserialize, Serialize};

use crate::client::BenchResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            _ => Err(format!("unknown report format `{s}` (expected json or csv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    #[serde(flatten)]
    pub result: BenchResult,
    pub boxplot: Option<Boxplot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub generated_at: String,
    pub baseline: String,
    pub variants: Vec<VariantReport>,
}

impl Report {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_slice(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn results(&self) -> Vec<BenchResult> {
        self.variants.iter().map(|v| v.result.clone()).collect()
    }
}

/// One CSV row; column order is the field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub variant_id: String,
    pub count: usize,
    pub mean_ms: Option<f64>,
    pub median_ms: Option<f64>,
    pub p90_ms: Option<f64>,
    pub min_ms: Option<f64>,
    pub max_ms: Option<f64>,
    pub throughput_rps: Option<f64>,
    pub speedup_vs_baseline: Option<f64>,
}

fn baseline_of<'a>(results: &'a [BenchResult], baseline: &str) -> Result<&'a BenchResult> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let mut seen = std::collections::BTreeSet::new();
    for r in results {
        if !seen.insert(r.variant_id.as_str()) {
            return Err(Error::DuplicateVariant(r.variant_id.clone()));
        }
    }
    results
        .iter()
        .find(|r| r.variant_id == baseline)
        .ok_or_else(|| Error::UnknownBaseline(baseline.to_string()))
}

pub fn build_report(results: &[BenchResult], baseline: &str) -> Result<Report> {
    baseline_of(results, baseline)?;
    Ok(Report {
        generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        baseline: baseline.to_string(),
        variants: results
            .iter()
            .map(|r| VariantReport {
                boxplot: Boxplot::from_values(&r.client_latencies_ms),
                result: r.clone(),
            })
            .collect(),
    })
}

/// Speedup is the baseline's mean latency over the variant's.
pub fn csv_rows(results: &[BenchResult], baseline: &str) -> Result<Vec<CsvRow>> {
    let base_mean = baseline_of(results, baseline)?.summary.mean_ms;
    Ok(results
        .iter()
        .map(|r| {
            let s = &r.summary;
            let speedup = match (base_mean, s.mean_ms) {
                (Some(b), Some(m)) if m > 0.0 => Some(b / m),
                _ => None,
            };
            CsvRow {
                variant_id: r.variant_id.clone(),
                count: s.count,
                mean_ms: s.mean_ms,
                median_ms: s.median_ms,
                p90_ms: s.p90_ms,
                min_ms: s.min_ms,
                max_ms: s.max_ms,
                throughput_rps: s.throughput_rps,
                speedup_vs_baseline: speedup,
            }
        })
        .collect())
}

pub fn render_csv(results: &[BenchResult], baseline: &str) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in csv_rows(results, baseline)? {
        w.serialize(row).expect("writing to memory");
    }
    Ok(String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv is utf-8"))
}

pub fn emit_report(results: &[BenchResult], baseline: &str, format: ReportFormat, out_path: &Path) -> Result<()> {
    let bytes = match format {
        ReportFormat::Json => {
            let report = build_report(results, baseline)?;
            let mut v = serde_json::to_vec_pretty(&report).expect("report serializes");
            v.push(b'\n');
            v
        }
        ReportFormat::Csv => render_csv(results, baseline)?.into_bytes(),
    };
    if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(out_path, bytes).map_err(|source| Error::Io {
        path: out_path.to_path_buf(),
        source,
    })
}

/// Reads CSV rows back, for checking emitted files.
pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })
}

/// Concatenates the variants of several reports, in input order.
pub fn merge_reports(reports: &[Report]) -> Vec<BenchResult> {
    reports.iter().flat_map(Report::results).collect()
}
