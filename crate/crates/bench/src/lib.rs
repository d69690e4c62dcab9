//! Benchmark client and report generation for served bundles.

pub mod client;
pub mod error;
pub mod report;

pub use client::{cross_check, fetch_health, fetch_metrics, run_bench, BenchConfig, BenchResult, Verdict};
pub use error::{Error, Result};
pub use report::{build_report, csv_rows, emit_report, merge_reports, read_csv, render_csv, CsvRow, Report, ReportFormat, VariantReport};
