//! Command implementations behind the `aifgen` binary.

use std::fmt;
use std::path::{Path, PathBuf};

use aifgen_bench::{cross_check, emit_report, merge_reports, run_bench, BenchConfig, Report, ReportFormat};
use aifgen_core::build::{build_all_with, BuildOptions};
use aifgen_core::{
    convert_as, load_model, BuildConfig, CalibrationSet, ConvertedVariant, Error as CoreError,
    ModelGraph, Precision, TargetProfile, TargetRegistry,
};
use aifgen_server::settings::Overrides;
use aifgen_server::{serve, ServeOptions};
use clap::{Args, Parser, Subcommand};

pub const BUILD_REPORT_FILE: &str = "build_report.json";

#[derive(Debug, Parser)]
#[command(name = "aifgen", version, about = "Build, serve and benchmark inference services for several targets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a model for each target and write one server bundle per target
    Build(BuildArgs),
    /// Serve a bundle over HTTP until interrupted
    Serve(ServeArgs),
    /// Benchmark a running server
    Bench(BenchArgs),
    /// Merge benchmark reports and compute speedups against a baseline
    Report(ReportArgs),
    /// List the registered target profiles
    Targets(TargetsArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Model package directory (or its model.json)
    #[arg(long)]
    pub model: PathBuf,
    /// YAML build configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated target names; defaults to every registered target
    #[arg(long, value_delimiter = ',')]
    pub targets: Option<Vec<String>>,
    /// Calibration tensors, required by INT8 targets
    #[arg(long)]
    pub calib: Option<PathBuf>,
    #[arg(long, default_value = "bundles")]
    pub out: PathBuf,
    /// Maximum number of targets built at once
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Make conversion fail for the named target (exercises failure isolation)
    #[arg(long, hide = true)]
    pub inject_failure: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    /// Requests allowed to wait behind the one in flight
    #[arg(long)]
    pub queue_capacity: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Base URL of the server, e.g. http://127.0.0.1:8080
    #[arg(long)]
    pub server: String,
    /// Tensor container with the request samples
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    #[arg(long, default_value_t = 10_000)]
    pub timeout_ms: u64,
    /// Model name prepended to the variant id
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "json", value_parser = parse_format)]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Benchmark JSON reports to merge
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub baseline: String,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TargetsArgs {
    /// Build configuration whose `register_targets` extend the list
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Append the framework label as a fourth column
    #[arg(long)]
    pub frameworks: bool,
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse()
}

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Runtime(String),
    Connectivity(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Connectivity(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) | Failure::Connectivity(m) => f.write_str(m),
        }
    }
}

fn invalid(e: impl fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Build(a) => cmd_build(&a),
        Command::Serve(a) => cmd_serve(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Report(a) => cmd_report(&a),
        Command::Targets(a) => {
            print!("{}", cmd_targets(a.config.as_deref(), a.frameworks)?);
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<BuildConfig, Failure> {
    match path {
        Some(p) => BuildConfig::load(p).map_err(invalid),
        None => Ok(BuildConfig::default()),
    }
}

fn model_dir(path: &Path) -> &Path {
    if path.is_file() {
        path.parent().unwrap_or(Path::new("."))
    } else {
        path
    }
}

/// `name | platform | precision`, one line per profile, optionally followed
/// by `| framework`.
pub fn target_rows(registry: &TargetRegistry, frameworks: bool) -> Vec<String> {
    registry
        .list()
        .iter()
        .map(|p| {
            let row = format!("{} | {} | {}", p.name, p.platform_label, p.precision_label());
            if frameworks {
                format!("{row} | {}", p.framework_label)
            } else {
                row
            }
        })
        .collect()
}

pub fn cmd_targets(config: Option<&Path>, frameworks: bool) -> Result<String, Failure> {
    let registry = load_config(config)?.registry().map_err(invalid)?;
    Ok(target_rows(&registry, frameworks)
        .into_iter()
        .map(|r| r + "\n")
        .collect())
}

pub fn cmd_build(args: &BuildArgs) -> Result<(), Failure> {
    let config = load_config(args.config.as_deref())?;
    let registry = config.registry().map_err(invalid)?;
    let graph: ModelGraph = load_model(model_dir(&args.model)).map_err(invalid)?;
    let targets = args
        .targets
        .clone()
        .or_else(|| config.targets.clone())
        .unwrap_or_else(|| registry.names());
    let calib_path = args.calib.clone().or_else(|| config.calib.clone());
    let calib = calib_path
        .map(|p| CalibrationSet::load(&p, &graph.input_shape))
        .transpose()
        .map_err(invalid)?;

    let inject = &args.inject_failure;
    let convert = |g: &ModelGraph, t: &TargetProfile, p: Precision, c: Option<&CalibrationSet>| -> aifgen_core::Result<ConvertedVariant> {
        if inject.contains(&t.name) {
            return Err(CoreError::Validation(format!("injected failure for {}", t.name)));
        }
        convert_as(g, t, p, c)
    };
    let output = build_all_with(
        &graph,
        &targets,
        &config.server_config(),
        calib.as_ref(),
        &args.out,
        &registry,
        &BuildOptions {
            max_concurrency: args.jobs,
        },
        &convert,
    )
    .map_err(invalid)?;

    let report_path = args.out.join(BUILD_REPORT_FILE);
    let mut json = serde_json::to_vec_pretty(&output.report).expect("report serializes");
    json.push(b'\n');
    std::fs::write(&report_path, json)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", report_path.display())))?;
    print!("{}", output.report.render_table());
    println!("report: {}", report_path.display());

    let failed: Vec<_> = output.report.failed().map(|e| e.target.clone()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!("failed targets: {}", failed.join(", "))))
    }
}

pub fn cmd_serve(args: &ServeArgs) -> Result<(), Failure> {
    let server = serve(
        &args.bundle,
        ServeOptions {
            overrides: Overrides {
                host: args.host.clone(),
                port: args.port,
                queue_capacity: args.queue_capacity,
                ..Overrides::default()
            },
            ..ServeOptions::default()
        },
    )
    .map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("listening on {}", server.addr());
    server
        .wait_for_interrupt()
        .map_err(|e| Failure::Runtime(e.to_string()))
}

pub fn cmd_bench(args: &BenchArgs) -> Result<(), Failure> {
    let config = BenchConfig {
        request_count: args.count,
        warmup_count: args.warmup,
        timeout_ms: args.timeout_ms,
        model: args.model.clone(),
        ..BenchConfig::new(args.server.clone(), args.dataset.clone())
    };
    let result = run_bench(&config).map_err(|e| match e {
        aifgen_bench::Error::Unreachable { .. } => Failure::Connectivity(e.to_string()),
        other => invalid(other),
    })?;
    emit_report(std::slice::from_ref(&result), &result.variant_id, args.format, &args.out)
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let s = &result.summary;
    let ms = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
    println!(
        "{}: {} ok, {} errors, mean {} ms, median {} ms, p90 {} ms, {} req/s",
        result.variant_id,
        s.count,
        result.errors,
        ms(s.mean_ms),
        ms(s.median_ms),
        ms(s.p90_ms),
        s.throughput_rps.map_or("-".to_string(), |v| format!("{v:.1}")),
    );
    let verdict = cross_check(&result);
    if verdict.is_ok() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!(
            "cross-check failed: {}",
            verdict.problems.join("; ")
        )))
    }
}

pub fn cmd_report(args: &ReportArgs) -> Result<(), Failure> {
    let reports = args
        .inputs
        .iter()
        .map(|p| Report::load(p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(invalid)?;
    let results = merge_reports(&reports);
    emit_report(&results, &args.baseline, args.format, &args.out).map_err(|e| match e {
        aifgen_bench::Error::Io { .. } => Failure::Runtime(e.to_string()),
        other => invalid(other),
    })?;
    println!(
        "{} variants, baseline {}: {}",
        results.len(),
        args.baseline,
        args.out.display()
    );
    Ok(())
}
