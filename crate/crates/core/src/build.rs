//! Parallel per-target builds: convert then compose, one pipeline per target.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bundle::{bundle_name, compose_server_bundle, BundleManifest, ServerConfig};
use crate::error::{Error, Result};
use crate::model::{validate_graph, ModelGraph};
use crate::quant::CalibrationSet;
use crate::target::{Precision, TargetProfile, TargetRegistry};
use crate::variant::{convert_as, ConvertedVariant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum TargetStatus {
    Ok,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildEntry {
    pub target: String,
    pub convert_ms: f64,
    pub compose_ms: f64,
    /// Time from the start of the build until this target's bundle was done.
    pub total_ms: f64,
    #[serde(flatten)]
    pub status: TargetStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub entries: Vec<BuildEntry>,
    pub wall_clock_ms: f64,
}

impl BuildReport {
    pub fn failed(&self) -> impl Iterator<Item = &BuildEntry> {
        self.entries
            .iter()
            .filter(|e| matches!(e.status, TargetStatus::Failed { .. }))
    }

    pub fn all_ok(&self) -> bool {
        self.failed().next().is_none()
    }

    pub fn entry(&self, target: &str) -> Option<&BuildEntry> {
        self.entries.iter().find(|e| e.target == target)
    }

    /// Fixed-width table for terminal output.
    pub fn render_table(&self) -> String {
        let mut out = format!(
            "{:<10} {:>12} {:>12} {:>12}  {}\n",
            "target", "convert_ms", "compose_ms", "total_ms", "status"
        );
        for e in &self.entries {
            let status = match &e.status {
                TargetStatus::Ok => "ok".to_string(),
                TargetStatus::Failed { reason } => format!("failed: {reason}"),
            };
            out.push_str(&format!(
                "{:<10} {:>12.2} {:>12.2} {:>12.2}  {}\n",
                e.target, e.convert_ms, e.compose_ms, e.total_ms, status
            ));
        }
        out.push_str(&format!("wall clock: {:.2} ms\n", self.wall_clock_ms));
        out
    }
}

#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub report: BuildReport,
    /// Manifests of the targets that built, sorted by target name.
    pub manifests: Vec<BundleManifest>,
}

#[derive(Debug, Clone, Default)]
pub struct BuildOptions {
    /// Upper bound on concurrent pipelines; falls back to `config.parallelism`.
    pub max_concurrency: Option<usize>,
}

/// Signature shared by [`convert_as`] and test doubles.
pub type ConvertFn<'a> = dyn Fn(&ModelGraph, &TargetProfile, Precision, Option<&CalibrationSet>) -> Result<ConvertedVariant>
    + Sync
    + 'a;

pub fn bundle_dir(out_root: &Path, graph: &ModelGraph, target: &str) -> PathBuf {
    out_root.join(bundle_name(&graph.name, target))
}

/// Builds one bundle per target under `out_root/<model>-<target>`.
pub fn build_all(
    graph: &ModelGraph,
    targets: &[String],
    config: &ServerConfig,
    calib: Option<&CalibrationSet>,
    out_root: &Path,
    registry: &TargetRegistry,
) -> Result<BuildOutput> {
    build_all_with(
        graph,
        targets,
        config,
        calib,
        out_root,
        registry,
        &BuildOptions::default(),
        &convert_as,
    )
}

type Slot = Option<(BuildEntry, Option<BundleManifest>)>;

struct Plan<'a> {
    profile: &'a TargetProfile,
    precision: Precision,
    config: ServerConfig,
}

#[allow(clippy::too_many_arguments)]
pub fn build_all_with(
    graph: &ModelGraph,
    targets: &[String],
    config: &ServerConfig,
    calib: Option<&CalibrationSet>,
    out_root: &Path,
    registry: &TargetRegistry,
    options: &BuildOptions,
    convert_fn: &ConvertFn<'_>,
) -> Result<BuildOutput> {
    let mut names: Vec<&str> = targets.iter().map(String::as_str).collect();
    names.sort_unstable();
    names.dedup();
    if names.is_empty() {
        return Err(Error::validation("no targets requested"));
    }

    // everything that can be rejected up front is rejected before any pipeline starts
    validate_graph(graph)?;
    config.validate()?;
    config
        .processing
        .validate(&graph.input_shape, graph.output_dim)?;
    let mut plans = Vec::with_capacity(names.len());
    for name in names {
        let profile = registry.get(name)?;
        let override_for_profile = config.precision_override.filter(|_| profile.is_configurable());
        let precision = profile.resolve_precision(override_for_profile)?;
        if precision == Precision::INT8 && calib.is_none() {
            return Err(Error::CalibrationRequired {
                target: profile.name.clone(),
                precision: precision.to_string(),
            });
        }
        plans.push(Plan {
            profile,
            precision,
            config: ServerConfig {
                precision_override: override_for_profile,
                ..config.clone()
            },
        });
    }

    let workers = options
        .max_concurrency
        .unwrap_or(config.parallelism)
        .clamp(1, plans.len());
    let start = Instant::now();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Slot>> = Mutex::new(vec![None; plans.len()]);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(plan) = plans.get(i) else { break };
                let outcome = run_pipeline(graph, plan, calib, out_root, start, convert_fn);
                results.lock().unwrap()[i] = Some(outcome);
            });
        }
    });

    let mut entries = Vec::with_capacity(plans.len());
    let mut manifests = Vec::new();
    for slot in results.into_inner().unwrap() {
        let (entry, manifest) = slot.expect("every plan runs exactly once");
        entries.push(entry);
        manifests.extend(manifest);
    }
    let wall_clock_ms = entries.iter().map(|e| e.total_ms).fold(0.0, f64::max);
    Ok(BuildOutput {
        report: BuildReport {
            entries,
            wall_clock_ms,
        },
        manifests,
    })
}

fn ms_between(a: Instant, b: Instant) -> f64 {
    b.duration_since(a).as_secs_f64() * 1e3
}

fn run_pipeline(
    graph: &ModelGraph,
    plan: &Plan<'_>,
    calib: Option<&CalibrationSet>,
    out_root: &Path,
    build_start: Instant,
    convert_fn: &ConvertFn<'_>,
) -> (BuildEntry, Option<BundleManifest>) {
    let name = plan.profile.name.clone();
    let t0 = Instant::now();
    let converted = convert_fn(graph, plan.profile, plan.precision, calib);
    let t1 = Instant::now();
    let (composed, t2) = match converted {
        Ok(variant) => {
            let dir = bundle_dir(out_root, graph, &name);
            let r = compose_server_bundle(&variant, plan.profile, &plan.config, &dir);
            (r, Instant::now())
        }
        Err(e) => (Err(e), t1),
    };
    let (status, manifest) = match composed {
        Ok(m) => (TargetStatus::Ok, Some(m)),
        Err(e) => (
            TargetStatus::Failed {
                reason: e.to_string(),
            },
            None,
        ),
    };
    let entry = BuildEntry {
        target: name,
        convert_ms: ms_between(t0, t1),
        compose_ms: ms_between(t1, t2),
        total_ms: ms_between(build_start, t2),
        status,
    };
    (entry, manifest)
}
