use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use aifgen_bench::{emit_report, read_csv, BenchResult, ReportFormat};
use aifgen_core::synth::{random_samples, GraphBuilder};
use aifgen_core::tensor::save_tensors;
use aifgen_core::{save_model, BundleManifest, MetricsSummary, ModelGraph};

fn aifgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aifgen"))
        .args(args)
        .env_remove("SERVER_HOST")
        .env_remove("SERVER_PORT")
        .env_remove("BATCH_SIZE")
        .env_remove("QUEUE_CAPACITY")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn tiny() -> ModelGraph {
    GraphBuilder::new("tiny", vec![6, 6, 1], 3, 0.5)
        .conv(3, 2, 1)
        .relu()
        .flatten()
        .dense(4)
        .softmax()
        .build()
}

/// Model package, calibration set and request dataset under `root`.
struct Assets {
    model: PathBuf,
    calib: PathBuf,
    dataset: PathBuf,
}

fn assets(root: &Path) -> Assets {
    let g = tiny();
    let model = root.join("tiny");
    save_model(&g, &model).unwrap();
    let calib = root.join("calib.json");
    save_tensors(&calib, &random_samples(1, &g.input_shape, 8, 0.0, 1.0)).unwrap();
    let dataset = root.join("data.json");
    save_tensors(&dataset, &random_samples(2, &g.input_shape, 4, 0.0, 1.0)).unwrap();
    Assets { model, calib, dataset }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_unknown_flags() {
    assert_eq!(code(&aifgen(&["--help"])), 0);
    assert_eq!(code(&aifgen(&["--version"])), 0);
    assert_eq!(code(&aifgen(&["targets", "--bogus"])), 1);
    assert_eq!(code(&aifgen(&[])), 1);
}

#[test]
fn targets_lists_builtins_and_extensions() {
    let out = aifgen(&["targets"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().any(|l| l == "CPU | x86 CPU | FP32"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.yaml");
    std::fs::write(
        &cfg,
        "register_targets:\n  - name: TPU\n    platform: Edge TPU\n    framework: custom\n    precision: INT8\n",
    )
    .unwrap();
    let out = aifgen(&["targets", "--config", s(&cfg), "--frameworks"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 6);
    assert!(text.lines().any(|l| l == "TPU | Edge TPU | INT8 | custom"));
}

#[test]
fn build_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let a = assets(dir.path());
    let out_dir = dir.path().join("out");

    let ok = aifgen(&["build", "--model", s(&a.model), "--targets", "CPU", "--out", s(&out_dir)]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(out_dir.join("tiny-CPU/manifest.json").is_file());
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("build_report.json")).unwrap()).unwrap();
    assert_eq!(report["entries"][0]["target"], "CPU");
    assert!(stdout(&ok).contains("convert_ms"));

    let arm_dir = dir.path().join("arm");
    let no_calib = aifgen(&["build", "--model", s(&a.model), "--targets", "ARM", "--out", s(&arm_dir)]);
    assert_eq!(code(&no_calib), 1);
    assert!(!arm_dir.join("tiny-ARM").exists());

    let unknown = aifgen(&["build", "--model", s(&a.model), "--targets", "NOPE", "--out", s(&out_dir)]);
    assert_eq!(code(&unknown), 1);

    let missing = aifgen(&["build", "--model", "/nonexistent/model", "--out", s(&out_dir)]);
    assert_eq!(code(&missing), 1);

    let all_dir = dir.path().join("all");
    let injected = aifgen(&[
        "build", "--model", s(&a.model), "--calib", s(&a.calib), "--out", s(&all_dir),
        "--inject-failure", "ALVEO",
    ]);
    assert_eq!(code(&injected), 2);
    for t in ["AGX", "ARM", "CPU", "GPU"] {
        BundleManifest::load(&all_dir.join(format!("tiny-{t}"))).unwrap();
    }
    assert!(!all_dir.join("tiny-ALVEO").exists());
}

#[test]
fn target_order_does_not_change_bundles() {
    let dir = tempfile::tempdir().unwrap();
    let a = assets(dir.path());
    let one = dir.path().join("one");
    let two = dir.path().join("two");
    let calib = s(&a.calib);
    assert_eq!(code(&aifgen(&["build", "--model", s(&a.model), "--calib", calib, "--targets", "CPU,ARM,GPU", "--out", s(&one)])), 0);
    assert_eq!(code(&aifgen(&["build", "--model", s(&a.model), "--calib", calib, "--targets", "GPU,CPU,ARM", "--out", s(&two)])), 0);
    for t in ["ARM", "CPU", "GPU"] {
        let name = format!("tiny-{t}");
        let m1 = BundleManifest::load(&one.join(&name)).unwrap();
        let m2 = BundleManifest::load(&two.join(&name)).unwrap();
        assert_eq!(m1.without_timestamp(), m2.without_timestamp());
        for f in ["model/model.json", "model/weights.bin"] {
            assert_eq!(
                std::fs::read(one.join(&name).join(f)).unwrap(),
                std::fs::read(two.join(&name).join(f)).unwrap(),
                "{name}/{f}"
            );
        }
    }
}

#[test]
fn serve_rejects_corrupt_bundle() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("manifest.json"), "{ not json").unwrap();
    let out = aifgen(&["serve", "--bundle", s(dir.path()), "--port", "0"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest.json"));
}

#[test]
fn bench_unreachable_server() {
    let dir = tempfile::tempdir().unwrap();
    let a = assets(dir.path());
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let out = aifgen(&[
        "bench", "--server", &format!("http://127.0.0.1:{port}"), "--dataset", s(&a.dataset),
        "--out", s(&dir.path().join("r.json")), "--timeout-ms", "500",
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn serve_then_bench_over_loopback() {
    let dir = tempfile::tempdir().unwrap();
    let a = assets(dir.path());
    let out_dir = dir.path().join("out");
    assert_eq!(code(&aifgen(&["build", "--model", s(&a.model), "--targets", "CPU", "--out", s(&out_dir)])), 0);

    let mut child = Command::new(env!("CARGO_BIN_EXE_aifgen"))
        .args(["serve", "--bundle", s(&out_dir.join("tiny-CPU")), "--port", "0"])
        .env_remove("SERVER_HOST")
        .env_remove("SERVER_PORT")
        .env_remove("BATCH_SIZE")
        .env_remove("QUEUE_CAPACITY")
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").expect(&line).to_string();

    let report = dir.path().join("reports/bench.json");
    let out = aifgen(&[
        "bench", "--server", &format!("http://{addr}"), "--dataset", s(&a.dataset),
        "--count", "100", "--warmup", "5", "--model", "tiny", "--out", s(&report),
    ]);
    let status = Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    assert!(status.success());
    let served = child.wait().unwrap();

    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).starts_with("tiny-CPU-FP32: 100 ok"), "{}", stdout(&out));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(json["variants"][0]["latencies_ms"].as_array().unwrap().len(), 100);
    assert_eq!(json["variants"][0]["server_summary"]["count"], 105);
    assert_eq!(served.code(), Some(0));
}

fn bench_result(id: &str, latencies: &[f64]) -> BenchResult {
    BenchResult {
        variant_id: id.into(),
        client_latencies_ms: latencies.to_vec(),
        summary: MetricsSummary::from_latencies(latencies, Some(1.0)),
        server_summary: MetricsSummary::from_latencies(latencies, Some(1.0)),
        errors: 0,
        request_count: latencies.len(),
        warmup_count: 0,
        warmup_errors: 0,
        server_count_before: 0,
    }
}

#[test]
fn report_merges_and_validates_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    emit_report(&[bench_result("m-CPU-FP32", &[8.0, 12.0])], "m-CPU-FP32", ReportFormat::Json, &a).unwrap();
    emit_report(&[bench_result("m-GPU-FP16", &[2.0, 3.0])], "m-GPU-FP16", ReportFormat::Json, &b).unwrap();
    let inputs = format!("{},{}", s(&a), s(&b));

    let csv = dir.path().join("merged.csv");
    let out = aifgen(&["report", "--inputs", &inputs, "--baseline", "m-CPU-FP32", "--out", s(&csv)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&csv).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].speedup_vs_baseline, Some(1.0));
    assert_eq!(rows[1].speedup_vs_baseline, Some(4.0));

    let single = dir.path().join("single.csv");
    assert_eq!(code(&aifgen(&["report", "--inputs", s(&b), "--baseline", "m-GPU-FP16", "--out", s(&single)])), 0);
    assert_eq!(read_csv(&single).unwrap()[0].speedup_vs_baseline, Some(1.0));

    let missing = aifgen(&["report", "--inputs", &inputs, "--baseline", "nope", "--out", s(&csv)]);
    assert_eq!(code(&missing), 1);

    let merged_json = dir.path().join("merged.json");
    assert_eq!(code(&aifgen(&["report", "--inputs", &inputs, "--baseline", "m-GPU-FP16", "--format", "json", "--out", s(&merged_json)])), 0);
    let report = aifgen_bench::Report::load(&merged_json).unwrap();
    assert_eq!(report.variants.len(), 2);
}
