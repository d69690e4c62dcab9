use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use aifgen_bench::{cross_check, emit_report, run_bench, BenchConfig, BenchResult, Error, Report, ReportFormat};
use aifgen_core::tensor::save_tensors;
use aifgen_core::{MetricsSummary, TensorBlob};
use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

/// A fake inference server: request `i` sleeps `delays[i % len]` ms and fails
/// with 500 when `fail_every` divides `i + 1`.
struct Stub {
    delays: Vec<u64>,
    fail_every: Option<usize>,
    seen: AtomicUsize,
    served: AtomicUsize,
}

fn spawn_stub(delays: Vec<u64>, fail_every: Option<usize>) -> (SocketAddr, Arc<Stub>) {
    let stub = Arc::new(Stub {
        delays,
        fail_every,
        seen: AtomicUsize::new(0),
        served: AtomicUsize::new(0),
    });
    let state = Arc::clone(&stub);
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let app = Router::new()
                .route(
                    "/api/health",
                    get(|| async { Json(json!({"status": "ok", "target": "STUB", "precision": "FP32"})) }),
                )
                .route(
                    "/api/metrics",
                    get(|State(s): State<Arc<Stub>>| async move {
                        let n = s.served.load(Ordering::SeqCst);
                        Json(MetricsSummary::from_latencies(&vec![0.5; n], Some(1.0)))
                    }),
                )
                .route(
                    "/api/infer",
                    post(|State(s): State<Arc<Stub>>| async move {
                        let i = s.seen.fetch_add(1, Ordering::SeqCst);
                        tokio::time::sleep(Duration::from_millis(s.delays[i % s.delays.len()])).await;
                        if s.fail_every.is_some_and(|n| (i + 1) % n == 0) {
                            return (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({"error": "boom"})));
                        }
                        s.served.fetch_add(1, Ordering::SeqCst);
                        (StatusCode::OK, Json(json!({"request_id": "x", "latency_ms": 1.0})))
                    }),
                )
                .with_state(state);
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    (addr, stub)
}

fn dataset(dir: &std::path::Path) -> std::path::PathBuf {
    let path = dir.join("data.json");
    let samples: Vec<TensorBlob> = (0..3)
        .map(|i| TensorBlob::from_f32(format!("s{i}"), vec![2], &[i as f32, 1.0]).unwrap())
        .collect();
    save_tensors(&path, &samples).unwrap();
    path
}

fn config(addr: SocketAddr, data: &std::path::Path, count: usize, warmup: usize) -> BenchConfig {
    BenchConfig {
        request_count: count,
        warmup_count: warmup,
        ..BenchConfig::new(format!("http://{addr}"), data)
    }
}

#[test]
fn fixed_delays_give_the_middle_median() {
    let dir = tempfile::tempdir().unwrap();
    let (addr, _) = spawn_stub(vec![10, 20, 30], None);
    let r = run_bench(&config(addr, &dataset(dir.path()), 3, 0)).unwrap();
    assert_eq!(r.variant_id, "STUB-FP32");
    assert_eq!(r.client_latencies_ms.len(), 3);
    let mut sorted = r.client_latencies_ms.clone();
    sorted.sort_by(f64::total_cmp);
    let median = r.summary.median_ms.unwrap();
    assert_eq!(median, sorted[1]);
    assert!((20.0..29.0).contains(&median), "{median}");
    assert!(sorted[0] >= 10.0 && sorted[2] >= 30.0);
    assert!(cross_check(&r).is_ok(), "{:?}", cross_check(&r));
}

#[test]
fn failures_are_counted_and_cross_checked() {
    let dir = tempfile::tempdir().unwrap();
    let (addr, stub) = spawn_stub(vec![0], Some(5));
    let r = run_bench(&config(addr, &dataset(dir.path()), 10, 0)).unwrap();
    assert_eq!(r.errors, 2);
    assert_eq!(r.client_latencies_ms.len(), 8);
    assert_eq!(stub.served.load(Ordering::SeqCst), 8);
    assert_eq!(r.summary.count, 8);
    assert!(cross_check(&r).is_ok(), "{:?}", cross_check(&r));
}

#[test]
fn unreachable_server_aborts_before_sending() {
    let dir = tempfile::tempdir().unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let err = run_bench(&config(port, &dataset(dir.path()), 5, 1)).unwrap_err();
    assert!(matches!(err, Error::Unreachable { .. }), "{err}");
}

#[test]
fn timeouts_count_as_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (addr, _) = spawn_stub(vec![0, 400], None);
    let mut c = config(addr, &dataset(dir.path()), 4, 0);
    c.timeout_ms = 150;
    let r = run_bench(&c).unwrap();
    assert_eq!(r.errors, 2);
    assert_eq!(r.client_latencies_ms.len() + r.errors, 4);
}

fn synthetic(count: usize, errors: usize, warmup: usize, server_count: usize, client_median: f64, server_median: f64) -> BenchResult {
    let latencies = vec![client_median; count - errors];
    let mut server = MetricsSummary::from_latencies(&vec![server_median; server_count.max(1)], None);
    server.count = server_count;
    BenchResult {
        variant_id: "v".into(),
        summary: MetricsSummary::from_latencies(&latencies, Some(1.0)),
        client_latencies_ms: latencies,
        server_summary: server,
        errors,
        request_count: count,
        warmup_count: warmup,
        warmup_errors: 0,
        server_count_before: 0,
    }
}

#[test]
fn cross_check_arithmetic_and_anomalies() {
    // errors = 2 on count 10 means warmup + 8 served
    assert!(cross_check(&synthetic(10, 2, 3, 11, 5.0, 4.0)).is_ok());
    assert!(!cross_check(&synthetic(10, 2, 3, 13, 5.0, 4.0)).is_ok());
    let v = cross_check(&synthetic(10, 0, 0, 10, 4.0, 5.0));
    assert_eq!(v.problems.len(), 1, "{v:?}");
    assert!(v.problems[0].contains("median"));
}

#[test]
fn json_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (addr, _) = spawn_stub(vec![1, 2], None);
    let data = dataset(dir.path());
    let a = run_bench(&config(addr, &data, 6, 1)).unwrap();
    let mut b = synthetic(4, 1, 0, 3, 2.0, 1.0);
    b.variant_id = "other".into();
    let out = dir.path().join("nested/report.json");
    emit_report(&[a.clone(), b.clone()], &a.variant_id, ReportFormat::Json, &out).unwrap();
    let report = Report::load(&out).unwrap();
    assert_eq!(report.baseline, a.variant_id);
    assert_eq!(report.results(), vec![a, b]);
    let raw: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    for key in ["q1", "q2", "q3", "whisker_lo", "whisker_hi", "outliers"] {
        assert!(!raw["variants"][0]["boxplot"][key].is_null(), "{key}");
    }
}
