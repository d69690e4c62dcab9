mod common;

use std::collections::BTreeMap;
use std::thread;
use std::time::Duration;

use aifgen_core::bundle::compose_server_bundle;
use aifgen_core::synth::{lenet, random_samples};
use aifgen_core::{convert, CalibrationSet, ProcessingSpec, ServerConfig, TargetRegistry};
use aifgen_server::settings::Overrides;
use aifgen_server::{serve, Error, ServeOptions};
use common::*;

#[test]
fn shutdown_finishes_in_flight_and_rejects_queued() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = write_bundle(dir.path(), &identity_model(3), ProcessingSpec::default(), 1);
    let server = start(&bundle, Some(8), 400);
    let url = server.url();

    let spawn = |id: &'static str, after: u64| {
        let url = url.clone();
        thread::spawn(move || {
            thread::sleep(Duration::from_millis(after));
            infer(&url, Some(id), vec![3], &[1.0, 2.0, 3.0]).0
        })
    };
    let first = spawn("first", 0);
    let queued = [spawn("q1", 80), spawn("q2", 120)];
    thread::sleep(Duration::from_millis(200));
    server.shutdown().unwrap();

    assert_eq!(first.join().unwrap(), 200);
    for q in queued {
        assert_eq!(q.join().unwrap(), 503);
    }
    assert!(agent().get(format!("{url}/api/health")).call().is_err());
}

#[test]
fn second_server_on_same_port_fails_to_bind() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = write_bundle(dir.path(), &identity_model(3), ProcessingSpec::default(), 1);
    let first = start(&bundle, None, 0);
    let taken = first.addr().port();
    let second = serve(
        &bundle,
        ServeOptions {
            overrides: Overrides {
                port: Some(taken),
                ..Overrides::default()
            },
            env: Some(BTreeMap::new()),
            ..ServeOptions::default()
        },
    );
    assert!(matches!(second, Err(Error::Bind { .. })));
}

#[test]
fn environment_overrides_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = write_bundle(dir.path(), &identity_model(3), ProcessingSpec::default(), 1);
    let env: BTreeMap<String, String> = [("SERVER_PORT", "0"), ("BATCH_SIZE", "4"), ("QUEUE_CAPACITY", "3")]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let server = serve(
        &bundle,
        ServeOptions {
            env: Some(env),
            ..ServeOptions::default()
        },
    )
    .unwrap();
    assert_ne!(server.addr().port(), 18080);
    assert_eq!(server.settings().batch_size, 4);
    assert_eq!(server.settings().queue_capacity, 3);
    assert_eq!(infer(&server.url(), None, vec![4, 3], &[0.0; 12]).0, 200);
}

fn int8_bundle(root: &std::path::Path) -> std::path::PathBuf {
    let graph = lenet(1, 0.5);
    let calib = CalibrationSet::new(random_samples(2, &graph.input_shape, 8, 0.0, 1.0), &graph.input_shape).unwrap();
    let registry = TargetRegistry::new();
    let arm = registry.get("ARM").unwrap();
    let variant = convert(&graph, arm, Some(&calib)).unwrap();
    let dir = root.join("int8");
    compose_server_bundle(&variant, arm, &ServerConfig::default(), &dir).unwrap();
    dir
}

#[test]
fn int8_bundle_serves_and_needs_qparams() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = int8_bundle(dir.path());
    {
        let server = start(&bundle, None, 0);
        let (_, health) = get(&server, "/api/health");
        assert_eq!(health["precision"], "INT8");
        let x = random_samples(9, &[28, 28, 1], 1, 0.0, 1.0)[0].to_f32_vec().unwrap();
        let (status, body) = infer(&server.url(), None, vec![1, 28, 28, 1], &x);
        assert_eq!(status, 200, "{body}");
        let probs = decode_outputs(&body);
        assert!((probs.iter().sum::<f32>() - 1.0).abs() < 0.05);
    }
    std::fs::remove_file(bundle.join("model/qparams.json")).unwrap();
    let err = serve(&bundle, ServeOptions::default()).err().expect("startup must fail");
    assert!(matches!(err, Error::Bundle(_)), "{err}");
}

#[test]
fn corrupt_manifest_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = write_bundle(dir.path(), &identity_model(3), ProcessingSpec::default(), 1);
    std::fs::write(bundle.join("manifest.json"), "{\"bundle_name\": 3}").unwrap();
    assert!(matches!(serve(&bundle, ServeOptions::default()), Err(Error::Bundle(_))));
}
