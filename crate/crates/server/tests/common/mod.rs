#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::time::Duration;

use aifgen_core::bundle::compose_server_bundle;
use aifgen_core::{
    convert, Layer, ModelGraph, Op, ProcessingSpec, ServerConfig, TargetRegistry, TensorBlob,
};
use aifgen_server::settings::Overrides;
use aifgen_server::wire::{InferRequest, WireTensor};
use aifgen_server::{serve, RunningServer, ServeOptions};
use serde_json::Value;

/// Dense layer with an identity weight matrix over `[n]` inputs.
pub fn identity_model(n: usize) -> ModelGraph {
    let mut w = vec![0.0f32; n * n];
    for i in 0..n {
        w[i * n + i] = 1.0;
    }
    ModelGraph {
        name: "identity".into(),
        input_shape: vec![n],
        layers: vec![Layer::new(
            Op::Dense {
                in_dim: n,
                out_dim: n,
            },
            vec![
                TensorBlob::from_f32("layers.0.weight", vec![n, n], &w).unwrap(),
                TensorBlob::from_f32("layers.0.bias", vec![n], &vec![0.0; n]).unwrap(),
            ],
        )],
        output_dim: n,
    }
}

pub fn write_bundle(root: &Path, graph: &ModelGraph, processing: ProcessingSpec, batch_size: usize) -> PathBuf {
    let registry = TargetRegistry::new();
    let cpu = registry.get("CPU").unwrap();
    let variant = convert(graph, cpu, None).unwrap();
    let config = ServerConfig {
        port: 18080,
        batch_size,
        processing,
        ..ServerConfig::default()
    };
    let dir = root.join("bundle");
    compose_server_bundle(&variant, cpu, &config, &dir).unwrap();
    dir
}

/// Serves on an ephemeral loopback port with an empty environment.
pub fn start(bundle: &Path, queue_capacity: Option<usize>, delay_ms: u64) -> RunningServer {
    serve(
        bundle,
        ServeOptions {
            overrides: Overrides {
                port: Some(0),
                queue_capacity,
                ..Overrides::default()
            },
            env: Some(Default::default()),
            infer_delay: Duration::from_millis(delay_ms),
        },
    )
    .unwrap()
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(30)))
        .build()
        .into()
}

pub fn get(server: &RunningServer, path: &str) -> (u16, Value) {
    let mut resp = agent().get(format!("{}{path}", server.url())).call().unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().unwrap())
}

pub fn post_raw(url: &str, body: &str) -> (u16, Value) {
    let mut resp = agent()
        .post(format!("{url}/api/infer"))
        .header("content-type", "application/json")
        .send(body)
        .unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().unwrap())
}

pub fn infer(url: &str, id: Option<&str>, shape: Vec<usize>, values: &[f32]) -> (u16, Value) {
    let req = InferRequest {
        request_id: id.map(str::to_string),
        tensor: WireTensor::from_f32(shape, values),
    };
    post_raw(url, &serde_json::to_string(&req).unwrap())
}

pub fn decode_outputs(body: &Value) -> Vec<f32> {
    let t: WireTensor = serde_json::from_value(body["outputs"].clone()).unwrap();
    t.to_f32().unwrap()
}
