use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use aifgen_core::bundle::server_url;
use aifgen_core::{
    MetricsSummary, PostOutput, PreparedVariant, ProcessingSpec, ServerBundle, TensorBlob,
};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::sync::oneshot;

use crate::error::{Error, Result};
use crate::metrics::{LatencyRecord, MetricsStore};
use crate::settings::{process_env, resolve, Overrides, Settings};
use crate::wire::{ErrorBody, Health, InferRequest, InferResponse, WireTensor};

#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    pub overrides: Overrides,
    /// Environment used for overrides; `None` reads the process environment.
    pub env: Option<BTreeMap<String, String>>,
    /// Extra time the worker spends on every request. Lets tests hold a request in flight.
    #[doc(hidden)]
    pub infer_delay: Duration,
}

type Reply = std::result::Result<InferResponse, (StatusCode, ErrorBody)>;

struct Job {
    id: String,
    values: Vec<f32>,
    batch: usize,
    enqueued: Instant,
    reply: oneshot::Sender<Reply>,
}

enum Msg {
    Job(Job),
    Stop,
}

struct Admission {
    /// Requests queued or being processed.
    outstanding: usize,
    closing: bool,
    jobs: mpsc::Sender<Msg>,
}

struct Shared {
    admission: Mutex<Admission>,
    metrics: MetricsStore,
    epoch: Instant,
    next_id: AtomicU64,
    settings: Settings,
    input_shape: Vec<usize>,
    output_dim: usize,
    processing: ProcessingSpec,
    health: Health,
}

impl Shared {
    fn ms(&self, t: Instant) -> f64 {
        t.duration_since(self.epoch).as_secs_f64() * 1e3
    }

    fn release(&self) {
        self.admission.lock().unwrap().outstanding -= 1;
    }
}

fn reject(status: StatusCode, error: impl Into<String>) -> (StatusCode, ErrorBody) {
    (
        status,
        ErrorBody {
            error: error.into(),
            expected: None,
            got: None,
        },
    )
}

/// A server running on its own runtime. Dropping it shuts it down.
pub struct RunningServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    runtime: Option<tokio::runtime::Runtime>,
    stop: Option<oneshot::Sender<()>>,
    task: Option<tokio::task::JoinHandle<std::io::Result<()>>>,
    worker: Option<thread::JoinHandle<()>>,
}

/// Loads the bundle in `bundle_dir` and starts serving it.
pub fn serve(bundle_dir: &Path, options: ServeOptions) -> Result<RunningServer> {
    serve_bundle(ServerBundle::load(bundle_dir)?, options)
}

pub fn serve_bundle(bundle: ServerBundle, options: ServeOptions) -> Result<RunningServer> {
    let env = options.env.clone().unwrap_or_else(process_env);
    let settings = resolve(&bundle.manifest.config, &env, &options.overrides)?;
    let model = PreparedVariant::new(&bundle.variant)?;

    let ip = settings.host.parse().expect("resolve checks the host");
    let addr = SocketAddr::new(ip, settings.port);
    let listener = std::net::TcpListener::bind(addr).map_err(|source| Error::Bind { addr, source })?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;

    let (jobs, queue) = mpsc::channel();
    let shared = Arc::new(Shared {
        admission: Mutex::new(Admission {
            outstanding: 0,
            closing: false,
            jobs,
        }),
        metrics: MetricsStore::new(),
        epoch: Instant::now(),
        next_id: AtomicU64::new(1),
        settings,
        input_shape: bundle.variant.graph.input_shape.clone(),
        output_dim: bundle.variant.graph.output_dim,
        processing: bundle.manifest.config.processing.clone(),
        health: Health {
            status: "ok".into(),
            target: bundle.manifest.target.clone(),
            precision: bundle.manifest.precision.to_string(),
        },
    });

    let worker = {
        let shared = Arc::clone(&shared);
        let delay = options.infer_delay;
        thread::Builder::new()
            .name("infer-worker".into())
            .spawn(move || worker_loop(&shared, &model, &queue, delay))?
    };

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let listener = {
        let _guard = runtime.enter();
        tokio::net::TcpListener::from_std(listener)?
    };
    let app = Router::new()
        .route("/api/infer", post(handle_infer))
        .route("/api/metrics", get(handle_metrics))
        .route("/api/health", get(handle_health))
        .with_state(Arc::clone(&shared));
    let (stop, stopped) = oneshot::channel::<()>();
    let task = runtime.spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await
    });

    Ok(RunningServer {
        addr,
        shared,
        runtime: Some(runtime),
        stop: Some(stop),
        task: Some(task),
        worker: Some(worker),
    })
}

impl RunningServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        server_url(&self.addr.ip().to_string(), self.addr.port())
    }

    pub fn settings(&self) -> &Settings {
        &self.shared.settings
    }

    pub fn records(&self) -> Vec<LatencyRecord> {
        self.shared.metrics.snapshot()
    }

    pub fn summary(&self) -> MetricsSummary {
        self.shared.metrics.summary()
    }

    /// Blocks until Ctrl-C, then shuts down gracefully.
    pub fn wait_for_interrupt(mut self) -> Result<()> {
        if let Some(rt) = &self.runtime {
            rt.block_on(tokio::signal::ctrl_c())?;
        }
        self.stop_inner()
    }

    /// Finishes the request in flight, answers 503 to everything still queued,
    /// and stops accepting connections.
    pub fn shutdown(mut self) -> Result<()> {
        self.stop_inner()
    }

    fn stop_inner(&mut self) -> Result<()> {
        let Some(stop) = self.stop.take() else {
            return Ok(());
        };
        let jobs = {
            let mut adm = self.shared.admission.lock().unwrap();
            adm.closing = true;
            adm.jobs.clone()
        };
        let _ = stop.send(());
        let runtime = self.runtime.take().expect("present until stopped");
        let served = match self.task.take() {
            Some(task) => runtime.block_on(task).unwrap_or(Ok(())),
            None => Ok(()),
        };
        let _ = jobs.send(Msg::Stop);
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
        runtime.shutdown_timeout(Duration::from_secs(1));
        served.map_err(Error::Runtime)
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        let _ = self.stop_inner();
    }
}

fn worker_loop(shared: &Shared, model: &PreparedVariant, queue: &mpsc::Receiver<Msg>, delay: Duration) {
    while let Ok(Msg::Job(job)) = queue.recv() {
        if shared.admission.lock().unwrap().closing {
            shared.release();
            let _ = job
                .reply
                .send(Err(reject(StatusCode::SERVICE_UNAVAILABLE, "server is shutting down")));
            continue;
        }
        let started = Instant::now();
        if !delay.is_zero() {
            thread::sleep(delay);
        }
        let reply = match execute(shared, model, &job) {
            Ok(post) => {
                let (outputs, class_ids, scores) = match post {
                    PostOutput::Values(v) => (
                        Some(WireTensor::from_f32(vec![job.batch, shared.output_dim], &v)),
                        None,
                        None,
                    ),
                    PostOutput::Classes { class_ids, scores } => (None, Some(class_ids), scores),
                };
                let end = Instant::now();
                let record = LatencyRecord {
                    request_id: job.id.clone(),
                    enqueue_ts: shared.ms(job.enqueued),
                    start_ts: shared.ms(started),
                    end_ts: shared.ms(end),
                };
                let latency_ms = record.latency_ms();
                shared.metrics.push(record);
                Ok(InferResponse {
                    request_id: job.id,
                    outputs,
                    class_ids,
                    scores,
                    latency_ms,
                })
            }
            Err(e) => Err(reject(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
        };
        shared.release();
        let _ = job.reply.send(reply);
    }
}

fn execute(shared: &Shared, model: &PreparedVariant, job: &Job) -> aifgen_core::Result<PostOutput> {
    let mut values = job.values.clone();
    shared.processing.apply_pre(&mut values);
    let mut shape = vec![job.batch];
    shape.extend_from_slice(&shared.input_shape);
    let input = TensorBlob::from_f32("input", shape, &values)?;
    let out = model.infer(&input)?.to_f32_vec()?;
    Ok(shared.processing.apply_post(out, shared.output_dim))
}

fn respond(reply: Reply) -> Response {
    match reply {
        Ok(body) => (StatusCode::OK, Json(body)).into_response(),
        Err((status, body)) => (status, Json(body)).into_response(),
    }
}

/// Decodes and shape-checks a request body into `(id, batch, values)`.
fn admit_body(shared: &Shared, body: &[u8]) -> std::result::Result<(String, usize, Vec<f32>), (StatusCode, ErrorBody)> {
    let req: InferRequest = serde_json::from_slice(body)
        .map_err(|e| reject(StatusCode::BAD_REQUEST, format!("malformed request: {e}")))?;
    let bytes = req
        .tensor
        .decode_bytes()
        .map_err(|e| reject(StatusCode::BAD_REQUEST, format!("malformed base64: {e}")))?;
    let unprocessable = StatusCode::UNPROCESSABLE_ENTITY;
    if req.tensor.dtype != "f32" {
        return Err(reject(
            unprocessable,
            format!("dtype must be \"f32\", got {:?}", req.tensor.dtype),
        ));
    }
    let shape = &req.tensor.shape;
    let Some((batch, _)) = shared.processing.split_batch(shape, &shared.input_shape) else {
        return Err((
            unprocessable,
            ErrorBody {
                error: "input shape does not match the model".into(),
                expected: Some(shared.input_shape.clone()),
                got: Some(shape.clone()),
            },
        ));
    };
    if batch == 0 || batch > shared.settings.batch_size {
        return Err(reject(
            unprocessable,
            format!(
                "batch of {batch} outside 1..={}",
                shared.settings.batch_size
            ),
        ));
    }
    let want = shape.iter().product::<usize>() * 4;
    if bytes.len() != want {
        return Err(reject(
            unprocessable,
            format!("shape {shape:?} needs {want} bytes, payload has {}", bytes.len()),
        ));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let id = req
        .request_id
        .unwrap_or_else(|| format!("req-{}", shared.next_id.fetch_add(1, Ordering::Relaxed)));
    Ok((id, batch, values))
}

async fn handle_infer(State(shared): State<Arc<Shared>>, body: Bytes) -> Response {
    let (id, batch, values) = match admit_body(&shared, &body) {
        Ok(v) => v,
        Err(e) => return respond(Err(e)),
    };
    let (reply, replied) = oneshot::channel();
    {
        let mut adm = shared.admission.lock().unwrap();
        if adm.closing {
            return respond(Err(reject(StatusCode::SERVICE_UNAVAILABLE, "server is shutting down")));
        }
        if adm.outstanding > shared.settings.queue_capacity {
            return respond(Err(reject(StatusCode::SERVICE_UNAVAILABLE, "request queue is full")));
        }
        adm.outstanding += 1;
        let job = Job {
            id,
            values,
            batch,
            enqueued: Instant::now(),
            reply,
        };
        if adm.jobs.send(Msg::Job(job)).is_err() {
            adm.outstanding -= 1;
            return respond(Err(reject(StatusCode::SERVICE_UNAVAILABLE, "worker has stopped")));
        }
    }
    match replied.await {
        Ok(reply) => respond(reply),
        Err(_) => respond(Err(reject(StatusCode::SERVICE_UNAVAILABLE, "worker has stopped"))),
    }
}

async fn handle_metrics(State(shared): State<Arc<Shared>>) -> Json<MetricsSummary> {
    Json(shared.metrics.summary())
}

async fn handle_health(State(shared): State<Arc<Shared>>) -> Json<Health> {
    Json(shared.health.clone())
}
