//! HTTP inference service for a server bundle.
//!
//! Endpoints:
//!
//! - `POST /api/infer` runs one (possibly batched) input through the model
//! - `GET /api/metrics` returns lifetime latency statistics
//! - `GET /api/health` reports the bundle's target and precision
//!
//! Inference is serialized through a single worker thread fed by a bounded
//! FIFO queue; requests beyond the queue capacity get `503`.

pub mod error;
pub mod metrics;
mod server;
pub mod settings;
pub mod wire;

pub use error::{Error, Result};
pub use metrics::{LatencyRecord, MetricsStore};
pub use server::{serve, serve_bundle, RunningServer, ServeOptions};
pub use settings::{Overrides, Settings};
