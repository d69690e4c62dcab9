//! Model conversion and bundle composition for multi-target inference services.
//!
//! The pipeline is: load a [`ModelGraph`], [`convert`] it for each
//! [`TargetProfile`] (FP32 passthrough, FP16 rounding or calibrated INT8),
//! then [`compose_server_bundle`] writes a self-contained bundle that the
//! server crate can load and serve. [`build_all`] runs that pipeline for many
//! targets in parallel.

pub mod build;
pub mod bundle;
pub mod config;
pub mod error;
pub mod fp16;
pub mod interp;
pub mod model;
pub mod processing;
pub mod quant;
pub mod stats;
pub mod synth;
pub mod target;
pub mod tensor;
pub mod variant;

pub use build::{build_all, build_all_with, BuildEntry, BuildOptions, BuildOutput, BuildReport, TargetStatus};
pub use bundle::{
    compose_client_bundle, compose_server_bundle, BundleManifest, ClientConfig, ClientManifest,
    ServerBundle, ServerConfig,
};
pub use config::BuildConfig;
pub use error::{Error, Result};
pub use fp16::round_fp16;
pub use interp::{infer_fp32, PreparedModel};
pub use model::{load_model, save_model, validate_graph, Layer, ModelGraph, Op};
pub use processing::{PostOutput, PostStep, PreStep, ProcessingSpec};
pub use quant::{
    calibrate, dequantize_tensor, quant_params, quantize_tensor, CalibrationSet, QuantMode,
    QuantParams,
};
pub use stats::{median, percentile, Boxplot, MetricsSummary};
pub use target::{Precision, TargetProfile, TargetRegistry};
pub use tensor::{DType, TensorBlob};
pub use variant::{convert, convert_as, infer_variant, ConvertedVariant, PreparedVariant};
