//! Server and client bundles: a converted model plus the resolved
//! configuration a server (or benchmark client) needs to run it.
//!
//! Server bundle layout:
//!
//! ```text
//! <bundle>/manifest.json
//! <bundle>/model/model.json
//! <bundle>/model/weights.bin
//! <bundle>/model/qparams.json   (INT8 only)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::net::IpAddr;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{write_dir_atomic, MODEL_FILE};
use crate::processing::ProcessingSpec;
use crate::target::{Precision, TargetProfile};
use crate::tensor::load_tensors;
use crate::variant::{load_variant, variant_files, ConvertedVariant, QPARAMS_FILE};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CLIENT_MANIFEST_FILE: &str = "client.json";
pub const MODEL_DIR: &str = "model";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
    pub batch_size: usize,
    /// Requested precision for profiles with a configurable precision. Resolved
    /// into the manifest's top-level `precision`, never serialized itself.
    #[serde(skip)]
    pub precision_override: Option<Precision>,
    pub parallelism: usize,
    #[serde(default)]
    pub extra_env: BTreeMap<String, String>,
    #[serde(default)]
    pub processing: ProcessingSpec,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            batch_size: 1,
            precision_override: None,
            parallelism: 4,
            extra_env: BTreeMap::new(),
            processing: ProcessingSpec::default(),
        }
    }
}

impl ServerConfig {
    pub fn validate(&self) -> Result<()> {
        self.host.parse::<IpAddr>().map_err(|_| {
            Error::validation(format!("host `{}` is not an IP address", self.host))
        })?;
        if self.port == 0 {
            return Err(Error::validation("port must be between 1 and 65535"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be >= 1"));
        }
        if self.parallelism == 0 {
            return Err(Error::validation("parallelism must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub bundle_name: String,
    pub target: String,
    pub precision: Precision,
    pub model_ref: String,
    pub qparams_ref: Option<String>,
    pub config: ServerConfig,
    pub created_at: String,
    pub tool_version: String,
}

/// Rejects absolute paths and any `..` component.
fn check_relative(reference: &str) -> Result<()> {
    let path = Path::new(reference);
    let escapes = path.components().any(|c| {
        matches!(
            c,
            Component::ParentDir | Component::RootDir | Component::Prefix(_)
        )
    });
    if reference.is_empty() || escapes {
        return Err(Error::validation(format!(
            "bundle reference `{reference}` escapes the bundle directory"
        )));
    }
    Ok(())
}

impl BundleManifest {
    pub fn validate(&self) -> Result<()> {
        check_relative(&self.model_ref)?;
        if let Some(q) = &self.qparams_ref {
            check_relative(q)?;
        }
        if (self.precision == Precision::INT8) != self.qparams_ref.is_some() {
            return Err(Error::validation(format!(
                "{} bundle {} a qparams_ref",
                self.precision,
                if self.qparams_ref.is_some() { "must not carry" } else { "requires" }
            )));
        }
        self.config.validate()
    }

    pub fn load(bundle_dir: &Path) -> Result<Self> {
        let path = bundle_dir.join(MANIFEST_FILE);
        let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: BundleManifest =
            serde_json::from_slice(&text).map_err(|e| Error::json(&path, e))?;
        manifest.validate()?;
        Ok(manifest)
    }

    /// The manifest with `created_at` blanked, for comparisons across builds.
    pub fn without_timestamp(&self) -> Self {
        Self {
            created_at: String::new(),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        serde_json::to_vec_pretty(self)
            .map_err(|e| Error::validation(format!("cannot encode manifest: {e}")))
    }
}

pub(crate) fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn bundle_name(model: &str, target: &str) -> String {
    format!("{model}-{target}")
}

/// Writes a server bundle for `variant` into `out_dir`, replacing any previous content.
pub fn compose_server_bundle(
    variant: &ConvertedVariant,
    profile: &TargetProfile,
    config: &ServerConfig,
    out_dir: &Path,
) -> Result<BundleManifest> {
    variant.check_profile(profile)?;
    if let Some(requested) = config.precision_override {
        if !profile.is_configurable() || requested != variant.precision {
            return Err(Error::PrecisionConflict {
                target: profile.name.clone(),
                precision: requested.to_string(),
            });
        }
    }
    config.validate()?;
    config
        .processing
        .validate(&variant.graph.input_shape, variant.graph.output_dim)?;

    let model_ref = format!("{MODEL_DIR}/{MODEL_FILE}");
    let qparams_ref =
        (variant.precision == Precision::INT8).then(|| format!("{MODEL_DIR}/{QPARAMS_FILE}"));
    let manifest = BundleManifest {
        bundle_name: bundle_name(&variant.graph.name, &profile.name),
        target: profile.name.clone(),
        precision: variant.precision,
        model_ref,
        qparams_ref,
        config: ServerConfig {
            precision_override: None,
            ..config.clone()
        },
        created_at: now_rfc3339(),
        tool_version: TOOL_VERSION.to_string(),
    };

    let mut files: Vec<(String, Vec<u8>)> = variant_files(variant)?
        .into_iter()
        .map(|(name, bytes)| (format!("{MODEL_DIR}/{name}"), bytes))
        .collect();
    files.push((MANIFEST_FILE.to_string(), manifest.to_json()?));
    let borrowed: Vec<(&str, &[u8])> = files
        .iter()
        .map(|(n, b)| (n.as_str(), b.as_slice()))
        .collect();
    write_dir_atomic(out_dir, &borrowed)?;
    Ok(manifest)
}

/// A server bundle loaded from disk with its manifest and model cross-checked.
#[derive(Debug, Clone)]
pub struct ServerBundle {
    pub dir: PathBuf,
    pub manifest: BundleManifest,
    pub variant: ConvertedVariant,
}

impl ServerBundle {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = BundleManifest::load(dir)?;
        let model_path = dir.join(&manifest.model_ref);
        let model_dir = model_path
            .parent()
            .ok_or_else(|| Error::validation("model_ref has no parent directory"))?;
        if let Some(q) = &manifest.qparams_ref {
            let qpath = dir.join(q);
            if !qpath.is_file() {
                return Err(Error::validation(format!(
                    "INT8 bundle is missing {}",
                    qpath.display()
                )));
            }
        }
        let variant = load_variant(model_dir)?;
        if variant.precision != manifest.precision || variant.target != manifest.target {
            return Err(Error::validation(format!(
                "manifest declares {}/{} but the model package is {}/{}",
                manifest.target, manifest.precision, variant.target, variant.precision
            )));
        }
        manifest
            .config
            .processing
            .validate(&variant.graph.input_shape, variant.graph.output_dim)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            variant,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.variant.graph.input_shape
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    pub server_host: String,
    pub server_port: u16,
    pub dataset_ref: PathBuf,
    pub request_count: usize,
    pub warmup_count: usize,
}

impl ClientConfig {
    /// Client configuration pointing at the endpoint of `server`.
    pub fn for_server(server: &ServerBundle, dataset_ref: PathBuf, request_count: usize) -> Self {
        Self {
            server_host: server.manifest.config.host.clone(),
            server_port: server.manifest.config.port,
            dataset_ref,
            request_count,
            warmup_count: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientManifest {
    pub server_bundle: String,
    pub server_url: String,
    pub dataset_ref: String,
    pub request_count: usize,
    pub warmup_count: usize,
    pub created_at: String,
    pub tool_version: String,
}

impl ClientManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(CLIENT_MANIFEST_FILE);
        let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_slice(&text).map_err(|e| Error::json(&path, e))
    }
}

/// `http://host:port`, mapping unspecified bind addresses to loopback.
pub fn server_url(host: &str, port: u16) -> String {
    match host.parse::<IpAddr>() {
        Ok(IpAddr::V4(ip)) if ip.is_unspecified() => format!("http://127.0.0.1:{port}"),
        Ok(IpAddr::V6(ip)) if ip.is_unspecified() => format!("http://[::1]:{port}"),
        Ok(IpAddr::V6(ip)) => format!("http://[{ip}]:{port}"),
        _ => format!("http://{host}:{port}"),
    }
}

/// Writes a client bundle that targets `server`, validating the dataset up front.
pub fn compose_client_bundle(
    config: &ClientConfig,
    server: &ServerBundle,
    out_dir: &Path,
) -> Result<ClientManifest> {
    if config.request_count == 0 {
        return Err(Error::validation("request_count must be >= 1"));
    }
    let samples = load_tensors(&config.dataset_ref)?;
    if samples.is_empty() {
        return Err(Error::validation("dataset contains no samples"));
    }
    let processing = &server.manifest.config.processing;
    for s in &samples {
        let fits = processing
            .split_batch(s.shape(), server.input_shape())
            .is_some_and(|(batch, _)| batch <= server.manifest.config.batch_size);
        if !fits || s.dtype() != crate::tensor::DType::F32 {
            return Err(Error::InputShape {
                expected: server.input_shape().to_vec(),
                actual: s.shape().to_vec(),
            });
        }
    }
    let dataset = fs::canonicalize(&config.dataset_ref)
        .map_err(|e| Error::io(&config.dataset_ref, e))?;
    let manifest = ClientManifest {
        server_bundle: server.manifest.bundle_name.clone(),
        server_url: server_url(&config.server_host, config.server_port),
        dataset_ref: dataset.display().to_string(),
        request_count: config.request_count,
        warmup_count: config.warmup_count,
        created_at: now_rfc3339(),
        tool_version: TOOL_VERSION.to_string(),
    };
    let json = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| Error::validation(format!("cannot encode client manifest: {e}")))?;
    write_dir_atomic(out_dir, &[(CLIENT_MANIFEST_FILE, &json)])?;
    Ok(manifest)
}
