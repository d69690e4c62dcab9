//! Build configuration file (YAML).
//!
//! ```yaml
//! targets: [CPU, ARM, GPU]
//! host: 0.0.0.0
//! port: 8080
//! batch_size: 4
//! gpu_precision: FP16
//! parallelism: 4
//! calib: calib.json
//! processing:
//!   preprocess:
//!     - scale: 0.00392
//!   postprocess:
//!     - argmax
//! extra_env:
//!   LOG_LEVEL: info
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bundle::ServerConfig;
use crate::error::{Error, Result};
use crate::processing::ProcessingSpec;
use crate::target::{Precision, TargetProfile, TargetRegistry};

/// Extra target profile declared in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetDecl {
    pub name: String,
    pub platform: String,
    #[serde(default)]
    pub framework: String,
    pub precision: Precision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildConfig {
    #[serde(default)]
    pub targets: Option<Vec<String>>,
    #[serde(default = "defaults::host")]
    pub host: String,
    #[serde(default = "defaults::port")]
    pub port: u16,
    #[serde(default = "defaults::one")]
    pub batch_size: usize,
    #[serde(default)]
    pub gpu_precision: Option<Precision>,
    #[serde(default = "defaults::parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub calib: Option<PathBuf>,
    #[serde(default, with = "serde_yaml::with::singleton_map_recursive")]
    pub processing: ProcessingSpec,
    #[serde(default)]
    pub extra_env: BTreeMap<String, String>,
    #[serde(default)]
    pub register_targets: Vec<TargetDecl>,
}

mod defaults {
    pub fn host() -> String {
        "127.0.0.1".into()
    }
    pub fn port() -> u16 {
        8080
    }
    pub fn one() -> usize {
        1
    }
    pub fn parallelism() -> usize {
        std::thread::available_parallelism().map_or(4, |n| n.get())
    }
}

impl Default for BuildConfig {
    fn default() -> Self {
        serde_yaml::from_str("{}").expect("all fields have defaults")
    }
}

impl BuildConfig {
    pub fn parse(text: &str) -> std::result::Result<Self, serde_yaml::Error> {
        serde_yaml::from_str(text)
    }

    /// Reads a config file; a relative `calib` path is resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::parse(&text).map_err(|source| Error::Yaml {
            path: path.to_path_buf(),
            source,
        })?;
        if let (Some(calib), Some(dir)) = (&config.calib, path.parent()) {
            if calib.is_relative() {
                config.calib = Some(dir.join(calib));
            }
        }
        Ok(config)
    }

    pub fn server_config(&self) -> ServerConfig {
        ServerConfig {
            host: self.host.clone(),
            port: self.port,
            batch_size: self.batch_size,
            precision_override: self.gpu_precision,
            parallelism: self.parallelism,
            extra_env: self.extra_env.clone(),
            processing: self.processing.clone(),
        }
    }

    /// Built-in profiles plus the ones declared under `register_targets`.
    pub fn registry(&self) -> Result<TargetRegistry> {
        let mut registry = TargetRegistry::new();
        for decl in &self.register_targets {
            registry.register(TargetProfile::fixed(
                decl.name.clone(),
                decl.platform.clone(),
                decl.framework.clone(),
                decl.precision,
            ))?;
        }
        Ok(registry)
    }
}
