//! Runtime settings: command-line overrides beat environment variables,
//! which beat the bundle manifest.

use std::collections::BTreeMap;
use std::net::IpAddr;

use aifgen_core::ServerConfig;

use crate::error::{Error, Result};

pub const ENV_HOST: &str = "SERVER_HOST";
pub const ENV_PORT: &str = "SERVER_PORT";
pub const ENV_BATCH_SIZE: &str = "BATCH_SIZE";
pub const ENV_QUEUE_CAPACITY: &str = "QUEUE_CAPACITY";
pub const ENV_KEYS: [&str; 4] = [ENV_HOST, ENV_PORT, ENV_BATCH_SIZE, ENV_QUEUE_CAPACITY];

pub const DEFAULT_QUEUE_CAPACITY: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Settings {
    pub host: String,
    pub port: u16,
    pub batch_size: usize,
    /// Requests allowed to wait behind the one being processed.
    pub queue_capacity: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Overrides {
    pub host: Option<String>,
    pub port: Option<u16>,
    pub batch_size: Option<usize>,
    pub queue_capacity: Option<usize>,
}

/// The relevant variables of the current process environment.
pub fn process_env() -> BTreeMap<String, String> {
    ENV_KEYS
        .iter()
        .filter_map(|k| std::env::var(k).ok().map(|v| (k.to_string(), v)))
        .collect()
}

fn parse_env<T: std::str::FromStr>(env: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    match env.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{key}={raw:?} is not valid"))),
    }
}

pub fn resolve(
    config: &ServerConfig,
    env: &BTreeMap<String, String>,
    overrides: &Overrides,
) -> Result<Settings> {
    let settings = Settings {
        host: overrides
            .host
            .clone()
            .or(parse_env(env, ENV_HOST)?)
            .unwrap_or_else(|| config.host.clone()),
        port: overrides
            .port
            .or(parse_env(env, ENV_PORT)?)
            .unwrap_or(config.port),
        batch_size: overrides
            .batch_size
            .or(parse_env(env, ENV_BATCH_SIZE)?)
            .unwrap_or(config.batch_size),
        queue_capacity: overrides
            .queue_capacity
            .or(parse_env(env, ENV_QUEUE_CAPACITY)?)
            .unwrap_or(DEFAULT_QUEUE_CAPACITY),
    };
    if settings.host.parse::<IpAddr>().is_err() {
        return Err(Error::Config(format!(
            "host `{}` is not an IP address",
            settings.host
        )));
    }
    if settings.batch_size == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    Ok(settings)
}
