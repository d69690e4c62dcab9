//! Target platform profiles and the registry that holds them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Precision {
    FP32,
    FP16,
    INT8,
}

impl Precision {
    pub const ALL: [Precision; 3] = [Precision::FP32, Precision::FP16, Precision::INT8];

    pub fn as_str(self) -> &'static str {
        match self {
            Precision::FP32 => "FP32",
            Precision::FP16 => "FP16",
            Precision::INT8 => "INT8",
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FP32" => Ok(Precision::FP32),
            "FP16" => Ok(Precision::FP16),
            "INT8" => Ok(Precision::INT8),
            _ => Err(Error::validation(format!("unknown precision `{s}`"))),
        }
    }
}

/// One platform/framework/precision combination that bundles can be built for.
///
/// Most profiles support a single precision. Profiles that list several
/// (the built-in GPU profile) take the configured override, or fall back to
/// `default_precision`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetProfile {
    pub name: String,
    pub platform_label: String,
    pub framework_label: String,
    pub precisions: Vec<Precision>,
    pub default_precision: Precision,
}

impl TargetProfile {
    pub fn fixed(
        name: impl Into<String>,
        platform_label: impl Into<String>,
        framework_label: impl Into<String>,
        precision: Precision,
    ) -> Self {
        Self {
            name: name.into(),
            platform_label: platform_label.into(),
            framework_label: framework_label.into(),
            precisions: vec![precision],
            default_precision: precision,
        }
    }

    pub fn is_configurable(&self) -> bool {
        self.precisions.len() > 1
    }

    pub fn supports(&self, precision: Precision) -> bool {
        self.precisions.contains(&precision)
    }

    /// Precision a bundle for this profile gets under an optional override.
    pub fn resolve_precision(&self, requested: Option<Precision>) -> Result<Precision> {
        match requested {
            None => Ok(self.default_precision),
            Some(p) if self.is_configurable() && self.supports(p) => Ok(p),
            Some(p) => Err(Error::PrecisionConflict {
                target: self.name.clone(),
                precision: p.to_string(),
            }),
        }
    }

    /// Precision column as rendered in the profile table, e.g. `FP32/FP16/INT8`.
    pub fn precision_label(&self) -> String {
        self.precisions
            .iter()
            .map(|p| p.as_str())
            .collect::<Vec<_>>()
            .join("/")
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::validation("target profile name must not be empty"));
        }
        if !self
            .name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(Error::validation(format!(
                "target profile name `{}` may only contain ASCII letters, digits, `_` and `-`",
                self.name
            )));
        }
        if self.precisions.is_empty() {
            return Err(Error::validation(format!(
                "target profile `{}` lists no precision",
                self.name
            )));
        }
        if !self.supports(self.default_precision) {
            return Err(Error::validation(format!(
                "target profile `{}` default precision {} is not among {}",
                self.name,
                self.default_precision,
                self.precision_label()
            )));
        }
        Ok(())
    }
}

/// The five built-in profiles.
pub fn builtin_targets() -> Vec<TargetProfile> {
    vec![
        TargetProfile::fixed("AGX", "Edge GPU", "ONNX w/ TensorRT", Precision::INT8),
        TargetProfile::fixed("ARM", "ARM", "Tensorflow Lite", Precision::INT8),
        TargetProfile::fixed("CPU", "x86 CPU", "Tensorflow Lite", Precision::FP32),
        TargetProfile::fixed("ALVEO", "Cloud FPGA", "Vitis AI", Precision::INT8),
        TargetProfile {
            name: "GPU".into(),
            platform_label: "GPU".into(),
            framework_label: "ONNX w/ TensorRT".into(),
            precisions: Precision::ALL.to_vec(),
            default_precision: Precision::FP16,
        },
    ]
}

#[derive(Debug, Clone)]
pub struct TargetRegistry {
    profiles: BTreeMap<String, TargetProfile>,
}

impl Default for TargetRegistry {
    fn default() -> Self {
        let profiles = builtin_targets()
            .into_iter()
            .map(|p| (p.name.clone(), p))
            .collect();
        Self { profiles }
    }
}

impl TargetRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, profile: TargetProfile) -> Result<()> {
        profile.validate()?;
        if self.profiles.contains_key(&profile.name) {
            return Err(Error::DuplicateTarget(profile.name));
        }
        self.profiles.insert(profile.name.clone(), profile);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&TargetProfile> {
        self.profiles
            .get(name)
            .ok_or_else(|| Error::UnknownTarget(name.to_string()))
    }

    /// All profiles sorted by name.
    pub fn list(&self) -> Vec<TargetProfile> {
        self.profiles.values().cloned().collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.profiles.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }
}
