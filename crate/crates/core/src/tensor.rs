//! Raw little-endian tensors and the json + bin container they are stored in.
//!
//! A container is a pair of files sharing a stem: `<stem>.json` lists every
//! tensor (name, dtype, shape, byte offset, byte length) and `<stem>.bin` holds
//! the concatenated raw data. Model packages, calibration sets and benchmark
//! datasets all use this layout.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DType {
    #[serde(rename = "f32")]
    F32,
    #[serde(rename = "f16")]
    F16,
    #[serde(rename = "i8")]
    I8,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F16 => 2,
            DType::I8 => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::F16 => "f16",
            DType::I8 => "i8",
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A named, typed, row-major tensor backed by little-endian bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorBlob {
    name: String,
    dtype: DType,
    shape: Vec<usize>,
    data: Vec<u8>,
}

pub fn element_count(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn check_shape(name: &str, shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::validation(format!(
            "tensor `{name}` has invalid shape {shape:?}: rank must be >= 1 and every dimension >= 1"
        )));
    }
    Ok(())
}

impl TensorBlob {
    pub fn new(
        name: impl Into<String>,
        dtype: DType,
        shape: Vec<usize>,
        data: Vec<u8>,
    ) -> Result<Self> {
        let name = name.into();
        check_shape(&name, &shape)?;
        let expected = element_count(&shape) * dtype.size();
        if data.len() != expected {
            return Err(Error::BlobLength {
                tensor: name,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            name,
            dtype,
            shape,
            data,
        })
    }

    pub fn from_f32(name: impl Into<String>, shape: Vec<usize>, values: &[f32]) -> Result<Self> {
        let data = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self::new(name, DType::F32, shape, data)
    }

    pub fn from_i8(name: impl Into<String>, shape: Vec<usize>, values: &[i8]) -> Result<Self> {
        let data = values.iter().map(|&v| v as u8).collect();
        Self::new(name, DType::I8, shape, data)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn len(&self) -> usize {
        element_count(&self.shape)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Decodes the elements as `f32`. F16 values are widened exactly; I8 is rejected.
    pub fn to_f32_vec(&self) -> Result<Vec<f32>> {
        match self.dtype {
            DType::F32 => Ok(self
                .data
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect()),
            DType::F16 => Ok(self
                .data
                .chunks_exact(2)
                .map(|c| half::f16::from_le_bytes([c[0], c[1]]).to_f32())
                .collect()),
            DType::I8 => Err(Error::Dtype {
                expected: "f32",
                actual: "i8",
            }),
        }
    }

    pub fn to_i8_vec(&self) -> Result<Vec<i8>> {
        match self.dtype {
            DType::I8 => Ok(self.data.iter().map(|&b| b as i8).collect()),
            other => Err(Error::Dtype {
                expected: "i8",
                actual: other.as_str(),
            }),
        }
    }

    pub(crate) fn expect_dtype(&self, dtype: DType) -> Result<()> {
        if self.dtype != dtype {
            return Err(Error::Dtype {
                expected: dtype.as_str(),
                actual: self.dtype.as_str(),
            });
        }
        Ok(())
    }
}

/// Location of one tensor inside a `.bin` blob.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub length: usize,
}

impl TensorEntry {
    pub(crate) fn append(tensor: &TensorBlob, blob: &mut Vec<u8>) -> Self {
        let entry = TensorEntry {
            name: tensor.name.clone(),
            dtype: tensor.dtype,
            shape: tensor.shape.clone(),
            offset: blob.len(),
            length: tensor.data.len(),
        };
        blob.extend_from_slice(&tensor.data);
        entry
    }

    pub(crate) fn read(&self, blob: &[u8]) -> Result<TensorBlob> {
        let expected = element_count(&self.shape) * self.dtype.size();
        if self.length != expected {
            return Err(Error::BlobLength {
                tensor: self.name.clone(),
                expected,
                actual: self.length,
            });
        }
        let end = self.offset.checked_add(self.length);
        match end {
            Some(end) if end <= blob.len() => TensorBlob::new(
                self.name.clone(),
                self.dtype,
                self.shape.clone(),
                blob[self.offset..end].to_vec(),
            ),
            _ => Err(Error::BlobLength {
                tensor: self.name.clone(),
                expected: self.offset.saturating_add(self.length),
                actual: blob.len(),
            }),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ContainerManifest {
    tensors: Vec<TensorEntry>,
}

/// Path of the `.bin` file paired with a container manifest.
pub fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

pub fn save_tensors(manifest: &Path, tensors: &[TensorBlob]) -> Result<()> {
    let mut blob = Vec::new();
    let entries = tensors
        .iter()
        .map(|t| TensorEntry::append(t, &mut blob))
        .collect();
    let json = serde_json::to_vec_pretty(&ContainerManifest { tensors: entries })
        .map_err(|e| Error::json(manifest, e))?;
    let bin = blob_path(manifest);
    fs::write(&bin, &blob).map_err(|e| Error::io(&bin, e))?;
    fs::write(manifest, json).map_err(|e| Error::io(manifest, e))?;
    Ok(())
}

pub fn load_tensors(manifest: &Path) -> Result<Vec<TensorBlob>> {
    let text = fs::read(manifest).map_err(|e| Error::io(manifest, e))?;
    let parsed: ContainerManifest =
        serde_json::from_slice(&text).map_err(|e| Error::json(manifest, e))?;
    let bin = blob_path(manifest);
    let blob = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let total: usize = parsed.tensors.iter().map(|e| e.length).sum();
    if total != blob.len() {
        return Err(Error::BlobLength {
            tensor: bin.display().to_string(),
            expected: total,
            actual: blob.len(),
        });
    }
    parsed.tensors.iter().map(|e| e.read(&blob)).collect()
}
