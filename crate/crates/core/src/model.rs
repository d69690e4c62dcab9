//! Neutral model graph: a sequential list of layers with their weights.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::target::Precision;
use crate::tensor::{element_count, TensorBlob, TensorEntry};

pub const MODEL_FILE: &str = "model.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

/// Layer operator and its parameters. Convolutions and pooling use valid padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Op {
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
    Conv2D {
        kernel_h: usize,
        kernel_w: usize,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
    },
    ReLU,
    MaxPool2D {
        pool_h: usize,
        pool_w: usize,
        stride: usize,
    },
    Flatten,
    Softmax,
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Dense { .. } => "Dense",
            Op::Conv2D { .. } => "Conv2D",
            Op::ReLU => "ReLU",
            Op::MaxPool2D { .. } => "MaxPool2D",
            Op::Flatten => "Flatten",
            Op::Softmax => "Softmax",
        }
    }

    /// Expected weight shapes, in storage order.
    pub fn weight_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            Op::Dense { in_dim, out_dim } => vec![vec![out_dim, in_dim], vec![out_dim]],
            Op::Conv2D {
                kernel_h,
                kernel_w,
                in_channels,
                out_channels,
                ..
            } => vec![
                vec![out_channels, in_channels, kernel_h, kernel_w],
                vec![out_channels],
            ],
            _ => Vec::new(),
        }
    }

    /// Output shape for a given per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        match *self {
            Op::Dense { in_dim, out_dim } => {
                if in_dim == 0 || out_dim == 0 {
                    return Err("Dense dimensions must be >= 1".into());
                }
                if input != [in_dim] {
                    return Err(format!("Dense expects input [{in_dim}], got {input:?}"));
                }
                Ok(vec![out_dim])
            }
            Op::Conv2D {
                kernel_h,
                kernel_w,
                in_channels,
                out_channels,
                stride,
            } => {
                if kernel_h == 0 || kernel_w == 0 || out_channels == 0 || stride == 0 {
                    return Err("Conv2D parameters must be >= 1".into());
                }
                match *input {
                    [h, w, c] if c == in_channels && h >= kernel_h && w >= kernel_w => Ok(vec![
                        (h - kernel_h) / stride + 1,
                        (w - kernel_w) / stride + 1,
                        out_channels,
                    ]),
                    _ => Err(format!(
                        "Conv2D {kernel_h}x{kernel_w} with {in_channels} input channels cannot consume {input:?}"
                    )),
                }
            }
            Op::MaxPool2D {
                pool_h,
                pool_w,
                stride,
            } => {
                if pool_h == 0 || pool_w == 0 || stride == 0 {
                    return Err("MaxPool2D parameters must be >= 1".into());
                }
                match *input {
                    [h, w, c] if h >= pool_h && w >= pool_w => {
                        Ok(vec![(h - pool_h) / stride + 1, (w - pool_w) / stride + 1, c])
                    }
                    _ => Err(format!(
                        "MaxPool2D {pool_h}x{pool_w} cannot consume {input:?}"
                    )),
                }
            }
            Op::Flatten => Ok(vec![element_count(input)]),
            Op::ReLU | Op::Softmax => Ok(input.to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub op: Op,
    pub weights: Vec<TensorBlob>,
}

impl Layer {
    pub fn new(op: Op, weights: Vec<TensorBlob>) -> Self {
        Self { op, weights }
    }

    pub fn plain(op: Op) -> Self {
        Self::new(op, Vec::new())
    }
}

/// Canonical weight tensor name for layer `index`, slot `slot` (0 = weight, 1 = bias).
pub fn weight_name(index: usize, slot: usize) -> String {
    let suffix = if slot == 0 { "weight" } else { "bias" };
    format!("layers.{index}.{suffix}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    pub name: String,
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
    pub output_dim: usize,
}

impl ModelGraph {
    pub fn input_size(&self) -> usize {
        element_count(&self.input_shape)
    }

    pub fn weights(&self) -> impl Iterator<Item = &TensorBlob> {
        self.layers.iter().flat_map(|l| l.weights.iter())
    }

    pub fn parameter_count(&self) -> usize {
        self.weights().map(TensorBlob::len).sum()
    }
}

/// Propagates shapes from `input_shape` and returns each layer's output shape.
pub fn validate_graph(graph: &ModelGraph) -> Result<Vec<Vec<usize>>> {
    if graph.layers.is_empty() {
        return Err(Error::EmptyGraph);
    }
    if graph.input_shape.is_empty() || graph.input_shape.contains(&0) {
        return Err(Error::validation(format!(
            "invalid input shape {:?}",
            graph.input_shape
        )));
    }
    let mut trace = Vec::with_capacity(graph.layers.len());
    let mut current = graph.input_shape.clone();
    for (i, layer) in graph.layers.iter().enumerate() {
        let expected = layer.op.weight_shapes();
        if layer.weights.len() != expected.len() {
            return Err(Error::shape(
                i,
                format!(
                    "{} carries {} weight tensors, expected {}",
                    layer.op.name(),
                    layer.weights.len(),
                    expected.len()
                ),
            ));
        }
        for (w, shape) in layer.weights.iter().zip(&expected) {
            if w.shape() != shape.as_slice() {
                return Err(Error::shape(
                    i,
                    format!(
                        "weight `{}` has shape {:?}, {} params require {:?}",
                        w.name(),
                        w.shape(),
                        layer.op.name(),
                        shape
                    ),
                ));
            }
        }
        current = layer.op.output_shape(&current).map_err(|m| Error::shape(i, m))?;
        trace.push(current.clone());
    }
    if current != [graph.output_dim] {
        return Err(Error::shape(
            graph.layers.len() - 1,
            format!(
                "final output {current:?} is not rank-1 of length output_dim {}",
                graph.output_dim
            ),
        ));
    }
    Ok(trace)
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerEntry {
    #[serde(flatten)]
    op: Op,
    #[serde(default)]
    weights: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct PackageManifest {
    name: String,
    input_shape: Vec<usize>,
    output_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub(crate) precision: Option<Precision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub(crate) target: Option<String>,
    layers: Vec<LayerEntry>,
}

pub(crate) fn encode_package(
    graph: &ModelGraph,
    precision: Option<Precision>,
    target: Option<&str>,
) -> Result<(Vec<u8>, Vec<u8>)> {
    let mut blob = Vec::new();
    let layers = graph
        .layers
        .iter()
        .map(|layer| LayerEntry {
            op: layer.op,
            weights: layer
                .weights
                .iter()
                .map(|w| TensorEntry::append(w, &mut blob))
                .collect(),
        })
        .collect();
    let manifest = PackageManifest {
        name: graph.name.clone(),
        input_shape: graph.input_shape.clone(),
        output_dim: graph.output_dim,
        precision,
        target: target.map(str::to_owned),
        layers,
    };
    let json = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| Error::validation(format!("cannot encode model manifest: {e}")))?;
    Ok((json, blob))
}

/// Writes `files` into a fresh sibling directory, then swaps it into place at `path`.
pub(crate) fn write_dir_atomic(path: &Path, files: &[(&str, &[u8])]) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let staging = tempfile::Builder::new()
        .prefix(".staging-")
        .tempdir_in(parent)
        .map_err(|e| Error::io(parent, e))?;
    for (name, bytes) in files {
        let file = staging.path().join(name);
        if let Some(dir) = file.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&file, bytes).map_err(|e| Error::io(&file, e))?;
    }
    let staged = staging.keep();
    if path.exists() {
        let old = tempfile::Builder::new()
            .prefix(".replaced-")
            .tempdir_in(parent)
            .map_err(|e| Error::io(parent, e))?;
        let old_path = old.path().join("old");
        fs::rename(path, &old_path).map_err(|e| Error::io(path, e))?;
        if let Err(e) = fs::rename(&staged, path) {
            let _ = fs::rename(&old_path, path);
            let _ = fs::remove_dir_all(&staged);
            return Err(Error::io(path, e));
        }
    } else if let Err(e) = fs::rename(&staged, path) {
        let _ = fs::remove_dir_all(&staged);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Saves `graph` as a model package directory (`model.json` + `weights.bin`).
pub fn save_model(graph: &ModelGraph, path: &Path) -> Result<()> {
    validate_graph(graph)?;
    let (json, blob) = encode_package(graph, None, None)?;
    write_dir_atomic(path, &[(MODEL_FILE, &json), (WEIGHTS_FILE, &blob)])
}

pub(crate) fn read_package(path: &Path) -> Result<(ModelGraph, PackageManifest)> {
    let manifest_path = path.join(MODEL_FILE);
    let text = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mut manifest: PackageManifest =
        serde_json::from_slice(&text).map_err(|e| Error::json(&manifest_path, e))?;
    let weights_path = path.join(WEIGHTS_FILE);
    let blob = fs::read(&weights_path).map_err(|e| Error::io(&weights_path, e))?;

    let declared: usize = manifest
        .layers
        .iter()
        .flat_map(|l| l.weights.iter())
        .map(|w| w.length)
        .sum();
    if declared != blob.len() {
        return Err(Error::BlobLength {
            tensor: WEIGHTS_FILE.to_string(),
            expected: declared,
            actual: blob.len(),
        });
    }

    let mut layers = Vec::with_capacity(manifest.layers.len());
    for (i, entry) in manifest.layers.iter().enumerate() {
        let weights = entry
            .weights
            .iter()
            .map(|w| w.read(&blob))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| match e {
                Error::BlobLength { .. } => Error::shape(i, e.to_string()),
                other => other,
            })?;
        layers.push(Layer::new(entry.op, weights));
    }
    let graph = ModelGraph {
        name: std::mem::take(&mut manifest.name),
        input_shape: std::mem::take(&mut manifest.input_shape),
        output_dim: manifest.output_dim,
        layers,
    };
    validate_graph(&graph)?;
    Ok((graph, manifest))
}

/// Loads and validates a model package directory.
pub fn load_model(path: &Path) -> Result<ModelGraph> {
    read_package(path).map(|(graph, _)| graph)
}
