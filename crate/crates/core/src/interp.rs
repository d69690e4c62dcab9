//! Deterministic FP32 reference interpreter.
//!
//! Activations are laid out row-major over the per-sample shape, so
//! convolution inputs are `[height, width, channels]`. All accumulation is
//! done in `f32`.

use crate::error::{Error, Result};
use crate::model::{validate_graph, ModelGraph, Op};
use crate::tensor::TensorBlob;

#[derive(Debug, Clone)]
struct PreparedLayer {
    op: Op,
    input_shape: Vec<usize>,
    weight: Vec<f32>,
    bias: Vec<f32>,
}

/// A validated graph with weights decoded to `f32`, ready to execute.
#[derive(Debug, Clone)]
pub struct PreparedModel {
    input_shape: Vec<usize>,
    output_dim: usize,
    layers: Vec<PreparedLayer>,
}

impl PreparedModel {
    pub fn new(graph: &ModelGraph) -> Result<Self> {
        Self::with_weights(graph, |_, _, w| w.to_f32_vec())
    }

    /// Prepares `graph`, decoding each weight tensor through `decode(layer, slot, tensor)`.
    pub fn with_weights<F>(graph: &ModelGraph, mut decode: F) -> Result<Self>
    where
        F: FnMut(usize, usize, &TensorBlob) -> Result<Vec<f32>>,
    {
        let trace = validate_graph(graph)?;
        let mut layers = Vec::with_capacity(graph.layers.len());
        let mut input_shape = graph.input_shape.clone();
        for (i, layer) in graph.layers.iter().enumerate() {
            let mut decoded = layer
                .weights
                .iter()
                .enumerate()
                .map(|(slot, w)| decode(i, slot, w))
                .collect::<Result<Vec<_>>>()?;
            let bias = if decoded.len() > 1 {
                decoded.pop().unwrap()
            } else {
                Vec::new()
            };
            let weight = decoded.pop().unwrap_or_default();
            layers.push(PreparedLayer {
                op: layer.op,
                input_shape: std::mem::replace(&mut input_shape, trace[i].clone()),
                weight,
                bias,
            });
        }
        Ok(Self {
            input_shape: graph.input_shape.clone(),
            output_dim: graph.output_dim,
            layers,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Runs one sample, calling `hook(layer_index, output)` after every layer.
    /// The hook may rewrite the activation in place.
    pub fn run_sample<H>(&self, input: &[f32], hook: &mut H) -> Vec<f32>
    where
        H: FnMut(usize, &mut [f32]),
    {
        let mut x = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(x);
            hook(i, &mut x);
        }
        x
    }

    /// Splits a `[batch, ..input_shape]` tensor into its samples.
    pub fn split_batch(&self, batch: &TensorBlob) -> Result<Vec<Vec<f32>>> {
        batch.expect_dtype(crate::tensor::DType::F32)?;
        let shape = batch.shape();
        if shape.len() != self.input_shape.len() + 1 || shape[1..] != self.input_shape[..] {
            let mut expected = vec![shape.first().copied().unwrap_or(1)];
            expected.extend_from_slice(&self.input_shape);
            return Err(Error::InputShape {
                expected,
                actual: shape.to_vec(),
            });
        }
        let values = batch.to_f32_vec()?;
        let per = values.len() / shape[0];
        Ok(values.chunks_exact(per).map(<[f32]>::to_vec).collect())
    }

    pub fn run_batch<H>(&self, batch: &TensorBlob, hook: &mut H) -> Result<TensorBlob>
    where
        H: FnMut(usize, &mut [f32]),
    {
        let samples = self.split_batch(batch)?;
        let n = samples.len();
        let mut out = Vec::with_capacity(n * self.output_dim);
        for s in &samples {
            out.extend(self.run_sample(s, hook));
        }
        TensorBlob::from_f32("output", vec![n, self.output_dim], &out)
    }

    pub fn infer(&self, batch: &TensorBlob) -> Result<TensorBlob> {
        self.run_batch(batch, &mut |_, _| {})
    }
}

impl PreparedLayer {
    fn forward(&self, x: Vec<f32>) -> Vec<f32> {
        match self.op {
            Op::Dense { in_dim, out_dim } => dense(&x, &self.weight, &self.bias, in_dim, out_dim),
            Op::Conv2D {
                kernel_h,
                kernel_w,
                out_channels,
                stride,
                ..
            } => conv2d(
                &x,
                &self.input_shape,
                &self.weight,
                &self.bias,
                (kernel_h, kernel_w),
                out_channels,
                stride,
            ),
            Op::ReLU => x.into_iter().map(|v| v.max(0.0)).collect(),
            Op::MaxPool2D {
                pool_h,
                pool_w,
                stride,
            } => max_pool2d(&x, &self.input_shape, (pool_h, pool_w), stride),
            Op::Flatten => x,
            Op::Softmax => softmax(&x),
        }
    }
}

fn dense(x: &[f32], w: &[f32], b: &[f32], in_dim: usize, out_dim: usize) -> Vec<f32> {
    (0..out_dim)
        .map(|o| {
            let row = &w[o * in_dim..(o + 1) * in_dim];
            let acc = row.iter().zip(x).fold(0.0f32, |acc, (w, x)| acc + w * x);
            acc + b[o]
        })
        .collect()
}

fn conv2d(
    x: &[f32],
    in_shape: &[usize],
    k: &[f32],
    b: &[f32],
    (kh, kw): (usize, usize),
    out_c: usize,
    stride: usize,
) -> Vec<f32> {
    let (h, w, in_c) = (in_shape[0], in_shape[1], in_shape[2]);
    let oh = (h - kh) / stride + 1;
    let ow = (w - kw) / stride + 1;
    let mut out = vec![0.0f32; oh * ow * out_c];
    for oy in 0..oh {
        for ox in 0..ow {
            let base = (oy * ow + ox) * out_c;
            for oc in 0..out_c {
                let kernel = &k[oc * in_c * kh * kw..(oc + 1) * in_c * kh * kw];
                let mut acc = 0.0f32;
                for ky in 0..kh {
                    let row = (oy * stride + ky) * w;
                    for kx in 0..kw {
                        let pixel = &x[(row + ox * stride + kx) * in_c..][..in_c];
                        for (ic, &v) in pixel.iter().enumerate() {
                            acc += v * kernel[(ic * kh + ky) * kw + kx];
                        }
                    }
                }
                out[base + oc] = acc + b[oc];
            }
        }
    }
    out
}

fn max_pool2d(x: &[f32], in_shape: &[usize], (ph, pw): (usize, usize), stride: usize) -> Vec<f32> {
    let (h, w, c) = (in_shape[0], in_shape[1], in_shape[2]);
    let oh = (h - ph) / stride + 1;
    let ow = (w - pw) / stride + 1;
    let mut out = vec![f32::NEG_INFINITY; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let dst = &mut out[(oy * ow + ox) * c..][..c];
            for py in 0..ph {
                for px in 0..pw {
                    let src = &x[((oy * stride + py) * w + ox * stride + px) * c..][..c];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d = d.max(s);
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn softmax(x: &[f32]) -> Vec<f32> {
    let max = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f32> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f32 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Runs `batch` through `graph` with the reference interpreter.
pub fn infer_fp32(graph: &ModelGraph, batch: &TensorBlob) -> Result<TensorBlob> {
    PreparedModel::new(graph)?.infer(batch)
}
