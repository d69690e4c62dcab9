//! Per-tensor INT8 quantization and min/max calibration.
//!
//! Weights use the symmetric scheme (`zero_point = 0`), activations the
//! affine one. Rounding is half-to-even throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::PreparedModel;
use crate::model::ModelGraph;
use crate::tensor::{DType, TensorBlob};

pub const QMIN: i32 = -128;
pub const QMAX: i32 = 127;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuantMode {
    Symmetric,
    Affine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub mode: QuantMode,
    pub scale: f32,
    pub zero_point: i32,
}

impl QuantParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::QuantRange(format!(
                "scale must be positive and finite, got {}",
                self.scale
            )));
        }
        if !(QMIN..=QMAX).contains(&self.zero_point) {
            return Err(Error::QuantRange(format!(
                "zero_point {} outside [{QMIN}, {QMAX}]",
                self.zero_point
            )));
        }
        if self.mode == QuantMode::Symmetric && self.zero_point != 0 {
            return Err(Error::QuantRange(
                "symmetric quantization requires zero_point 0".into(),
            ));
        }
        Ok(())
    }

    pub fn quantize(&self, x: f32) -> i8 {
        // f64 keeps the quotient exact enough that the rounding tie is never misplaced
        let q = (x as f64 / self.scale as f64).round_ties_even() + self.zero_point as f64;
        q.clamp(QMIN as f64, QMAX as f64) as i8
    }

    pub fn dequantize(&self, q: i8) -> f32 {
        (q as i32 - self.zero_point) as f32 * self.scale
    }

    /// Dequantized value before rounding to f32. The product of an i8 step
    /// count and an f32 scale is exact in f64.
    pub fn dequantize_exact(&self, q: i8) -> f64 {
        (q as i32 - self.zero_point) as f64 * self.scale as f64
    }

    /// `dequantize(quantize(x))`.
    pub fn fake_quant(&self, x: f32) -> f32 {
        self.dequantize(self.quantize(x))
    }
}

fn round_half_even(x: f64) -> i32 {
    x.round_ties_even() as i32
}

/// Derives quantization parameters for the real range `[min, max]`.
pub fn quant_params(min: f32, max: f32, mode: QuantMode) -> Result<QuantParams> {
    if !min.is_finite() || !max.is_finite() {
        return Err(Error::QuantRange(format!(
            "non-finite range ({min}, {max})"
        )));
    }
    if min > max {
        return Err(Error::QuantRange(format!("min {min} > max {max}")));
    }
    let spread = match mode {
        QuantMode::Symmetric => min.abs().max(max.abs()) / 127.0,
        QuantMode::Affine => (max - min) / 255.0,
    };
    if !spread.is_finite() {
        return Err(Error::QuantRange(format!(
            "range ({min}, {max}) too wide to quantize"
        )));
    }
    if min == max || spread == 0.0 {
        let zero_point = match mode {
            QuantMode::Symmetric => 0,
            QuantMode::Affine => round_half_even(-(min as f64)).clamp(QMIN, QMAX),
        };
        return Ok(QuantParams {
            mode,
            scale: 1.0,
            zero_point,
        });
    }
    let scale = spread;
    Ok(match mode {
        QuantMode::Symmetric => QuantParams {
            mode,
            scale,
            zero_point: 0,
        },
        QuantMode::Affine => {
            let zero_point =
                round_half_even(-128.0 - min as f64 / scale as f64).clamp(QMIN, QMAX);
            QuantParams {
                mode,
                scale,
                zero_point,
            }
        }
    })
}

pub fn quantize_tensor(t: &TensorBlob, qp: &QuantParams) -> Result<TensorBlob> {
    t.expect_dtype(DType::F32)?;
    qp.validate()?;
    let q: Vec<i8> = t.to_f32_vec()?.into_iter().map(|x| qp.quantize(x)).collect();
    TensorBlob::from_i8(t.name(), t.shape().to_vec(), &q)
}

pub fn dequantize_tensor(q: &TensorBlob, qp: &QuantParams) -> Result<TensorBlob> {
    q.expect_dtype(DType::I8)?;
    qp.validate()?;
    let x: Vec<f32> = q.to_i8_vec()?.into_iter().map(|v| qp.dequantize(v)).collect();
    TensorBlob::from_f32(q.name(), q.shape().to_vec(), &x)
}

/// Closed real interval observed for a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f32,
    pub max: f32,
}

impl Range {
    pub fn of(values: &[f32]) -> Option<Range> {
        let mut it = values.iter().copied();
        let first = it.next()?;
        Some(it.fold(Range { min: first, max: first }, |r, v| r.include(v)))
    }

    pub fn include(self, v: f32) -> Range {
        Range {
            min: self.min.min(v),
            max: self.max.max(v),
        }
    }

    pub fn union(self, other: Range) -> Range {
        self.include(other.min).include(other.max)
    }

    /// Widens the range so that it contains zero.
    pub fn with_zero(self) -> Range {
        self.include(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationSet {
    samples: Vec<TensorBlob>,
}

impl CalibrationSet {
    /// Accepts samples shaped either `input_shape` or `[1, ..input_shape]`.
    pub fn new(samples: Vec<TensorBlob>, input_shape: &[usize]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::validation(
                "calibration set must contain at least one sample",
            ));
        }
        let samples = samples
            .into_iter()
            .map(|s| {
                s.expect_dtype(DType::F32)?;
                let shape = s.shape();
                let bare = shape == input_shape;
                let batched = shape.len() == input_shape.len() + 1
                    && shape[0] == 1
                    && &shape[1..] == input_shape;
                if !(bare || batched) {
                    return Err(Error::InputShape {
                        expected: input_shape.to_vec(),
                        actual: shape.to_vec(),
                    });
                }
                let values = s.to_f32_vec()?;
                let mut batch_shape = vec![1];
                batch_shape.extend_from_slice(input_shape);
                TensorBlob::from_f32(s.name(), batch_shape, &values)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { samples })
    }

    pub fn load(path: &std::path::Path, input_shape: &[usize]) -> Result<Self> {
        Self::new(crate::tensor::load_tensors(path)?, input_shape)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples, each shaped `[1, ..input_shape]`.
    pub fn samples(&self) -> &[TensorBlob] {
        &self.samples
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// Observed range of every layer output, indexed by layer.
    pub activations: Vec<Range>,
    /// Exact range of every weight tensor, in graph order.
    pub weights: Vec<(String, Range)>,
}

/// Observes per-layer output ranges over the calibration samples with the FP32 interpreter.
pub fn calibrate(graph: &ModelGraph, calib: &CalibrationSet) -> Result<Calibration> {
    let model = PreparedModel::new(graph)?;
    let mut activations: Vec<Option<Range>> = vec![None; model.num_layers()];
    for sample in calib.samples() {
        model.run_batch(sample, &mut |i, out: &mut [f32]| {
            if let Some(r) = Range::of(out) {
                activations[i] = Some(activations[i].map_or(r, |a| a.union(r)));
            }
        })?;
    }
    let weights = graph
        .weights()
        .map(|w| {
            let values = w.to_f32_vec()?;
            let range = Range::of(&values).expect("tensors are never empty");
            Ok((w.name().to_string(), range))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Calibration {
        activations: activations
            .into_iter()
            .map(|r| r.expect("every layer produces output"))
            .collect(),
        weights,
    })
}
