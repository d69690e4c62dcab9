//! Per-target model conversion and execution of converted variants.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp16::round_f16_slice;
use crate::interp::PreparedModel;
use crate::model::{encode_package, read_package, write_dir_atomic, ModelGraph};
use crate::model::{MODEL_FILE, WEIGHTS_FILE};
use crate::quant::{calibrate, quant_params, quantize_tensor, CalibrationSet, QuantMode, QuantParams};
use crate::target::{Precision, TargetProfile};
use crate::tensor::{DType, TensorBlob};

pub const QPARAMS_FILE: &str = "qparams.json";

/// A model converted for one target: INT8 variants carry `i8` weights plus
/// quantization parameters, FP16 variants carry binary16-rounded `f32`
/// weights, FP32 variants carry the original weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvertedVariant {
    pub graph: ModelGraph,
    pub precision: Precision,
    pub target: String,
    pub weight_qparams: BTreeMap<String, QuantParams>,
    pub activation_qparams: Vec<QuantParams>,
}

impl ConvertedVariant {
    pub fn validate(&self) -> Result<()> {
        crate::model::validate_graph(&self.graph)?;
        let int8 = self.precision == Precision::INT8;
        for (i, layer) in self.graph.layers.iter().enumerate() {
            for w in &layer.weights {
                if (w.dtype() == DType::I8) != int8 {
                    return Err(Error::shape(
                        i,
                        format!(
                            "{} variant weight `{}` has dtype {}",
                            self.precision,
                            w.name(),
                            w.dtype()
                        ),
                    ));
                }
                if self.precision == Precision::INT8 && !self.weight_qparams.contains_key(w.name()) {
                    return Err(Error::validation(format!(
                        "missing quantization parameters for weight `{}`",
                        w.name()
                    )));
                }
            }
        }
        if self.precision == Precision::INT8 {
            if self.activation_qparams.len() != self.graph.layers.len() {
                return Err(Error::validation(format!(
                    "expected activation parameters for {} layers, found {}",
                    self.graph.layers.len(),
                    self.activation_qparams.len()
                )));
            }
            for qp in self.weight_qparams.values().chain(&self.activation_qparams) {
                qp.validate()?;
            }
        } else if !self.weight_qparams.is_empty() || !self.activation_qparams.is_empty() {
            return Err(Error::validation(format!(
                "{} variant must not carry quantization parameters",
                self.precision
            )));
        }
        Ok(())
    }

    /// Checks the variant's precision against the profile it claims to target.
    pub fn check_profile(&self, profile: &TargetProfile) -> Result<()> {
        if profile.name != self.target || !profile.supports(self.precision) {
            return Err(Error::PrecisionConflict {
                target: profile.name.clone(),
                precision: self.precision.to_string(),
            });
        }
        Ok(())
    }
}

/// Converts `graph` for `target` at the profile's default precision.
pub fn convert(
    graph: &ModelGraph,
    target: &TargetProfile,
    calib: Option<&CalibrationSet>,
) -> Result<ConvertedVariant> {
    convert_as(graph, target, target.default_precision, calib)
}

/// Converts `graph` for `target` at an explicit precision the profile supports.
pub fn convert_as(
    graph: &ModelGraph,
    target: &TargetProfile,
    precision: Precision,
    calib: Option<&CalibrationSet>,
) -> Result<ConvertedVariant> {
    if !target.supports(precision) {
        return Err(Error::PrecisionConflict {
            target: target.name.clone(),
            precision: precision.to_string(),
        });
    }
    crate::model::validate_graph(graph)?;
    let mut variant = ConvertedVariant {
        graph: graph.clone(),
        precision,
        target: target.name.clone(),
        weight_qparams: BTreeMap::new(),
        activation_qparams: Vec::new(),
    };
    match precision {
        Precision::FP32 => {}
        Precision::FP16 => {
            for layer in &mut variant.graph.layers {
                for w in &mut layer.weights {
                    let mut values = w.to_f32_vec()?;
                    round_f16_slice(&mut values);
                    *w = TensorBlob::from_f32(w.name(), w.shape().to_vec(), &values)?;
                }
            }
        }
        Precision::INT8 => {
            let calib = calib.ok_or_else(|| Error::CalibrationRequired {
                target: target.name.clone(),
                precision: precision.to_string(),
            })?;
            let observed = calibrate(graph, calib)?;
            let ranges: BTreeMap<_, _> = observed.weights.into_iter().collect();
            for layer in &mut variant.graph.layers {
                for w in &mut layer.weights {
                    let range = ranges[w.name()];
                    let qp = quant_params(range.min, range.max, QuantMode::Symmetric)?;
                    let floats =
                        TensorBlob::from_f32(w.name(), w.shape().to_vec(), &w.to_f32_vec()?)?;
                    *w = quantize_tensor(&floats, &qp)?;
                    variant.weight_qparams.insert(w.name().to_string(), qp);
                }
            }
            variant.activation_qparams = observed
                .activations
                .iter()
                .map(|r| {
                    let r = r.with_zero();
                    quant_params(r.min, r.max, QuantMode::Affine)
                })
                .collect::<Result<_>>()?;
        }
    }
    Ok(variant)
}

/// A converted variant with weights decoded and ready to execute.
#[derive(Debug, Clone)]
pub struct PreparedVariant {
    model: PreparedModel,
    precision: Precision,
    activation_qparams: Vec<QuantParams>,
}

impl PreparedVariant {
    pub fn new(variant: &ConvertedVariant) -> Result<Self> {
        variant.validate()?;
        let model = match variant.precision {
            Precision::FP32 | Precision::FP16 => PreparedModel::new(&variant.graph)?,
            Precision::INT8 => PreparedModel::with_weights(&variant.graph, |_, _, w| {
                let qp = &variant.weight_qparams[w.name()];
                Ok(w.to_i8_vec()?.into_iter().map(|q| qp.dequantize(q)).collect())
            })?,
        };
        Ok(Self {
            model,
            precision: variant.precision,
            activation_qparams: variant.activation_qparams.clone(),
        })
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn input_shape(&self) -> &[usize] {
        self.model.input_shape()
    }

    pub fn output_dim(&self) -> usize {
        self.model.output_dim()
    }

    pub fn infer(&self, batch: &TensorBlob) -> Result<TensorBlob> {
        match self.precision {
            Precision::FP32 => self.model.infer(batch),
            Precision::FP16 => self
                .model
                .run_batch(batch, &mut |_, out: &mut [f32]| round_f16_slice(out)),
            Precision::INT8 => self.model.run_batch(batch, &mut |i, out: &mut [f32]| {
                let qp = &self.activation_qparams[i];
                for v in out.iter_mut() {
                    *v = qp.fake_quant(*v);
                }
            }),
        }
    }
}

pub fn infer_variant(variant: &ConvertedVariant, batch: &TensorBlob) -> Result<TensorBlob> {
    PreparedVariant::new(variant)?.infer(batch)
}

#[derive(Debug, Serialize, Deserialize)]
struct NamedQParams {
    tensor: String,
    #[serde(flatten)]
    params: QuantParams,
}

#[derive(Debug, Serialize, Deserialize)]
struct QParamsFile {
    weights: Vec<NamedQParams>,
    activations: Vec<QuantParams>,
}

/// Files of a variant package, keyed by their name inside the package directory.
pub(crate) fn variant_files(variant: &ConvertedVariant) -> Result<Vec<(&'static str, Vec<u8>)>> {
    variant.validate()?;
    let (json, blob) = encode_package(&variant.graph, Some(variant.precision), Some(&variant.target))?;
    let mut files = vec![(MODEL_FILE, json), (WEIGHTS_FILE, blob)];
    if variant.precision == Precision::INT8 {
        let weights = variant
            .graph
            .weights()
            .map(|w| NamedQParams {
                tensor: w.name().to_string(),
                params: variant.weight_qparams[w.name()],
            })
            .collect();
        let qparams = QParamsFile {
            weights,
            activations: variant.activation_qparams.clone(),
        };
        let encoded = serde_json::to_vec_pretty(&qparams)
            .map_err(|e| Error::validation(format!("cannot encode qparams: {e}")))?;
        files.push((QPARAMS_FILE, encoded));
    }
    Ok(files)
}

/// Serializes a variant as a model package directory, plus `qparams.json` for INT8.
pub fn save_variant(variant: &ConvertedVariant, dir: &Path) -> Result<()> {
    let files = variant_files(variant)?;
    let borrowed: Vec<(&str, &[u8])> = files.iter().map(|(n, b)| (*n, b.as_slice())).collect();
    write_dir_atomic(dir, &borrowed)
}

pub fn load_variant(dir: &Path) -> Result<ConvertedVariant> {
    let (graph, manifest) = read_package(dir)?;
    let precision = manifest.precision.unwrap_or(Precision::FP32);
    let target = manifest.target.unwrap_or_default();
    let (weight_qparams, activation_qparams) = if precision == Precision::INT8 {
        let path = dir.join(QPARAMS_FILE);
        let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let file: QParamsFile = serde_json::from_slice(&text).map_err(|e| Error::json(&path, e))?;
        (
            file.weights.into_iter().map(|n| (n.tensor, n.params)).collect(),
            file.activations,
        )
    } else {
        (BTreeMap::new(), Vec::new())
    };
    let variant = ConvertedVariant {
        graph,
        precision,
        target,
        weight_qparams,
        activation_qparams,
    };
    variant.validate()?;
    Ok(variant)
}
