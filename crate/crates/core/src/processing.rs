//! Declarative pre- and post-processing applied around model execution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::element_count;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreStep {
    Scale(f32),
    Offset(f32),
    Reshape(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostStep {
    Argmax,
    Topk(usize),
    Identity,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProcessingSpec {
    #[serde(default)]
    pub preprocess: Vec<PreStep>,
    #[serde(default)]
    pub postprocess: Vec<PostStep>,
}

/// Result of post-processing a `[batch, output_dim]` output.
#[derive(Debug, Clone, PartialEq)]
pub enum PostOutput {
    Values(Vec<f32>),
    Classes {
        class_ids: Vec<usize>,
        scores: Option<Vec<f32>>,
    },
}

impl ProcessingSpec {
    pub fn validate(&self, input_shape: &[usize], output_dim: usize) -> Result<()> {
        let input_size = element_count(input_shape);
        for step in &self.preprocess {
            match step {
                PreStep::Scale(v) | PreStep::Offset(v) if !v.is_finite() => {
                    return Err(Error::validation(format!(
                        "preprocess step {step:?} must use a finite value"
                    )))
                }
                PreStep::Reshape(shape)
                    if shape.is_empty() || shape.contains(&0) || element_count(shape) != input_size =>
                {
                    return Err(Error::validation(format!(
                        "reshape target {shape:?} has {} elements, model input {input_shape:?} has {input_size}",
                        element_count(shape)
                    )));
                }
                _ => {}
            }
        }
        let selecting: Vec<_> = self
            .postprocess
            .iter()
            .filter(|s| !matches!(s, PostStep::Identity))
            .collect();
        if selecting.len() > 1 {
            return Err(Error::validation(
                "postprocess may contain at most one of argmax/topk",
            ));
        }
        if let Some(PostStep::Topk(k)) = selecting.first() {
            if *k == 0 || *k > output_dim {
                return Err(Error::validation(format!(
                    "topk({k}) must be between 1 and the output width {output_dim}"
                )));
            }
        }
        Ok(())
    }

    pub fn has_reshape(&self) -> bool {
        self.preprocess
            .iter()
            .any(|s| matches!(s, PreStep::Reshape(_)))
    }

    /// Whether a request sample of `shape` can be fed to a model with `input_shape`.
    pub fn accepts_sample(&self, shape: &[usize], input_shape: &[usize]) -> bool {
        if self.has_reshape() {
            element_count(shape) == element_count(input_shape)
        } else {
            shape == input_shape
        }
    }

    /// Splits a request shape into (batch size, per-sample shape). A shape
    /// the model accepts as-is is a single sample; otherwise the leading
    /// dimension is taken as the batch.
    pub fn split_batch<'a>(
        &self,
        shape: &'a [usize],
        input_shape: &[usize],
    ) -> Option<(usize, &'a [usize])> {
        if self.accepts_sample(shape, input_shape) {
            Some((1, shape))
        } else if shape.len() >= 2 && self.accepts_sample(&shape[1..], input_shape) {
            Some((shape[0], &shape[1..]))
        } else {
            None
        }
    }

    pub fn apply_pre(&self, values: &mut [f32]) {
        for step in &self.preprocess {
            match *step {
                PreStep::Scale(f) => values.iter_mut().for_each(|v| *v *= f),
                PreStep::Offset(o) => values.iter_mut().for_each(|v| *v += o),
                // data is row-major; reshaping leaves it untouched
                PreStep::Reshape(_) => {}
            }
        }
    }

    pub fn apply_post(&self, outputs: Vec<f32>, output_dim: usize) -> PostOutput {
        let selector = self
            .postprocess
            .iter()
            .find(|s| !matches!(s, PostStep::Identity));
        match selector {
            Some(PostStep::Argmax) => PostOutput::Classes {
                class_ids: outputs.chunks(output_dim).map(argmax).collect(),
                scores: None,
            },
            Some(&PostStep::Topk(k)) => {
                let mut class_ids = Vec::new();
                let mut scores = Vec::new();
                for row in outputs.chunks(output_dim) {
                    for i in topk(row, k) {
                        class_ids.push(i);
                        scores.push(row[i]);
                    }
                }
                PostOutput::Classes {
                    class_ids,
                    scores: Some(scores),
                }
            }
            _ => PostOutput::Values(outputs),
        }
    }
}

/// Index of the first maximum.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Indices of the `k` largest values, descending; ties keep the lower index first.
pub fn topk(row: &[f32], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}
