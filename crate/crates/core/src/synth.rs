//! Seeded synthetic models and inputs for demos, tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{weight_name, Layer, ModelGraph, Op};
use crate::tensor::TensorBlob;

/// Builds a sequential graph with weights drawn from `U(-bound, bound)`.
pub struct GraphBuilder {
    name: String,
    input_shape: Vec<usize>,
    shape: Vec<usize>,
    layers: Vec<Layer>,
    rng: ChaCha8Rng,
    bound: f32,
}

impl GraphBuilder {
    pub fn new(name: impl Into<String>, input_shape: Vec<usize>, seed: u64, bound: f32) -> Self {
        Self {
            name: name.into(),
            shape: input_shape.clone(),
            input_shape,
            layers: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            bound,
        }
    }

    fn uniform(&mut self, n: usize) -> Vec<f32> {
        (0..n)
            .map(|_| self.rng.random_range(-self.bound..=self.bound))
            .collect()
    }

    fn push(mut self, op: Op) -> Self {
        let index = self.layers.len();
        let weights = op
            .weight_shapes()
            .into_iter()
            .enumerate()
            .map(|(slot, shape)| {
                let values = self.uniform(shape.iter().product());
                TensorBlob::from_f32(weight_name(index, slot), shape, &values)
                    .expect("shape is non-empty")
            })
            .collect();
        self.shape = op
            .output_shape(&self.shape)
            .unwrap_or_else(|e| panic!("layer {index} of {}: {e}", self.name));
        self.layers.push(Layer::new(op, weights));
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn conv(self, kernel: usize, out_channels: usize, stride: usize) -> Self {
        let in_channels = self.shape[2];
        self.push(Op::Conv2D {
            kernel_h: kernel,
            kernel_w: kernel,
            in_channels,
            out_channels,
            stride,
        })
    }

    pub fn pool(self, size: usize, stride: usize) -> Self {
        self.push(Op::MaxPool2D {
            pool_h: size,
            pool_w: size,
            stride,
        })
    }

    pub fn relu(self) -> Self {
        self.push(Op::ReLU)
    }

    pub fn flatten(self) -> Self {
        self.push(Op::Flatten)
    }

    pub fn dense(self, out_dim: usize) -> Self {
        let in_dim = self.shape[0];
        self.push(Op::Dense { in_dim, out_dim })
    }

    pub fn softmax(self) -> Self {
        self.push(Op::Softmax)
    }

    pub fn build(self) -> ModelGraph {
        let output_dim = self.shape[0];
        ModelGraph {
            name: self.name,
            input_shape: self.input_shape,
            layers: self.layers,
            output_dim,
        }
    }
}

/// LeNet-5 style classifier over `[28, 28, 1]` inputs with 10 classes.
pub fn lenet(seed: u64, bound: f32) -> ModelGraph {
    GraphBuilder::new("lenet", vec![28, 28, 1], seed, bound)
        .conv(5, 6, 1)
        .relu()
        .pool(2, 2)
        .conv(5, 16, 1)
        .relu()
        .pool(2, 2)
        .flatten()
        .dense(120)
        .relu()
        .dense(84)
        .relu()
        .dense(10)
        .softmax()
        .build()
}

/// Stem conv, then stages of 1x1 conv + ReLU blocks each closed by a 2x2
/// pool, then a dense head. `stages` lists `(blocks, channels)`.
pub fn stacked_cnn(
    name: &str,
    seed: u64,
    stages: &[(usize, usize)],
    hidden: usize,
) -> ModelGraph {
    let bound = 0.5;
    let mut b = GraphBuilder::new(name, vec![32, 32, 3], seed, bound)
        .conv(3, stages[0].1, 1)
        .relu();
    for &(blocks, channels) in stages {
        for _ in 0..blocks {
            b = b.conv(1, channels, 1).relu();
        }
        b = b.pool(2, 2);
    }
    b.flatten().dense(hidden).relu().dense(10).softmax().build()
}

/// Four classifiers of increasing depth, LeNet-sized up to Inception-sized layer counts.
pub fn model_zoo(seed: u64) -> Vec<ModelGraph> {
    vec![
        lenet(seed, 0.5),
        stacked_cnn("mobilenet_like", seed + 1, &[(4, 16), (4, 32), (4, 32)], 64),
        stacked_cnn("resnet_like", seed + 2, &[(8, 32), (8, 32), (8, 64)], 128),
        stacked_cnn("inception_like", seed + 3, &[(24, 32), (24, 64), (24, 64)], 512),
    ]
}

/// `count` samples of `shape` with elements from `U(lo, hi)`, named `sample{i}`.
pub fn random_samples(seed: u64, shape: &[usize], count: usize, lo: f32, hi: f32) -> Vec<TensorBlob> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    (0..count)
        .map(|i| {
            let values: Vec<f32> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
            TensorBlob::from_f32(format!("sample{i}"), shape.to_vec(), &values)
                .expect("shape is non-empty")
        })
        .collect()
}
