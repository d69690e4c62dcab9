// Straightforward reference implementations used as test oracles. They share
// no code with the interpreter: every layer is written as explicit index
// arithmetic over the documented layouts and accumulates in f64.

#![allow(dead_code)]

use aifgen_core::synth::GraphBuilder;
use aifgen_core::{ModelGraph, Op};
use rand::Rng;

fn at4(shape: [usize; 4], i: [usize; 4]) -> usize {
    ((i[0] * shape[1] + i[1]) * shape[2] + i[2]) * shape[3] + i[3]
}

fn at3(shape: [usize; 3], i: [usize; 3]) -> usize {
    (i[0] * shape[1] + i[1]) * shape[2] + i[2]
}

/// Runs one sample through `graph` with naive loops.
pub fn naive_forward(graph: &ModelGraph, input: &[f32]) -> Vec<f64> {
    let mut x: Vec<f64> = input.iter().map(|&v| v as f64).collect();
    let mut shape = graph.input_shape.clone();
    for layer in &graph.layers {
        let w: Vec<Vec<f64>> = layer
            .weights
            .iter()
            .map(|t| t.to_f32_vec().unwrap().into_iter().map(f64::from).collect())
            .collect();
        match layer.op {
            Op::Dense { in_dim, out_dim } => {
                let mut y = vec![0.0; out_dim];
                for (o, yo) in y.iter_mut().enumerate() {
                    let mut acc = w[1][o];
                    for i in 0..in_dim {
                        acc += w[0][o * in_dim + i] * x[i];
                    }
                    *yo = acc;
                }
                x = y;
                shape = vec![out_dim];
            }
            Op::Conv2D {
                kernel_h,
                kernel_w,
                in_channels,
                out_channels,
                stride,
            } => {
                let (h, wd) = (shape[0], shape[1]);
                let oh = (h - kernel_h) / stride + 1;
                let ow = (wd - kernel_w) / stride + 1;
                let kshape = [out_channels, in_channels, kernel_h, kernel_w];
                let mut y = vec![0.0; oh * ow * out_channels];
                for oy in 0..oh {
                    for ox in 0..ow {
                        for oc in 0..out_channels {
                            let mut acc = w[1][oc];
                            for ic in 0..in_channels {
                                for ky in 0..kernel_h {
                                    for kx in 0..kernel_w {
                                        let xi = at3(
                                            [h, wd, in_channels],
                                            [oy * stride + ky, ox * stride + kx, ic],
                                        );
                                        acc += x[xi] * w[0][at4(kshape, [oc, ic, ky, kx])];
                                    }
                                }
                            }
                            y[at3([oh, ow, out_channels], [oy, ox, oc])] = acc;
                        }
                    }
                }
                x = y;
                shape = vec![oh, ow, out_channels];
            }
            Op::ReLU => x.iter_mut().for_each(|v| *v = v.max(0.0)),
            Op::MaxPool2D {
                pool_h,
                pool_w,
                stride,
            } => {
                let (h, wd, c) = (shape[0], shape[1], shape[2]);
                let oh = (h - pool_h) / stride + 1;
                let ow = (wd - pool_w) / stride + 1;
                let mut y = vec![f64::NEG_INFINITY; oh * ow * c];
                for oy in 0..oh {
                    for ox in 0..ow {
                        for ch in 0..c {
                            let dst = at3([oh, ow, c], [oy, ox, ch]);
                            for py in 0..pool_h {
                                for px in 0..pool_w {
                                    let v = x[at3([h, wd, c], [oy * stride + py, ox * stride + px, ch])];
                                    if v > y[dst] {
                                        y[dst] = v;
                                    }
                                }
                            }
                        }
                    }
                }
                x = y;
                shape = vec![oh, ow, c];
            }
            Op::Flatten => shape = vec![x.len()],
            Op::Softmax => {
                let sum: f64 = x.iter().map(|v| v.exp()).sum();
                x.iter_mut().for_each(|v| *v = v.exp() / sum);
            }
        }
    }
    x
}

/// A random sequential graph whose every dimension is at most 8.
pub fn random_graph<R: Rng>(rng: &mut R, seed: u64) -> ModelGraph {
    if rng.random_bool(0.25) {
        let mut b = GraphBuilder::new("rand", vec![rng.random_range(1..=8)], seed, 1.0);
        for _ in 0..rng.random_range(1..=3) {
            b = b.dense(rng.random_range(1..=8));
            if rng.random_bool(0.5) {
                b = b.relu();
            }
        }
        if rng.random_bool(0.5) {
            b = b.softmax();
        }
        return b.build();
    }
    let h = rng.random_range(3..=8);
    let w = rng.random_range(3..=8);
    let c = rng.random_range(1..=3);
    let mut b = GraphBuilder::new("rand", vec![h, w, c], seed, 1.0);
    for _ in 0..rng.random_range(1..=2) {
        let s = b.shape().to_vec();
        let k = rng.random_range(1..=3.min(s[0]).min(s[1]));
        b = b.conv(k, rng.random_range(1..=8), rng.random_range(1..=2));
        if rng.random_bool(0.6) {
            b = b.relu();
        }
        let s = b.shape().to_vec();
        if s[0] >= 2 && s[1] >= 2 && rng.random_bool(0.5) {
            b = b.pool(2, rng.random_range(1..=2));
        }
    }
    b = b.flatten();
    if b.shape()[0] > 8 || rng.random_bool(0.7) {
        b = b.dense(rng.random_range(1..=8));
    }
    if rng.random_bool(0.5) {
        b = b.softmax();
    }
    b.build()
}
