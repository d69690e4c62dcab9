//! Writes a small demo workspace: a LeNet-shaped model, calibration and
//! request tensors, and a build config.
//!
//! cargo run -p aifgen --example make_demo -- demo

use std::path::PathBuf;

use aifgen_core::synth::{lenet, random_samples};
use aifgen_core::tensor::save_tensors;
use aifgen_core::save_model;

const CONFIG: &str = "\
batch_size: 1
processing:
  postprocess:
    - argmax
";

fn main() {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo".into()));
    std::fs::create_dir_all(&root).expect("create demo dir");
    let graph = lenet(7, 0.5);
    save_model(&graph, &root.join("lenet")).expect("write model");
    let calib = random_samples(1, &graph.input_shape, 32, 0.0, 1.0);
    save_tensors(&root.join("calib.json"), &calib).expect("write calibration set");
    let data = random_samples(2, &graph.input_shape, 16, 0.0, 1.0);
    save_tensors(&root.join("dataset.json"), &data).expect("write dataset");
    std::fs::write(root.join("build.yaml"), CONFIG).expect("write config");
    println!("demo assets in {}", root.display());
}
