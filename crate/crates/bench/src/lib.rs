//! Fixtures shared by the criterion benches.

use segnn::nbody::{generate, SimParams, SplitCounts};
use segnn::segnn::{GraphBatch, ModelConfig};
use segnn::train::{prepare, RunConfig, Target};

/// `ModelConfig` of the N-body preset with the given degrees.
pub fn model(params: &SimParams, l: u32) -> ModelConfig {
    ModelConfig {
        l_f: l,
        l_a: l,
        ..RunConfig::for_system(params.system).model
    }
}

/// A batch of `graphs` freshly simulated systems with their flattened targets.
pub fn batch(params: &SimParams, config: &ModelConfig, graphs: usize) -> (GraphBatch, Vec<f64>) {
    let counts = SplitCounts { train: graphs, val: 0, test: 0 };
    let ds = generate(params, counts, 0).expect("simulation");
    let examples = prepare(&ds.samples, config, Target::Position).expect("graphs");
    let gs: Vec<_> = examples.iter().map(|e| e.graph.clone()).collect();
    let target = examples.iter().flat_map(|e| e.target.iter().copied()).collect();
    (GraphBatch::new(&gs, config).expect("batch"), target)
}
