//! Run configuration, dataset preparation, training loop and evaluation.

mod config;
mod data;
mod evaluate;
mod run;

pub use config::{LrSchedule, RunConfig, Target};
pub use data::{prepare, sample_graph, sample_target, Example, NBODY_LAYOUT};
pub use evaluate::{evaluate, score, zero_baseline, EvalReport};
pub use run::{
    load_checkpoint, restore, train, Checkpoint, EpochMetrics, EpochTiming, Summary, TrainOutcome, BEST_FILE,
    CHECKPOINT_FILE, CONFIG_FILE, METRICS_FILE, SUMMARY_FILE, TIMING_FILE,
};

use crate::error::{Error, Result};
use crate::segnn::{ModelConfig, Network};

/// `config` with the `hidden_dim` whose parameter count is closest to
/// `budget`, searched over `1..=max_dim`. Ties go to the smaller width.
pub fn match_budget(config: &ModelConfig, budget: usize, max_dim: usize) -> Result<ModelConfig> {
    let mut best: Option<(usize, ModelConfig)> = None;
    for dim in 1..=max_dim {
        let c = ModelConfig {
            hidden_dim: dim,
            ..config.clone()
        };
        let Ok(net) = Network::new(&c) else { continue };
        let gap = net.num_parameters().abs_diff(budget);
        if best.as_ref().is_none_or(|(g, _)| gap < *g) {
            best = Some((gap, c));
        }
    }
    best.map(|(_, c)| c)
        .ok_or_else(|| Error::InfeasibleLayout(format!("no hidden width up to {max_dim} builds this model")))
}
