use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nbody::System;
use crate::segnn::{ModelConfig, NeighborRule};
use crate::tensor::ops::Metric;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Learning rate divided by ten at 80% and again at 90% of the epochs.
    Step,
}

impl LrSchedule {
    pub fn rate(self, base: f64, epoch: usize, epochs: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Step => {
                // epoch is zero-based; compare in integers to avoid 0.8·n rounding
                let e = 10 * epoch;
                if e >= 9 * epochs {
                    base * 0.01
                } else if e >= 8 * epochs {
                    base * 0.1
                } else {
                    base
                }
            }
        }
    }
}

/// What the node-vector head predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Displacement from the input position to the target position; the
    /// error is the position error.
    Position,
    /// Force at the target time (gravitational data only).
    Force,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub dataset: PathBuf,
    pub output_dir: PathBuf,
    pub epochs: usize,
    pub batch_size: usize,
    /// Graphs per independently differentiated chunk of a batch. Chunks run
    /// in parallel; their gradients are summed in chunk order.
    pub micro_batch: usize,
    pub eval_batch_size: usize,
    pub schedule: LrSchedule,
    pub loss: Metric,
    pub target: Target,
    /// Use only the first `n` training samples.
    pub train_samples: Option<usize>,
    /// Seeds the parameter initialization and the shuffling order.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::charged()
    }
}

impl RunConfig {
    /// Charged 5-body setup: complete graph, charge product and distance as
    /// extra edge inputs, velocity as a node attribute.
    pub fn charged() -> Self {
        Self {
            model: ModelConfig {
                hidden_dim: 64,
                num_layers: 4,
                neighbors: NeighborRule::Complete,
                node_vectors: vec!["velocity".into()],
                extra_edge_scalars: 2,
                ..ModelConfig::default()
            },
            dataset: PathBuf::from("data/charged"),
            output_dir: PathBuf::from("runs/charged"),
            epochs: 1000,
            batch_size: 100,
            micro_batch: 25,
            eval_batch_size: 100,
            schedule: LrSchedule::Constant,
            loss: Metric::Mse,
            target: Target::Position,
            train_samples: None,
            seed: 0,
        }
    }

    /// Gravitational 100-body setup: 20 nearest neighbours with instance
    /// normalization.
    pub fn gravity() -> Self {
        Self {
            model: ModelConfig {
                hidden_dim: 64,
                num_layers: 4,
                neighbors: NeighborRule::Knn { k: 20 },
                node_vectors: vec!["velocity".into()],
                extra_edge_scalars: 0,
                use_instance_norm: true,
                ..ModelConfig::default()
            },
            dataset: PathBuf::from("data/gravity"),
            output_dir: PathBuf::from("runs/gravity"),
            epochs: 100,
            batch_size: 100,
            micro_batch: 5,
            eval_batch_size: 20,
            schedule: LrSchedule::Constant,
            loss: Metric::Mse,
            target: Target::Position,
            train_samples: None,
            seed: 0,
        }
    }

    pub fn for_system(system: System) -> Self {
        match system {
            System::Charged => Self::charged(),
            System::Gravity => Self::gravity(),
        }
    }

    /// Parses a complete or partial config. Keys absent from `text`, at any
    /// depth, keep their value in the charged preset.
    pub fn from_json(text: &str) -> Result<Self> {
        Self::charged().merged(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// `self` with every key present in `overrides` replaced, recursing into
    /// nested objects. Unknown keys are rejected.
    pub fn merged(&self, overrides: serde_json::Value) -> Result<Self> {
        fn merge(base: &mut serde_json::Value, over: serde_json::Value) {
            match (base, over) {
                (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
                    for (k, v) in o {
                        match b.get_mut(&k) {
                            Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                            _ => {
                                b.insert(k, v);
                            }
                        }
                    }
                }
                (b, o) => *b = o,
            }
        }
        let mut value = serde_json::to_value(self)?;
        merge(&mut value, overrides);
        let c: Self = serde_json::from_value(value)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 || self.micro_batch == 0 || self.eval_batch_size == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if self.train_samples == Some(0) {
            return Err(Error::Config("train_samples must be positive".into()));
        }
        let opt = &self.model.optimizer;
        if !(opt.lr > 0.0) || opt.weight_decay < 0.0 {
            return Err(Error::Config(format!("invalid optimizer settings {opt:?}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_schedule_drops_at_eighty_and_ninety_percent() {
        let rates: Vec<f64> = (0..10).map(|e| LrSchedule::Step.rate(1.0, e, 10)).collect();
        assert_eq!(rates, [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.1, 0.01]);
        assert_eq!(LrSchedule::Constant.rate(0.5, 99, 100), 0.5);
    }

    #[test]
    fn json_round_trip_and_overrides() {
        let c = RunConfig::gravity();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
        let partial = RunConfig::from_json(r#"{"epochs": 3, "model": {"l_f": 0, "l_a": 0}}"#).unwrap();
        assert_eq!(partial.epochs, 3);
        assert_eq!(partial.model.l_f, 0);
        assert_eq!(partial.model.extra_edge_scalars, 2, "preset keys survive a partial model");
        let g = RunConfig::gravity()
            .merged(serde_json::json!({"model": {"neighbors": {"kind": "knn", "k": 8}}}))
            .unwrap();
        assert_eq!(g.model.neighbors, NeighborRule::Knn { k: 8 });
        assert!(g.model.use_instance_norm);
        assert!(RunConfig::from_json(r#"{"model": {"depth": 3}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"epoch": 3}"#).is_err());
        assert!(RunConfig::from_json(r#"{"batch_size": 0}"#).is_err());
    }
}
