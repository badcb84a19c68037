use rayon::prelude::*;

use super::config::Target;
use crate::error::{Error, Result};
use crate::nbody::{Coupling, Sample};
use crate::o3::{cartesian_to_irrep, norm, Vec3};
use crate::segnn::{build_edges, Graph, ModelConfig};
use crate::steerable::SteerableTensor;

/// Input layout of every N-body graph: speed, centred position, velocity.
pub const NBODY_LAYOUT: &str = "1x0e+1x1o+1x1o";

/// A graph with its regression target, `[nodes × 3]` in irrep component
/// order so that it lines up with the node-vector head.
#[derive(Clone, Debug)]
pub struct Example {
    pub graph: Graph,
    pub target: Vec<f64>,
}

/// Builds the model input for one simulated state.
///
/// Node features are `‖v_i‖ ⊕ (x_i − x̄) ⊕ v_i`. The velocity is also
/// exposed as the node vector `"velocity"`. For charged systems each edge
/// carries `[q_i q_j, ‖x_ij‖]` as extra invariant inputs.
pub fn sample_graph(sample: &Sample, config: &ModelConfig) -> Result<Graph> {
    let s = &sample.input;
    let n = s.len();
    let mut centre = [0.0; 3];
    for p in &s.positions {
        for k in 0..3 {
            centre[k] += p[k] / n as f64;
        }
    }
    let mut feats = Vec::with_capacity(n * 7);
    for (p, v) in s.positions.iter().zip(&s.velocities) {
        feats.push(norm(v));
        feats.extend(cartesian_to_irrep(&[p[0] - centre[0], p[1] - centre[1], p[2] - centre[2]]));
        feats.extend(cartesian_to_irrep(v));
    }
    let layout = NBODY_LAYOUT.parse()?;
    let edges = build_edges(&s.positions, config.neighbors);
    let edge_scalars = match &s.coupling {
        Coupling::Charges(q) if config.extra_edge_scalars == 2 => edges
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (s.positions[i], s.positions[j]);
                let d: Vec3 = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
                vec![q[i] * q[j], norm(&d)]
            })
            .collect(),
        _ if config.extra_edge_scalars == 0 => Vec::new(),
        _ => {
            return Err(Error::Config(format!(
                "no edge inputs defined for {} extra scalars on this system",
                config.extra_edge_scalars
            )))
        }
    };
    let mut graph = Graph::new(s.positions.clone(), SteerableTensor::from_rows(layout, n, feats)?, edges)?;
    graph.edge_scalars = edge_scalars;
    graph.node_vectors.insert("velocity".into(), s.velocities.clone());
    Ok(graph)
}

pub fn sample_target(sample: &Sample, target: Target) -> Result<Vec<f64>> {
    let rows = match target {
        Target::Position => sample.displacement(),
        Target::Force => sample
            .target_forces
            .clone()
            .ok_or_else(|| Error::Config("force targets need gravitational data".into()))?,
    };
    Ok(rows.iter().flat_map(cartesian_to_irrep).collect())
}

pub fn prepare(samples: &[Sample], config: &ModelConfig, target: Target) -> Result<Vec<Example>> {
    samples
        .par_iter()
        .map(|s| {
            Ok(Example {
                graph: sample_graph(s, config)?,
                target: sample_target(s, target)?,
            })
        })
        .collect()
}
