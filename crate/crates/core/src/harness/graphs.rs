use crate::error::Result;
use crate::nbody::{Coupling, Sample, SimState};
use crate::rng::{normal, Rng};
use crate::segnn::{Graph, ModelConfig};
use crate::train::sample_graph;

/// Random particle system in the N-body input format of `config`: Gaussian
/// positions and velocities, and random ±1 charges when the model takes
/// charge products as edge inputs.
pub fn random_point_cloud(config: &ModelConfig, num_nodes: usize, rng: &mut Rng) -> Result<Graph> {
    let vec3 = |rng: &mut Rng| [normal(rng), normal(rng), normal(rng)];
    let positions = (0..num_nodes).map(|_| vec3(rng)).collect();
    let velocities = (0..num_nodes).map(|_| vec3(rng)).collect();
    let coupling = if config.extra_edge_scalars > 0 {
        Coupling::Charges((0..num_nodes).map(|_| normal(rng).signum()).collect())
    } else {
        Coupling::Masses(vec![1.0; num_nodes])
    };
    let input = SimState::new(positions, velocities, coupling)?;
    let sample = Sample {
        target_positions: input.positions.clone(),
        target_forces: None,
        input,
    };
    sample_graph(&sample, config)
}
