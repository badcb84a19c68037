use super::DenseTensor;
use crate::rng::{normal, Rng};
use crate::steerable::TensorProductSpec;

/// Path weights drawn from `N(0, 1/fan_in)`, where `fan_in` counts the paths
/// feeding the same output sub-vector.
pub fn init_weights(spec: &TensorProductSpec, rng: &mut Rng) -> DenseTensor {
    let fan = spec.fan_in();
    let mut w = vec![0.0; spec.weight_count];
    for p in &spec.paths {
        w[p.weight] = normal(rng) / (fan[p.out_slot] as f64).sqrt();
    }
    DenseTensor::from_vec(w)
}
