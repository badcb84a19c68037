//! Steerable tensors and the equivariant building blocks of the networks.

mod gate;
mod layout;
mod norm;
mod paths;
mod product;
mod sphere;
mod tensor;

pub use gate::{gate_activation, sigmoid, swish, swish_grad, GateSpec};
pub use layout::{balanced_layout, LayoutMode};
pub use norm::{instance_norm, instance_norm_values, INSTANCE_NORM_EPS};
pub use paths::{enumerate_paths, enumerate_paths_partial, enumerate_paths_with, Fault, Path, TensorProductSpec};
pub use product::{
    add_scalar_bias, conditioned_linear, scalar_columns, weighted_cg_product, ConditionedLinear, TensorProduct,
};
pub use sphere::{glyph_csv, sample_on_sphere};
pub use tensor::SteerableTensor;
