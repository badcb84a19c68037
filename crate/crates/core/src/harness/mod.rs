//! Numerical certificates: equivariance and invariance of whole networks
//! under sampled E(3) transformations, and finite-difference gradient checks.

mod equivariance;
mod gradients;
mod graphs;

pub use equivariance::{check_equivariance, check_invariance, permutation_error, CheckOptions, EquivarianceReport, TransformCheck};
pub use gradients::{check_gradients, check_gradients_with, GradientReport, FD_EPS};
pub use graphs::random_point_cloud;
