//! Steerable E(3) equivariant graph networks.
//!
//! The crate is layered bottom-up:
//!
//! - [`tensor`]: dense `f64` storage, a reverse-mode tape, parameters and Adam.
//! - [`o3`]: irreps with parity, real spherical harmonics, Wigner-D matrices
//!   and Clebsch-Gordan tables.
//! - [`steerable`]: steerable tensors, tensor-product path enumeration,
//!   attribute-conditioned linear layers, gated nonlinearities, instance
//!   normalization and glyph sampling.
//! - [`segnn`]: graphs, the three message-passing layer families and full
//!   network assembly.
//! - [`nbody`]: charged and gravitational particle simulators and the
//!   on-disk dataset format.
//! - [`harness`]: equivariance, invariance and finite-difference gradient
//!   checks.
//! - [`train`]: run configuration, training loop and evaluation.

pub mod error;
pub mod harness;
pub mod nbody;
pub mod o3;
pub mod rng;
pub mod segnn;
pub mod steerable;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
