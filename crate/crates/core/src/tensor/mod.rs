//! Dense storage, reverse-mode differentiation, parameters and optimizer.

mod adam;
mod dense;
mod init;

pub mod ops;
mod param;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use dense::DenseTensor;
pub use init::init_weights;

pub use param::{ParamId, ParamStore, Parameter};
pub use tape::{differentiate, Op, Tape, Var};
