//! Charged and gravitational particle simulators, and the dataset format.
//!
//! A dataset directory holds `manifest.json` and flat little-endian `f64`
//! payloads, row-major `[sample][particle][xyz]`:
//!
//! | file                | shape        | content                          |
//! |---------------------|--------------|----------------------------------|
//! | `positions.bin`     | `[S, N, 3]`  | input positions                  |
//! | `velocities.bin`    | `[S, N, 3]`  | input velocities                 |
//! | `charges.bin`       | `[S, N]`     | charged systems only             |
//! | `masses.bin`        | `[S, N]`     | gravitational systems only       |
//! | `targets_pos.bin`   | `[S, N, 3]`  | positions at the target time     |
//! | `targets_force.bin` | `[S, N, 3]`  | gravity only: forces at target   |
//!
//! The manifest records the split counts, the simulation parameters, the
//! generation seed and the SHA-256 of every payload.

mod dataset;
mod integrate;
mod simulate;

pub use dataset::{read_dataset, read_manifest, write_dataset, FileEntry, Manifest, DTYPE, FORMAT};
pub use integrate::{accelerations, integrate, leapfrog_step, leapfrog_step_cached, Coupling, SimState};
pub use simulate::{
    generate, initial_state, simulate, simulate_charged, simulate_gravity, Sample, SimParams, Split, SplitCounts,
    System, Trajectory, TrajectoryDataset,
};
