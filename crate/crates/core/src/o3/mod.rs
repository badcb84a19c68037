//! Representation theory of O(3) in the real basis.

mod cg;
mod group;
mod harmonics;
mod irreps;
mod wigner;

pub use cg::{cg_coefficients, CgTable};
pub use group::{det, mat_mul, mat_vec, norm, transpose, GroupElement, Mat3, Vec3, IDENTITY3};
pub use harmonics::{
    component_index, fibonacci_sphere, harmonics_len, spherical_harmonics, spherical_harmonics_unit,
};
pub use irreps::{triangle, Irrep, IrrepsLayout, Parity, Slot, Term};
pub use wigner::{rep_matrix, steerability_residual, transform_rows, wigner_d};

/// Cartesian `(x, y, z)` to degree-1 component order `(y, z, x)`.
pub fn cartesian_to_irrep(v: &Vec3) -> Vec3 {
    [v[1], v[2], v[0]]
}

/// Inverse of [`cartesian_to_irrep`].
pub fn irrep_to_cartesian(v: &Vec3) -> Vec3 {
    [v[2], v[0], v[1]]
}

/// Random element of O(3) (or SO(3) without inversion).
pub fn random_group_element(rng: &mut crate::rng::Rng, include_inversion: bool) -> GroupElement {
    GroupElement::random(rng, include_inversion)
}
