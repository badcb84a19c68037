use std::fmt;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{normal, Rng};

pub type Mat3 = [[f64; 3]; 3];
pub type Vec3 = [f64; 3];

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat_vec(a: &Mat3, v: &Vec3) -> Vec3 {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn det(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

pub fn norm(v: &Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub const IDENTITY3: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Element of O(3): a proper rotation optionally composed with the point
/// reflection `-I`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupElement {
    pub rotation: Mat3,
    pub inversion: bool,
}

impl GroupElement {
    pub fn identity() -> Self {
        Self {
            rotation: IDENTITY3,
            inversion: false,
        }
    }

    pub fn new(rotation: Mat3, inversion: bool) -> Result<Self> {
        let g = Self { rotation, inversion };
        g.validate()?;
        Ok(g)
    }

    /// Rotation `Rx(alpha) · Ry(beta) · Rx(gamma)`.
    pub fn from_euler_xyx(alpha: f64, beta: f64, gamma: f64) -> Self {
        let rx = |t: f64| {
            let (s, c) = t.sin_cos();
            [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
        };
        let (s, c) = beta.sin_cos();
        let ry = [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]];
        Self {
            rotation: mat_mul(&mat_mul(&rx(alpha), &ry), &rx(gamma)),
            inversion: false,
        }
    }

    /// Rotation of unit quaternion `(w, x, y, z)` (normalized internally).
    pub fn from_quaternion(q: [f64; 4]) -> Self {
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let [w, x, y, z] = q.map(|v| v / n);
        let rotation = [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - z * w),
                2.0 * (x * z + y * w),
            ],
            [
                2.0 * (x * y + z * w),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - x * w),
            ],
            [
                2.0 * (x * z - y * w),
                2.0 * (y * z + x * w),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ];
        Self {
            rotation,
            inversion: false,
        }
    }

    /// Haar-uniform rotation (normalized Gaussian quaternion); with
    /// `include_inversion` the reflection flag is a fair coin.
    pub fn random(rng: &mut Rng, include_inversion: bool) -> Self {
        let q = loop {
            let q = [normal(rng), normal(rng), normal(rng), normal(rng)];
            if q.iter().map(|v| v * v).sum::<f64>() > 1e-12 {
                break q;
            }
        };
        let mut g = Self::from_quaternion(q);
        if include_inversion {
            g.inversion = rng.random::<bool>();
        }
        g
    }

    pub fn point_reflection() -> Self {
        Self {
            rotation: IDENTITY3,
            inversion: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rtr = mat_mul(&transpose(&self.rotation), &self.rotation);
        let off = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| (rtr[i][j] - IDENTITY3[i][j]).abs())
            .fold(0.0, f64::max);
        let d = det(&self.rotation);
        if off > 1e-12 || (d - 1.0).abs() > 1e-12 {
            return Err(Error::Shape(format!(
                "not a proper rotation (orthogonality defect {off:e}, det {d})"
            )));
        }
        Ok(())
    }

    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        GroupElement {
            rotation: mat_mul(&self.rotation, &other.rotation),
            inversion: self.inversion ^ other.inversion,
        }
    }

    pub fn inverse(&self) -> GroupElement {
        GroupElement {
            rotation: transpose(&self.rotation),
            inversion: self.inversion,
        }
    }

    /// The 3×3 orthogonal matrix `±R` acting on Cartesian vectors.
    pub fn matrix(&self) -> Mat3 {
        let s = if self.inversion { -1.0 } else { 1.0 };
        self.rotation.map(|row| row.map(|v| s * v))
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        let r = mat_vec(&self.rotation, v);
        if self.inversion {
            r.map(|x| -x)
        } else {
            r
        }
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.rotation;
        write!(
            f,
            "{}R=[[{:.6},{:.6},{:.6}],[{:.6},{:.6},{:.6}],[{:.6},{:.6},{:.6}]]",
            if self.inversion { "-" } else { "" },
            r[0][0],
            r[0][1],
            r[0][2],
            r[1][0],
            r[1][1],
            r[1][2],
            r[2][0],
            r[2][1],
            r[2][2]
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn random_rotation_is_proper() {
        let mut rng = seeded(1);
        for _ in 0..100 {
            let g = GroupElement::random(&mut rng, false);
            assert!(!g.inversion);
            g.validate().unwrap();
        }
    }

    #[test]
    fn same_seed_same_element() {
        let a = GroupElement::random(&mut seeded(42), true);
        let b = GroupElement::random(&mut seeded(42), true);
        assert_eq!(a, b);
    }

    #[test]
    fn haar_mean_vanishes() {
        let mut rng = seeded(7);
        let n = 100_000;
        let mut acc = [[0.0; 3]; 3];
        for _ in 0..n {
            let g = GroupElement::random(&mut rng, false);
            for i in 0..3 {
                for j in 0..3 {
                    acc[i][j] += g.rotation[i][j];
                }
            }
        }
        for row in acc {
            for v in row {
                assert!((v / n as f64).abs() < 0.02);
            }
        }
    }

    #[test]
    fn euler_xyx_is_rotation() {
        let g = GroupElement::from_euler_xyx(0.3, -1.2, 2.5);
        g.validate().unwrap();
        let back = g.compose(&g.inverse());
        for i in 0..3 {
            for j in 0..3 {
                assert!((back.rotation[i][j] - IDENTITY3[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn inversion_negates() {
        let g = GroupElement::point_reflection();
        assert_eq!(g.apply(&[1.0, -2.0, 3.0]), [-1.0, 2.0, -3.0]);
    }
}
