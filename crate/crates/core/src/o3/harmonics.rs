//! Real orthonormal spherical harmonics.
//!
//! Components of degree `l` are ordered `m = -l..=l`. Positive `m` carries
//! `cos(mφ)`, negative `m` carries `sin(|m|φ)`, with no Condon-Shortley
//! phase, so the degree-1 block of a unit vector `n` is
//! `√(3/4π)·(n_y, n_z, n_x)`.

use std::f64::consts::PI;

use super::group::{norm, Vec3};
use crate::error::{Error, Result};

/// Number of components of `1x0e + … + 1x(lmax)`.
pub fn harmonics_len(lmax: u32) -> usize {
    ((lmax + 1) * (lmax + 1)) as usize
}

/// Offset of component `(l, m)` inside a concatenated harmonic vector.
pub fn component_index(l: u32, m: i32) -> usize {
    (l * l) as usize + (m + l as i32) as usize
}

/// Harmonics of all degrees `0..=lmax` evaluated at `v / ‖v‖`.
pub fn spherical_harmonics(lmax: u32, v: &Vec3) -> Result<Vec<f64>> {
    let r = norm(v);
    if !(r >= 1e-12) {
        return Err(Error::DegenerateDirection(r));
    }
    Ok(spherical_harmonics_unit(lmax, &[v[0] / r, v[1] / r, v[2] / r]))
}

/// Same as [`spherical_harmonics`] for an already normalized direction.
pub fn spherical_harmonics_unit(lmax: u32, n: &Vec3) -> Vec<f64> {
    let [x, y, z] = *n;
    let lmax_u = lmax as usize;
    let mut out = vec![0.0; harmonics_len(lmax)];

    // Re / Im of (x + iy)^m
    let mut cos_m = vec![1.0; lmax_u + 1];
    let mut sin_m = vec![0.0; lmax_u + 1];
    for m in 1..=lmax_u {
        cos_m[m] = x * cos_m[m - 1] - y * sin_m[m - 1];
        sin_m[m] = x * sin_m[m - 1] + y * cos_m[m - 1];
    }

    for m in 0..=lmax_u {
        // q[l] = P_l^m(z) / sin^m(θ), built upward in l
        let mut q_prev2 = 0.0;
        let mut q_prev = (1..=m).map(|k| (2 * k - 1) as f64).product::<f64>();
        for l in m..=lmax_u {
            let q = if l == m {
                q_prev
            } else if l == m + 1 {
                (2 * m + 1) as f64 * z * q_prev
            } else {
                ((2 * l - 1) as f64 * z * q_prev - (l + m - 1) as f64 * q_prev2) / (l - m) as f64
            };
            if l > m {
                q_prev2 = q_prev;
                q_prev = q;
            }
            let k = normalization(l as u32, m as u32);
            let (lu, mi) = (l as u32, m as i32);
            if m == 0 {
                out[component_index(lu, 0)] = k * q;
            } else {
                let s = std::f64::consts::SQRT_2 * k * q;
                out[component_index(lu, mi)] = s * cos_m[m];
                out[component_index(lu, -mi)] = s * sin_m[m];
            }
        }
    }
    out
}

/// `√((2l+1)/(4π) · (l-m)!/(l+m)!)`.
fn normalization(l: u32, m: u32) -> f64 {
    let ratio: f64 = ((l - m + 1)..=(l + m)).map(|k| 1.0 / k as f64).product();
    ((2 * l + 1) as f64 / (4.0 * PI) * ratio).sqrt()
}

/// Evenly spread unit vectors (golden-angle spiral).
pub fn fibonacci_sphere(count: usize) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5.0_f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_degree_zero() {
        let y = spherical_harmonics(0, &[0.3, -2.0, 0.1]).unwrap();
        assert!((y[0] - 0.5 / PI.sqrt()).abs() < 1e-15);
        assert!((y[0] - 0.2820948).abs() < 1e-7);
    }

    #[test]
    fn degree_one_is_yzx() {
        let c = (3.0 / (4.0 * PI)).sqrt();
        let y = spherical_harmonics(1, &[0.0, 0.0, 1.0]).unwrap();
        assert!((y[1] - 0.0).abs() < 1e-15);
        assert!((y[2] - c).abs() < 1e-15);
        assert!((y[3] - 0.0).abs() < 1e-15);
        let v = [0.2, -0.5, 0.7];
        let n = norm(&v);
        let y = spherical_harmonics(1, &v).unwrap();
        assert!((y[1] - c * v[1] / n).abs() < 1e-15);
        assert!((y[2] - c * v[2] / n).abs() < 1e-15);
        assert!((y[3] - c * v[0] / n).abs() < 1e-15);
    }

    #[test]
    fn degenerate_direction_errors() {
        assert!(matches!(
            spherical_harmonics(2, &[0.0, 1e-13, 0.0]),
            Err(Error::DegenerateDirection(_))
        ));
    }

    #[test]
    fn orthonormal_under_quadrature() {
        // Gauss-Legendre in cos θ times uniform φ integrates products of
        // degree ≤ 8 exactly.
        let lmax = 4;
        let (nodes, weights) = gauss_legendre(12);
        let nphi = 24;
        let len = harmonics_len(lmax);
        let mut gram = vec![0.0; len * len];
        for (z, w) in nodes.iter().zip(&weights) {
            for k in 0..nphi {
                let phi = 2.0 * PI * k as f64 / nphi as f64;
                let s = (1.0 - z * z).sqrt();
                let y = spherical_harmonics_unit(lmax, &[s * phi.cos(), s * phi.sin(), *z]);
                let dw = w * 2.0 * PI / nphi as f64;
                for i in 0..len {
                    for j in 0..len {
                        gram[i * len + j] += dw * y[i] * y[j];
                    }
                }
            }
        }
        for i in 0..len {
            for j in 0..len {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram[i * len + j] - expect).abs() < 1e-12, "({i},{j}) = {}", gram[i * len + j]);
            }
        }
    }

    fn legendre(n: usize, t: f64) -> (f64, f64) {
        let (mut p0, mut p1) = (1.0, t);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        (p1, n as f64 * (t * p1 - p0) / (t * t - 1.0))
    }

    fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
        (0..n)
            .map(|i| {
                let mut t = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
                for _ in 0..50 {
                    let (p, dp) = legendre(n, t);
                    t -= p / dp;
                }
                let (_, dp) = legendre(n, t);
                (t, 2.0 / ((1.0 - t * t) * dp * dp))
            })
            .unzip()
    }
}
