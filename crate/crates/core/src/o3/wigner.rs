//! Real Wigner-D matrices.
//!
//! `D^(l)(R)` is recovered from the steerability of the harmonics,
//! `Y(R n) = D Y(n)`, by a least-squares fit over a fixed set of sample
//! directions. The fit is exact up to rounding because the relation holds
//! identically; the pseudo-inverse of the sample matrix is cached per degree.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use super::group::{GroupElement, Vec3};
use super::harmonics::{fibonacci_sphere, spherical_harmonics_unit};
use super::irreps::{Irrep, IrrepsLayout};

struct Fit {
    directions: Vec<Vec3>,
    /// `K × (2l+1)` right pseudo-inverse of the `(2l+1) × K` sample matrix.
    pinv: Vec<f64>,
}

fn block(l: u32, n: &Vec3) -> Vec<f64> {
    let all = spherical_harmonics_unit(l, n);
    all[(l * l) as usize..].to_vec()
}

fn fit_for(l: u32) -> Arc<Fit> {
    static CACHE: OnceLock<RwLock<HashMap<u32, Arc<Fit>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(f) = cache.read().expect("wigner cache poisoned").get(&l) {
        return f.clone();
    }
    let d = 2 * l as usize + 1;
    let k = 2 * d + 3;
    let directions = fibonacci_sphere(k);
    // sample matrix Y: d × k, column j = Y(n_j)
    let mut y = vec![0.0; d * k];
    for (j, n) in directions.iter().enumerate() {
        for (i, v) in block(l, n).into_iter().enumerate() {
            y[i * k + j] = v;
        }
    }
    let mut gram = vec![0.0; d * d];
    for a in 0..d {
        for b in 0..d {
            gram[a * d + b] = (0..k).map(|j| y[a * k + j] * y[b * k + j]).sum();
        }
    }
    let inv = invert(&gram, d).expect("harmonic sample matrix is full rank");
    // pinv = Yᵀ (Y Yᵀ)⁻¹ : k × d
    let mut pinv = vec![0.0; k * d];
    for j in 0..k {
        for b in 0..d {
            pinv[j * d + b] = (0..d).map(|a| y[a * k + j] * inv[a * d + b]).sum();
        }
    }
    let fit = Arc::new(Fit { directions, pinv });
    cache
        .write()
        .expect("wigner cache poisoned")
        .entry(l)
        .or_insert(fit)
        .clone()
}

/// Gauss-Jordan inverse of a small dense `n × n` matrix.
pub(crate) fn invert(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&p, &q| m[p * n + col].abs().total_cmp(&m[q * n + col].abs()))?;
        if m[pivot * n + col].abs() < 1e-300 {
            return None;
        }
        for j in 0..n {
            m.swap(col * n + j, pivot * n + j);
            inv.swap(col * n + j, pivot * n + j);
        }
        let p = m[col * n + col];
        for j in 0..n {
            m[col * n + j] /= p;
            inv[col * n + j] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r * n + col];
                if f != 0.0 {
                    for j in 0..n {
                        m[r * n + j] -= f * m[col * n + j];
                        inv[r * n + j] -= f * inv[col * n + j];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// `(2l+1) × (2l+1)` orthogonal matrix (row-major) representing `g` on the
/// irrep. Under the point reflection the matrix picks up the irrep's parity
/// sign.
pub fn wigner_d(irrep: Irrep, g: &GroupElement) -> Vec<f64> {
    let l = irrep.l;
    let d = irrep.dim();
    let sign = if g.inversion { irrep.parity.sign() } else { 1.0 };
    if l == 0 || g.rotation == super::group::IDENTITY3 {
        return (0..d * d).map(|k| if k / d == k % d { sign } else { 0.0 }).collect();
    }
    let fit = fit_for(l);
    let k = fit.directions.len();
    let mut rotated = vec![0.0; d * k];
    for (j, n) in fit.directions.iter().enumerate() {
        let rn = super::group::mat_vec(&g.rotation, n);
        for (i, v) in block(l, &rn).into_iter().enumerate() {
            rotated[i * k + j] = v;
        }
    }
    let mut out = vec![0.0; d * d];
    for a in 0..d {
        for b in 0..d {
            out[a * d + b] = sign * (0..k).map(|j| rotated[a * k + j] * fit.pinv[j * d + b]).sum::<f64>();
        }
    }
    out
}

/// Block-diagonal representation of `g` on a whole layout (row-major,
/// `dim × dim`).
pub fn rep_matrix(layout: &IrrepsLayout, g: &GroupElement) -> Vec<f64> {
    let dim = layout.dim();
    let mut out = vec![0.0; dim * dim];
    for slot in layout.slots() {
        let d = slot.irrep.dim();
        let block = wigner_d(slot.irrep, g);
        for a in 0..d {
            for b in 0..d {
                out[(slot.offset + a) * dim + slot.offset + b] = block[a * d + b];
            }
        }
    }
    out
}

/// Applies `g` to every row of a row-major `[rows, layout.dim()]` buffer.
pub fn transform_rows(layout: &IrrepsLayout, g: &GroupElement, data: &mut [f64]) {
    let dim = layout.dim();
    let blocks: Vec<(usize, usize, Vec<f64>)> = layout
        .terms()
        .iter()
        .zip(layout.term_offsets())
        .map(|(t, off)| (off, t.mult, wigner_d(t.irrep, g)))
        .collect();
    let mut scratch = Vec::new();
    for row in data.chunks_mut(dim) {
        for ((off, mult, block), term) in blocks.iter().zip(layout.terms()) {
            let d = term.irrep.dim();
            for c in 0..*mult {
                let base = off + c * d;
                scratch.clear();
                scratch.extend((0..d).map(|a| (0..d).map(|b| block[a * d + b] * row[base + b]).sum::<f64>()));
                row[base..base + d].copy_from_slice(&scratch);
            }
        }
    }
}

/// Largest deviation `|D Y(n) - Y(R n)|` over the fit directions and a second,
/// independent probe set.
pub fn steerability_residual(l: u32, g: &GroupElement) -> f64 {
    let irrep = Irrep::new(l, super::irreps::Parity::of_harmonic(l));
    let d = irrep.dim();
    let dm = wigner_d(irrep, &GroupElement { rotation: g.rotation, inversion: false });
    let mut worst = 0.0_f64;
    for n in fit_for(l).directions.iter().chain(fibonacci_sphere(37).iter()) {
        let y = block(l, n);
        let ry = block(l, &super::group::mat_vec(&g.rotation, n));
        for a in 0..d {
            let dy: f64 = (0..d).map(|b| dm[a * d + b] * y[b]).sum();
            worst = worst.max((dy - ry[a]).abs());
        }
    }
    worst
}
