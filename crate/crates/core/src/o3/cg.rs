//! Real-basis Clebsch-Gordan coefficients.
//!
//! Built from the complex coefficients (Racah's closed form) by the unitary
//! change of basis between complex and real harmonics. The result is scaled
//! so that `Σ C² = 2l+1`, and its sign is chosen so that the first nonzero
//! entry in `(m1, m2, m)` order is positive.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use super::irreps::triangle;

/// Entries with magnitude below this are treated as exact zeros.
const ZERO: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq)]
pub struct CgTable {
    pub l1: u32,
    pub l2: u32,
    pub l: u32,
    /// Dense `[m1][m2][m]`, indices offset by the degree.
    coeffs: Vec<f64>,
    nonzero: Vec<(usize, usize, usize, f64)>,
}

impl CgTable {
    fn from_dense(l1: u32, l2: u32, l: u32, coeffs: Vec<f64>) -> Self {
        let (d1, d2, d) = dims(l1, l2, l);
        let mut nonzero = Vec::new();
        for a in 0..d1 {
            for b in 0..d2 {
                for c in 0..d {
                    let v = coeffs[(a * d2 + b) * d + c];
                    if v != 0.0 {
                        nonzero.push((a, b, c, v));
                    }
                }
            }
        }
        Self {
            l1,
            l2,
            l,
            coeffs,
            nonzero,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        dims(self.l1, self.l2, self.l)
    }

    /// Coefficient at component indices `(i1, i2, i)` (each `m + l`).
    pub fn get(&self, i1: usize, i2: usize, i: usize) -> f64 {
        let (_, d2, d) = self.dims();
        self.coeffs[(i1 * d2 + i2) * d + i]
    }

    pub fn dense(&self) -> &[f64] {
        &self.coeffs
    }

    /// Nonzero entries `(i1, i2, i, value)` in lexicographic order.
    pub fn nonzero(&self) -> &[(usize, usize, usize, f64)] {
        &self.nonzero
    }

    pub fn is_zero(&self) -> bool {
        self.nonzero.is_empty()
    }

    /// `out[i] = Σ C[i1,i2,i] · x[i1] · y[i2]`.
    pub fn contract(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; 2 * self.l as usize + 1];
        for &(a, b, c, v) in &self.nonzero {
            out[c] += v * x[a] * y[b];
        }
        out
    }

    /// Copy with the sign of one nonzero coefficient flipped. Used to
    /// verify that equivariance checks catch corrupted tables.
    pub fn with_flipped_entry(&self, which: usize) -> CgTable {
        let mut coeffs = self.coeffs.clone();
        if let Some(&(a, b, c, _)) = self.nonzero.get(which) {
            let (_, d2, d) = self.dims();
            coeffs[(a * d2 + b) * d + c] *= -1.0;
        }
        CgTable::from_dense(self.l1, self.l2, self.l, coeffs)
    }
}

fn dims(l1: u32, l2: u32, l: u32) -> (usize, usize, usize) {
    (2 * l1 as usize + 1, 2 * l2 as usize + 1, 2 * l as usize + 1)
}

/// Real-basis coupling table for `l1 ⊗ l2 → l`; all zeros outside the
/// triangle inequality. Tables are computed once and shared.
pub fn cg_coefficients(l1: u32, l2: u32, l: u32) -> Arc<CgTable> {
    static CACHE: OnceLock<RwLock<HashMap<(u32, u32, u32), Arc<CgTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(t) = cache.read().expect("cg cache poisoned").get(&(l1, l2, l)) {
        return t.clone();
    }
    let table = Arc::new(build(l1, l2, l));
    cache
        .write()
        .expect("cg cache poisoned")
        .entry((l1, l2, l))
        .or_insert(table)
        .clone()
}

fn build(l1: u32, l2: u32, l: u32) -> CgTable {
    let (d1, d2, d) = dims(l1, l2, l);
    if !triangle(l1, l2, l) {
        return CgTable::from_dense(l1, l2, l, vec![0.0; d1 * d2 * d]);
    }
    let u1 = real_from_complex(l1);
    let u2 = real_from_complex(l2);
    let u = real_from_complex(l);

    // C_real[m1,m2,m] = Σ U1[m1,μ1] U2[m2,μ2] conj(U[m,μ]) ⟨l1 μ1 l2 μ2 | l μ⟩
    let mut re = vec![0.0; d1 * d2 * d];
    let mut im = vec![0.0; d1 * d2 * d];
    for mu1 in -(l1 as i32)..=l1 as i32 {
        for mu2 in -(l2 as i32)..=l2 as i32 {
            let mu = mu1 + mu2;
            if mu.unsigned_abs() > l {
                continue;
            }
            let c = complex_cg(l1, mu1, l2, mu2, l, mu);
            if c == 0.0 {
                continue;
            }
            let (j1, j2, j) = (
                (mu1 + l1 as i32) as usize,
                (mu2 + l2 as i32) as usize,
                (mu + l as i32) as usize,
            );
            for a in 0..d1 {
                let x1 = u1[a * d1 + j1];
                if x1 == (0.0, 0.0) {
                    continue;
                }
                for b in 0..d2 {
                    let x2 = u2[b * d2 + j2];
                    if x2 == (0.0, 0.0) {
                        continue;
                    }
                    let p = cmul(x1, x2);
                    for k in 0..d {
                        let x3 = u[k * d + j];
                        if x3 == (0.0, 0.0) {
                            continue;
                        }
                        let q = cmul(p, (x3.0, -x3.1));
                        let idx = (a * d2 + b) * d + k;
                        re[idx] += c * q.0;
                        im[idx] += c * q.1;
                    }
                }
            }
        }
    }
    // The table is real up to a global phase; rotate that phase away.
    let (pivot, _) = re
        .iter()
        .zip(&im)
        .enumerate()
        .map(|(i, (r, m))| (i, r * r + m * m))
        .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    let (pr, pi) = (re[pivot], im[pivot]);
    let pn = (pr * pr + pi * pi).sqrt();
    let (cr, ci) = (pr / pn, -pi / pn);
    let mut coeffs: Vec<f64> = re
        .iter()
        .zip(&im)
        .map(|(r, m)| r * cr - m * ci)
        .collect();

    let total: f64 = coeffs.iter().map(|v| v * v).sum();
    let scale = ((2 * l + 1) as f64 / total).sqrt();
    coeffs.iter_mut().for_each(|v| {
        *v *= scale;
        if v.abs() < ZERO {
            *v = 0.0;
        }
    });
    if let Some(first) = coeffs.iter().find(|v| **v != 0.0) {
        if *first < 0.0 {
            coeffs.iter_mut().for_each(|v| *v = -*v);
        }
    }
    CgTable::from_dense(l1, l2, l, coeffs)
}

type Complex = (f64, f64);

fn cmul(a: Complex, b: Complex) -> Complex {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

/// `U[m][μ]` with real harmonic `Y_m = Σ_μ U[m][μ] Y^μ` (complex harmonics
/// with the Condon-Shortley phase). Row-major, indices offset by `l`.
fn real_from_complex(l: u32) -> Vec<Complex> {
    let d = 2 * l as usize + 1;
    let li = l as i32;
    let mut u = vec![(0.0, 0.0); d * d];
    let at = |m: i32, mu: i32| ((m + li) as usize) * d + (mu + li) as usize;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    u[at(0, 0)] = (1.0, 0.0);
    for m in 1..=li {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        u[at(m, m)] = (sign * h, 0.0);
        u[at(m, -m)] = (h, 0.0);
        u[at(-m, m)] = (0.0, -sign * h);
        u[at(-m, -m)] = (0.0, h);
    }
    u
}

fn factorial(n: i32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Complex Clebsch-Gordan coefficient `⟨l1 m1 l2 m2 | l m⟩` by Racah's formula.
fn complex_cg(l1: u32, m1: i32, l2: u32, m2: i32, l: u32, m: i32) -> f64 {
    if m1 + m2 != m || !triangle(l1, l2, l) {
        return 0.0;
    }
    let (j1, j2, j) = (l1 as i32, l2 as i32, l as i32);
    if m1.abs() > j1 || m2.abs() > j2 || m.abs() > j {
        return 0.0;
    }
    let pre = ((2 * j + 1) as f64 * factorial(j + j1 - j2) * factorial(j - j1 + j2) * factorial(j1 + j2 - j)
        / factorial(j1 + j2 + j + 1))
    .sqrt();
    let norm = (factorial(j + m)
        * factorial(j - m)
        * factorial(j1 - m1)
        * factorial(j1 + m1)
        * factorial(j2 - m2)
        * factorial(j2 + m2))
    .sqrt();
    let kmin = 0.max(j2 - j - m1).max(j1 - j + m2);
    let kmax = (j1 + j2 - j).min(j1 - m1).min(j2 + m2);
    let mut sum = 0.0;
    for k in kmin..=kmax {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign
            / (factorial(k)
                * factorial(j1 + j2 - j - k)
                * factorial(j1 - m1 - k)
                * factorial(j2 + m2 - k)
                * factorial(j - j2 + m1 + k)
                * factorial(j - j1 - m2 + k));
    }
    pre * norm * sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_values_match_tables() {
        // ⟨1/2-free⟩ integer examples: ⟨1 1 1 -1 | 0 0⟩ = 1/√3, ⟨1 0 1 0 | 2 0⟩ = √(2/3)
        assert!((complex_cg(1, 1, 1, -1, 0, 0) - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((complex_cg(1, 0, 1, 0, 2, 0) - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((complex_cg(1, 0, 1, 0, 1, 0)).abs() < 1e-15);
        assert!((complex_cg(1, 1, 1, 0, 1, 1) - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn scalar_path_is_identity() {
        for l in 0..5 {
            let t = cg_coefficients(0, l, l);
            let d = 2 * l as usize + 1;
            for a in 0..d {
                for b in 0..d {
                    let e = if a == b { 1.0 } else { 0.0 };
                    assert!((t.get(0, a, b) - e).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn dot_product_path() {
        let t = cg_coefficients(1, 1, 0);
        for a in 0..3 {
            for b in 0..3 {
                let e = if a == b { 1.0 / 3f64.sqrt() } else { 0.0 };
                assert!((t.get(a, b, 0) - e).abs() < 1e-14, "{a}{b} {}", t.get(a, b, 0));
            }
        }
    }

    #[test]
    fn cross_product_path() {
        // irrep order (y, z, x); contraction must be ±(u × v)/√2 in that order
        let t = cg_coefficients(1, 1, 1);
        let u = [0.3, -1.1, 0.7]; // cartesian x, y, z
        let v = [1.5, 0.2, -0.4];
        let to_irrep = |c: [f64; 3]| [c[1], c[2], c[0]];
        let out = t.contract(&to_irrep(u), &to_irrep(v));
        let cross = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        let expect = to_irrep(cross);
        let ratio = out[0] / expect[0];
        assert!((ratio.abs() - 1.0 / 2f64.sqrt()).abs() < 1e-14, "{ratio}");
        for k in 0..3 {
            assert!((out[k] - ratio * expect[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn normalization_and_sign() {
        for l1 in 0..4u32 {
            for l2 in 0..4u32 {
                for l in l1.abs_diff(l2)..=(l1 + l2) {
                    let t = cg_coefficients(l1, l2, l);
                    let s: f64 = t.dense().iter().map(|v| v * v).sum();
                    assert!((s - (2 * l + 1) as f64).abs() < 1e-12);
                    assert!(t.nonzero()[0].3 > 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_outside_triangle() {
        assert!(cg_coefficients(1, 1, 3).is_zero());
        assert!(cg_coefficients(3, 0, 2).is_zero());
    }
}
