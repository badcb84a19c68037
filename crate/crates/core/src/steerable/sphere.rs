//! Steerable vectors read as functions on the sphere, for glyph export.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::o3::{fibonacci_sphere, spherical_harmonics_unit, IrrepsLayout, Vec3};

/// `f(n) = Σ_l Σ_m v^(l)_m Y^(l)_m(n)` at every direction. The layout must
/// hold one copy of each degree `0..=L` in order.
pub fn sample_on_sphere(layout: &IrrepsLayout, coeffs: &[f64], directions: &[Vec3]) -> Result<Vec<f64>> {
    for (k, t) in layout.terms().iter().enumerate() {
        if t.mult != 1 || t.irrep.l != k as u32 {
            return Err(Error::LayoutMismatch {
                slot: format!("term {k} ({}x{})", t.mult, t.irrep),
                reason: "glyphs need exactly one copy of each degree 0..=L in order".into(),
            });
        }
    }
    if coeffs.len() != layout.dim() {
        return Err(Error::Shape(format!("{} coefficients for layout {layout}", coeffs.len())));
    }
    let lmax = layout.lmax();
    Ok(directions
        .iter()
        .map(|n| {
            spherical_harmonics_unit(lmax, n)
                .iter()
                .zip(coeffs)
                .map(|(y, c)| y * c)
                .sum()
        })
        .collect())
}

/// CSV with header `nx,ny,nz,f` over a Fibonacci grid of `count` directions.
pub fn glyph_csv(layout: &IrrepsLayout, coeffs: &[f64], count: usize) -> Result<String> {
    let dirs = fibonacci_sphere(count);
    let values = sample_on_sphere(layout, coeffs, &dirs)?;
    let mut out = String::from("nx,ny,nz,f\n");
    for (n, f) in dirs.iter().zip(values) {
        writeln!(out, "{},{},{},{}", n[0], n[1], n[2], f).expect("string write");
    }
    Ok(out)
}
