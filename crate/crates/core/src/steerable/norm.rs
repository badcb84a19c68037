//! Instance normalization for steerable features.
//!
//! Within one instance (graph) and one layout term, scalar channels are first
//! centered over the instance's rows; then every sub-vector is divided by
//! `r + eps`, where `r²` is the mean squared norm over all rows and copies of
//! that term. Norms are invariant, so the map is equivariant.

use crate::error::{Error, Result};
use crate::o3::IrrepsLayout;
use crate::tensor::{DenseTensor, Op, Tape, Var};

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

struct Plan {
    /// `(offset, mult, dim, scalar)` per term.
    terms: Vec<(usize, usize, usize, bool)>,
    members: Vec<Vec<usize>>,
    cols: usize,
    eps: f64,
}

impl Plan {
    fn new(layout: &IrrepsLayout, segment: &[usize], num_segments: usize, eps: f64) -> Result<Self> {
        let mut members = vec![Vec::new(); num_segments];
        for (row, &s) in segment.iter().enumerate() {
            members
                .get_mut(s)
                .ok_or_else(|| Error::Shape(format!("segment {s} out of range {num_segments}")))?
                .push(row);
        }
        let terms = layout
            .terms()
            .iter()
            .zip(layout.term_offsets())
            .map(|(t, off)| (off, t.mult, t.irrep.dim(), t.irrep.is_scalar()))
            .collect();
        Ok(Self {
            terms,
            members,
            cols: layout.dim(),
            eps,
        })
    }

    /// Centered values and, per (segment, term), the RMS norm.
    fn centered(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut z = x.to_vec();
        let mut radii = Vec::with_capacity(self.members.len() * self.terms.len());
        for rows in &self.members {
            for &(off, mult, dim, scalar) in &self.terms {
                let width = mult * dim;
                if rows.is_empty() {
                    radii.push(0.0);
                    continue;
                }
                if scalar {
                    for c in off..off + width {
                        let mean = rows.iter().map(|&r| x[r * self.cols + c]).sum::<f64>() / rows.len() as f64;
                        for &r in rows {
                            z[r * self.cols + c] -= mean;
                        }
                    }
                }
                let sq: f64 = rows
                    .iter()
                    .map(|&r| z[r * self.cols + off..r * self.cols + off + width].iter().map(|v| v * v).sum::<f64>())
                    .sum();
                radii.push((sq / (rows.len() * mult) as f64).sqrt());
            }
        }
        (z, radii)
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let (mut z, radii) = self.centered(x);
        let nt = self.terms.len();
        for (s, rows) in self.members.iter().enumerate() {
            for (t, &(off, mult, dim, _)) in self.terms.iter().enumerate() {
                let inv = 1.0 / (radii[s * nt + t] + self.eps);
                for &r in rows {
                    for v in &mut z[r * self.cols + off..r * self.cols + off + mult * dim] {
                        *v *= inv;
                    }
                }
            }
        }
        z
    }

    fn backward(&self, x: &[f64], gy: &[f64]) -> Vec<f64> {
        let (z, radii) = self.centered(x);
        let nt = self.terms.len();
        let mut gx = vec![0.0; x.len()];
        for (s, rows) in self.members.iter().enumerate() {
            for (t, &(off, mult, dim, scalar)) in self.terms.iter().enumerate() {
                let width = mult * dim;
                let r = radii[s * nt + t];
                let denom = r + self.eps;
                let n = (rows.len() * mult) as f64;
                let dot: f64 = rows
                    .iter()
                    .flat_map(|&row| (off..off + width).map(move |c| row * self.cols + c))
                    .map(|k| gy[k] * z[k])
                    .sum();
                let coeff = if r > 0.0 { dot / (denom * denom * n * r) } else { 0.0 };
                for &row in rows {
                    for c in off..off + width {
                        let k = row * self.cols + c;
                        gx[k] = gy[k] / denom - coeff * z[k];
                    }
                }
                if scalar {
                    for c in off..off + width {
                        let mean = rows.iter().map(|&row| gx[row * self.cols + c]).sum::<f64>() / rows.len() as f64;
                        for &row in rows {
                            gx[row * self.cols + c] -= mean;
                        }
                    }
                }
            }
        }
        gx
    }
}

struct NormOp(Plan);

impl Op for NormOp {
    fn name(&self) -> &'static str {
        "instance_norm"
    }

    fn backward(
        &self,
        inputs: &[&DenseTensor],
        _output: &DenseTensor,
        grad: &DenseTensor,
        _needs: &[bool],
    ) -> Result<Vec<Option<DenseTensor>>> {
        let gx = self.0.backward(inputs[0].data(), grad.data());
        Ok(vec![Some(DenseTensor::new(inputs[0].shape().to_vec(), gx)?)])
    }
}

/// Normalizes rows of `x` (layout `layout`) per instance; `segment[row]` is
/// the instance of each row.
pub fn instance_norm(
    tape: &mut Tape,
    layout: &IrrepsLayout,
    x: Var,
    segment: &[usize],
    num_segments: usize,
    eps: f64,
) -> Result<Var> {
    let xv = tape.value(x);
    if xv.cols() != layout.dim() || xv.rows() != segment.len() {
        return Err(Error::Shape(format!(
            "instance_norm: {:?} vs layout {layout} with {} rows",
            xv.shape(),
            segment.len()
        )));
    }
    let plan = Plan::new(layout, segment, num_segments, eps)?;
    let out = DenseTensor::new(xv.shape().to_vec(), plan.forward(xv.data()))?;
    tape.record(Box::new(NormOp(plan)), &[x], out)
}

/// Forward only, outside a recording.
pub fn instance_norm_values(layout: &IrrepsLayout, x: &[f64], segment: &[usize], num_segments: usize, eps: f64) -> Result<Vec<f64>> {
    Ok(Plan::new(layout, segment, num_segments, eps)?.forward(x))
}
