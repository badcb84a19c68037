use std::sync::Arc;

use crate::error::{Error, Result};
use crate::o3::{Irrep, IrrepsLayout};
use crate::tensor::{DenseTensor, Op, Tape, Var};

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn swish_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Input layout `[S scalars | G gates | H]` and output layout `[S | H]`,
/// with one gate per sub-vector of `H`.
#[derive(Clone, Debug, PartialEq)]
pub struct GateSpec {
    input: IrrepsLayout,
    output: IrrepsLayout,
    scalars: usize,
    /// `(input offset, output offset, dim)` of every gated sub-vector.
    gated: Vec<(usize, usize, usize)>,
}

impl GateSpec {
    /// Gate producing `output`: its leading `0e` block is activated directly,
    /// every later sub-vector gets its own gate scalar.
    pub fn for_output(output: &IrrepsLayout) -> Self {
        let terms = output.terms();
        let lead = usize::from(terms[0].irrep.is_scalar());
        let scalars = if lead == 1 { terms[0].mult } else { 0 };
        let higher: Vec<(usize, Irrep)> = terms[lead..].iter().map(|t| (t.mult, t.irrep)).collect();
        let gates: usize = higher.iter().map(|(m, _)| m).sum();
        let mut input_terms = Vec::new();
        if scalars > 0 {
            input_terms.push((scalars, Irrep::SCALAR));
        }
        if gates > 0 {
            input_terms.push((gates, Irrep::SCALAR));
        }
        input_terms.extend(higher.iter().copied());
        let input = IrrepsLayout::new(input_terms).expect("non-empty gated layout");
        let mut gated = Vec::new();
        let (mut ii, mut oo) = (scalars + gates, scalars);
        for (mult, irrep) in &higher {
            for _ in 0..*mult {
                gated.push((ii, oo, irrep.dim()));
                ii += irrep.dim();
                oo += irrep.dim();
            }
        }
        Self {
            input,
            output: output.clone(),
            scalars,
            gated,
        }
    }

    /// Validates an explicit `[S | G | H]` split of `input`.
    pub fn new(input: &IrrepsLayout, scalars: usize, gates: usize) -> Result<Self> {
        let head = scalars + gates;
        let mut seen = 0;
        let mut rest = Vec::new();
        for t in input.terms() {
            if seen < head {
                if !t.irrep.is_scalar() || seen + t.mult > head {
                    return Err(Error::Gate(format!(
                        "{input}: the first {head} components must be whole 0e terms"
                    )));
                }
                seen += t.mult;
            } else {
                rest.push((t.mult, t.irrep));
            }
        }
        let mut out_terms = Vec::new();
        if scalars > 0 {
            out_terms.push((scalars, Irrep::SCALAR));
        }
        out_terms.extend(rest);
        let higher: usize = out_terms.iter().skip(usize::from(scalars > 0)).map(|t| t.0).sum();
        if higher != gates || seen != head {
            return Err(Error::Gate(format!(
                "{input}: {gates} gates for {higher} gated sub-vectors"
            )));
        }
        let output = IrrepsLayout::new(out_terms).map_err(|e| Error::Gate(e.to_string()))?;
        let spec = Self::for_output(&output);
        if spec.input != *input {
            return Err(Error::Gate(format!("{input} does not split as [{scalars} | {gates} | rest]")));
        }
        Ok(spec)
    }

    pub fn input(&self) -> &IrrepsLayout {
        &self.input
    }

    pub fn output(&self) -> &IrrepsLayout {
        &self.output
    }

    pub fn num_gates(&self) -> usize {
        self.gated.len()
    }

    pub fn forward_row(&self, x: &[f64], y: &mut [f64]) {
        for k in 0..self.scalars {
            y[k] = swish(x[k]);
        }
        for (k, &(i, o, d)) in self.gated.iter().enumerate() {
            let s = swish(x[self.scalars + k]);
            for c in 0..d {
                y[o + c] = s * x[i + c];
            }
        }
    }

    fn backward_row(&self, x: &[f64], gy: &[f64], gx: &mut [f64]) {
        for k in 0..self.scalars {
            gx[k] = gy[k] * swish_grad(x[k]);
        }
        for (k, &(i, o, d)) in self.gated.iter().enumerate() {
            let gk = self.scalars + k;
            let s = swish(x[gk]);
            let mut dot = 0.0;
            for c in 0..d {
                gx[i + c] = s * gy[o + c];
                dot += gy[o + c] * x[i + c];
            }
            gx[gk] = dot * swish_grad(x[gk]);
        }
    }
}

struct GateOp(Arc<GateSpec>);

impl Op for GateOp {
    fn name(&self) -> &'static str {
        "gate_activation"
    }

    fn backward(
        &self,
        inputs: &[&DenseTensor],
        _output: &DenseTensor,
        grad: &DenseTensor,
        _needs: &[bool],
    ) -> Result<Vec<Option<DenseTensor>>> {
        let x = inputs[0];
        let (di, d_out) = (self.0.input.dim(), self.0.output.dim());
        let mut gx = vec![0.0; x.len()];
        for ((xr, gyr), gxr) in x.data().chunks(di).zip(grad.data().chunks(d_out)).zip(gx.chunks_mut(di)) {
            self.0.backward_row(xr, gyr, gxr);
        }
        Ok(vec![Some(DenseTensor::new(x.shape().to_vec(), gx)?)])
    }
}

/// Swish on the leading scalars, Swish-gated higher-order sub-vectors; the
/// gate scalars are consumed.
pub fn gate_activation(tape: &mut Tape, spec: &Arc<GateSpec>, x: Var) -> Result<Var> {
    let xv = tape.value(x);
    let (di, d_out) = (spec.input.dim(), spec.output.dim());
    if xv.cols() != di {
        return Err(Error::Gate(format!(
            "expected layout {} (dim {di}), got trailing extent {}",
            spec.input,
            xv.cols()
        )));
    }
    let mut out = vec![0.0; xv.rows() * d_out];
    for (xr, yr) in xv.data().chunks(di).zip(out.chunks_mut(d_out)) {
        spec.forward_row(xr, yr);
    }
    let mut shape = xv.shape().to_vec();
    *shape.last_mut().unwrap() = d_out;
    let out = DenseTensor::new(shape, out)?;
    tape.record(Box::new(GateOp(spec.clone())), &[x], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(s: &str) -> IrrepsLayout {
        s.parse().unwrap()
    }

    #[test]
    fn gated_layout_shape() {
        let g = GateSpec::for_output(&layout("4x0e+2x1o+1x2e"));
        assert_eq!(g.input().to_string(), "4x0e+3x0e+2x1o+1x2e");
        assert_eq!(g.num_gates(), 3);
        assert_eq!(GateSpec::new(g.input(), 4, 3).unwrap(), g);
    }

    #[test]
    fn gate_count_mismatch_errors() {
        assert!(GateSpec::new(&layout("4x0e+2x0e+3x1o"), 4, 2).is_err());
        assert!(GateSpec::new(&layout("1x1o+2x0e"), 0, 2).is_err());
    }

    #[test]
    fn zero_gate_kills_block() {
        let g = GateSpec::for_output(&layout("1x0e+1x1o"));
        let mut y = [0.0; 4];
        g.forward_row(&[1.0, 0.0, 2.0, 3.0, 4.0], &mut y);
        assert_eq!(y, [swish(1.0), 0.0, 0.0, 0.0]);
    }

    #[test]
    fn scalars_only_is_swish() {
        let g = GateSpec::for_output(&layout("3x0e"));
        assert_eq!(g.input(), g.output());
        let mut y = [0.0; 3];
        g.forward_row(&[-1.0, 0.0, 2.0], &mut y);
        assert_eq!(y, [swish(-1.0), 0.0, swish(2.0)]);
    }

    #[test]
    fn vectors_only() {
        let g = GateSpec::for_output(&layout("2x1o"));
        assert_eq!(g.input().to_string(), "2x0e+2x1o");
    }

    #[test]
    fn swish_derivative_matches_difference() {
        for x in [-3.0, -0.5, 0.0, 0.7, 4.0] {
            let fd = (swish(x + 1e-6) - swish(x - 1e-6)) / 2e-6;
            assert!((fd - swish_grad(x)).abs() < 1e-8);
        }
    }
}
