//! Structural and reduction ops shared by every layer: concatenation,
//! row gathers and scatters, residual adds, and losses.

use super::dense::DenseTensor;
use super::tape::{Op, Tape, Var};
use crate::error::{Error, Result};

fn as_matrix(t: &DenseTensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

struct Add;

impl Op for Add {
    fn name(&self) -> &'static str {
        "add"
    }

    fn backward(
        &self,
        _inputs: &[&DenseTensor],
        _output: &DenseTensor,
        grad: &DenseTensor,
        needs: &[bool],
    ) -> Result<Vec<Option<DenseTensor>>> {
        Ok(needs.iter().map(|&n| n.then(|| grad.clone())).collect())
    }
}

pub fn add(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let (x, y) = (tape.value(a), tape.value(b));
    if !x.same_shape(y) {
        return Err(Error::Shape(format!(
            "add: {:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    let mut out = x.clone();
    out.add_assign(y);
    tape.record(Box::new(Add), &[a, b], out)
}

struct Mul;

impl Op for Mul {
    fn name(&self) -> &'static str {
        "mul"
    }

    fn backward(
        &self,
        inputs: &[&DenseTensor],
        _output: &DenseTensor,
        grad: &DenseTensor,
        needs: &[bool],
    ) -> Result<Vec<Option<DenseTensor>>> {
        let cross = |other: &DenseTensor| {
            let data = grad
                .data()
                .iter()
                .zip(other.data())
                .map(|(g, o)| g * o)
                .collect();
            DenseTensor::new(grad.shape().to_vec(), data)
        };
        Ok(vec![
            if needs[0] { Some(cross(inputs[1])?) } else { None },
            if needs[1] { Some(cross(inputs[0])?) } else { None },
        ])
    }
}

/// Elementwise product.
pub fn mul(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let (x, y) = (tape.value(a), tape.value(b));
    if !x.same_shape(y) {
        return Err(Error::Shape(format!(
            "mul: {:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
    let out = DenseTensor::new(x.shape().to_vec(), data)?;
    tape.record(Box::new(Mul), &[a, b], out)
}

struct Scale(f64);

impl Op for Scale {
    fn name(&self) -> &'static str {
        "scale"
    }

    fn backward(
        &self,
        _inputs: &[&DenseTensor],
        _output: &DenseTensor,
        grad: &DenseTensor,
        _needs: &[bool],
    ) -> Result<Vec<Option<DenseTensor>>> {
        let mut g = grad.clone();
        g.scale(self.0);
        Ok(vec![Some(g)])
    }
}

pub fn scale(tape: &mut Tape, x: Var, factor: f64) -> Result<Var> {
    let mut out = tape.value(x).clone();
    out.scale(factor);
    tape.record(Box::new(Scale(factor)), &[x], out)
}

struct Sum;

impl Op for Sum {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn backward(
        &self,
        inputs: &[&DenseTensor],
        _output: &DenseTensor,
        grad: &DenseTensor,
        _needs: &[bool],
    ) -> Result<Vec<Option<DenseTensor>>> {
        let g = grad.data()[0];
        let shape = inputs[0].shape().to_vec();
        let n = inputs[0].len();
        Ok(vec![Some(DenseTensor::new(shape, vec![g; n])?)])
    }
}

/// Sum of all entries, as a scalar.
pub fn sum(tape: &mut Tape, x: Var) -> Result<Var> {
    let total = tape.value(x).data().iter().sum();
    tape.record(Box::new(Sum), &[x], DenseTensor::scalar(total))
}

struct ConcatCols {
    widths: Vec<usize>,
}

impl Op for ConcatCols {
    fn name(&self) -> &'static str {
        "concat"
    }

    fn backward(
        &self,
        inputs: &[&DenseTensor],
        output: &DenseTensor,
        grad: &DenseTensor,
        needs: &[bool],
    ) -> Result<Vec<Option<DenseTensor>>> {
        let (rows, total) = as_matrix(output);
        let g = grad.data();
        let mut offset = 0;
        let mut out = Vec::with_capacity(inputs.len());
        for ((input, &w), &need) in inputs.iter().zip(&self.widths).zip(needs) {
            if need {
                let mut data = Vec::with_capacity(rows * w);
                for r in 0..rows {
                    data.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                }
                out.push(Some(DenseTensor::new(input.shape().to_vec(), data)?));
            } else {
                out.push(None);
            }
            offset += w;
        }
        Ok(out)
    }
}

/// Concatenates row-aligned matrices along the trailing axis.
pub fn concat_cols(tape: &mut Tape, parts: &[Var]) -> Result<Var> {
    let rows = tape.value(parts[0]).rows();
    let widths: Vec<usize> = parts.iter().map(|&p| tape.value(p).cols()).collect();
    for &p in parts {
        if tape.value(p).rows() != rows {
            return Err(Error::Shape(format!(
                "concat: row counts differ ({} vs {rows})",
                tape.value(p).rows()
            )));
        }
    }
    let total: usize = widths.iter().sum();
    let mut data = Vec::with_capacity(rows * total);
    for r in 0..rows {
        for &p in parts {
            data.extend_from_slice(tape.value(p).row(r));
        }
    }
    let out = DenseTensor::matrix(rows, total, data)?;
    tape.record(Box::new(ConcatCols { widths }), parts, out)
}

struct GatherRows {
    index: Vec<usize>,
}

impl Op for GatherRows {
    fn name(&self) -> &'static str {
        "gather_rows"
    }

    fn backward(
        &self,
        inputs: &[&DenseTensor],
        _output: &DenseTensor,
        grad: &DenseTensor,
        _needs: &[bool],
    ) -> Result<Vec<Option<DenseTensor>>> {
        let cols = inputs[0].cols();
        let mut out = inputs[0].zeros_like();
        let dst = out.data_mut();
        for (k, &i) in self.index.iter().enumerate() {
            let src = &grad.data()[k * cols..(k + 1) * cols];
            for (d, s) in dst[i * cols..(i + 1) * cols].iter_mut().zip(src) {
                *d += s;
            }
        }
        Ok(vec![Some(out)])
    }
}

/// `out[k] = x[index[k]]`.
pub fn gather_rows(tape: &mut Tape, x: Var, index: &[usize]) -> Result<Var> {
    let (rows, cols) = as_matrix(tape.value(x));
    let src = tape.value(x).data();
    let mut data = Vec::with_capacity(index.len() * cols);
    for &i in index {
        if i >= rows {
            return Err(Error::Shape(format!("gather index {i} out of {rows} rows")));
        }
        data.extend_from_slice(&src[i * cols..(i + 1) * cols]);
    }
    let out = DenseTensor::matrix(index.len(), cols, data)?;
    tape.record(
        Box::new(GatherRows {
            index: index.to_vec(),
        }),
        &[x],
        out,
    )
}

struct ScatterSum {
    index: Vec<usize>,
}

impl Op for ScatterSum {
    fn name(&self) -> &'static str {
        "scatter_sum"
    }

    fn backward(
        &self,
        inputs: &[&DenseTensor],
        _output: &DenseTensor,
        grad: &DenseTensor,
        _needs: &[bool],
    ) -> Result<Vec<Option<DenseTensor>>> {
        let cols = inputs[0].cols();
        let mut data = Vec::with_capacity(self.index.len() * cols);
        for &i in &self.index {
            data.extend_from_slice(&grad.data()[i * cols..(i + 1) * cols]);
        }
        Ok(vec![Some(DenseTensor::new(inputs[0].shape().to_vec(), data)?)])
    }
}

/// `out[i] = Σ_{k : index[k] = i} x[k]`, accumulated in row order of `x`.
pub fn scatter_sum(tape: &mut Tape, x: Var, index: &[usize], num_out: usize) -> Result<Var> {
    let (rows, cols) = as_matrix(tape.value(x));
    if index.len() != rows {
        return Err(Error::Shape(format!(
            "scatter: {} indices for {rows} rows",
            index.len()
        )));
    }
    let src = tape.value(x).data();
    let mut out = DenseTensor::zeros(vec![num_out, cols]);
    let dst = out.data_mut();
    for (k, &i) in index.iter().enumerate() {
        if i >= num_out {
            return Err(Error::Shape(format!("scatter index {i} out of {num_out}")));
        }
        for (d, s) in dst[i * cols..(i + 1) * cols]
            .iter_mut()
            .zip(&src[k * cols..(k + 1) * cols])
        {
            *d += s;
        }
    }
    tape.record(
        Box::new(ScatterSum {
            index: index.to_vec(),
        }),
        &[x],
        out,
    )
}

/// Mean of the rows belonging to each segment. Empty segments yield zeros.
pub fn segment_mean(tape: &mut Tape, x: Var, segment: &[usize], num_segments: usize) -> Result<Var> {
    let summed = scatter_sum(tape, x, segment, num_segments)?;
    let mut counts = vec![0usize; num_segments];
    segment.iter().for_each(|&s| counts[s] += 1);
    let cols = tape.value(x).cols();
    let mut w = Vec::with_capacity(num_segments * cols);
    for c in counts {
        let inv = if c == 0 { 0.0 } else { 1.0 / c as f64 };
        w.extend(std::iter::repeat_n(inv, cols));
    }
    let w = tape.constant(DenseTensor::matrix(num_segments, cols, w)?);
    mul(tape, summed, w)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mse,
    Mae,
}

struct Loss {
    metric: Metric,
}

impl Op for Loss {
    fn name(&self) -> &'static str {
        match self.metric {
            Metric::Mse => "mse",
            Metric::Mae => "mae",
        }
    }

    fn backward(
        &self,
        inputs: &[&DenseTensor],
        _output: &DenseTensor,
        grad: &DenseTensor,
        needs: &[bool],
    ) -> Result<Vec<Option<DenseTensor>>> {
        let (p, t) = (inputs[0], inputs[1]);
        let n = p.len() as f64;
        let g = grad.data()[0];
        let dp: Vec<f64> = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| match self.metric {
                Metric::Mse => 2.0 * (a - b) / n * g,
                Metric::Mae => {
                    let sign = if a > b { 1.0 } else if a < b { -1.0 } else { 0.0 };
                    sign / n * g
                }
            })
            .collect();
        let dp = DenseTensor::new(p.shape().to_vec(), dp)?;
        let dt = needs[1].then(|| {
            let mut d = dp.clone();
            d.scale(-1.0);
            d
        });
        Ok(vec![needs[0].then_some(dp), dt])
    }
}

pub fn metric_value(metric: Metric, pred: &[f64], target: &[f64]) -> f64 {
    let n = pred.len() as f64;
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(a, b)| match metric {
            Metric::Mse => (a - b) * (a - b),
            Metric::Mae => (a - b).abs(),
        })
        .sum();
    total / n
}

/// Mean squared or absolute error over all entries, as a scalar.
pub fn loss(tape: &mut Tape, metric: Metric, pred: Var, target: Var) -> Result<Var> {
    let (p, t) = (tape.value(pred), tape.value(target));
    if !p.same_shape(t) || p.is_empty() {
        return Err(Error::Shape(format!(
            "loss: prediction {:?} vs target {:?}",
            p.shape(),
            t.shape()
        )));
    }
    let v = metric_value(metric, p.data(), t.data());
    tape.record(Box::new(Loss { metric }), &[pred, target], DenseTensor::scalar(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{differentiate, ParamStore};

    #[test]
    fn gradient_of_sum_is_ones() {
        let mut store = ParamStore::new();
        let p = store.add("p", DenseTensor::from_vec(vec![0.3, -1.0, 2.0]));
        let mut tape = Tape::new();
        let x = tape.param(&store, p);
        let l = sum(&mut tape, x).unwrap();
        let g = differentiate(&tape, l, &store).unwrap();
        assert_eq!(g[&p].data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn gradient_of_sum_of_squares() {
        let mut store = ParamStore::new();
        let p = store.add("p", DenseTensor::from_vec(vec![1.0, 2.0, 3.0]));
        let mut tape = Tape::new();
        let x = tape.param(&store, p);
        let sq = mul(&mut tape, x, x).unwrap();
        let l = sum(&mut tape, sq).unwrap();
        let g = differentiate(&tape, l, &store).unwrap();
        assert_eq!(g[&p].data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn unreachable_parameter_gets_zero_gradient() {
        let mut store = ParamStore::new();
        let p = store.add("p", DenseTensor::from_vec(vec![1.0, 2.0]));
        let q = store.add("q", DenseTensor::from_vec(vec![5.0]));
        let mut tape = Tape::new();
        let x = tape.param(&store, p);
        let l = sum(&mut tape, x).unwrap();
        let g = differentiate(&tape, l, &store).unwrap();
        assert_eq!(g[&q].data(), &[0.0]);
    }

    struct NoAdjoint;
    impl Op for NoAdjoint {
        fn name(&self) -> &'static str {
            "mystery"
        }
    }

    #[test]
    fn missing_adjoint_names_the_op() {
        let mut store = ParamStore::new();
        let p = store.add("p", DenseTensor::from_vec(vec![1.0]));
        let mut tape = Tape::new();
        let x = tape.param(&store, p);
        let v = tape.value(x).clone();
        let y = tape.record(Box::new(NoAdjoint), &[x], v).unwrap();
        let l = sum(&mut tape, y).unwrap();
        let err = differentiate(&tape, l, &store).unwrap_err();
        assert!(err.to_string().contains("mystery"), "{err}");
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let store = ParamStore::new();
        let mut tape = Tape::new();
        let x = tape.constant(DenseTensor::from_vec(vec![1.0, 2.0]));
        assert!(differentiate(&tape, x, &store).is_err());
    }

    #[test]
    fn gather_scatter_are_adjoint() {
        // <gather(x), y> == <x, scatter(y)>
        let mut tape = Tape::new();
        let x = tape.constant(DenseTensor::matrix(3, 2, vec![1., 2., 3., 4., 5., 6.]).unwrap());
        let idx = [2, 0, 2, 1];
        let g = gather_rows(&mut tape, x, &idx).unwrap();
        let y = DenseTensor::matrix(4, 2, vec![0.5, -1., 2., 1., -3., 0.25, 1., 1.]).unwrap();
        let yv = tape.constant(y.clone());
        let s = scatter_sum(&mut tape, yv, &idx, 3).unwrap();
        let lhs: f64 = tape.value(g).data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = tape
            .value(x)
            .data()
            .iter()
            .zip(tape.value(s).data())
            .map(|(a, b)| a * b)
            .sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn mse_is_symmetric() {
        let a = [1.0, -2.0, 0.5];
        let b = [0.0, 1.0, 0.25];
        assert_eq!(metric_value(Metric::Mse, &a, &b), metric_value(Metric::Mse, &b, &a));
        assert_eq!(metric_value(Metric::Mse, &a, &a), 0.0);
    }
}
