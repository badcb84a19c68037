use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rng::{normal, seeded};
use crate::segnn::{Graph, GraphBatch, Network};
use crate::tensor::{differentiate, ops, DenseTensor, ParamStore, Tape, Var};

pub const FD_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub eps: f64,
    pub coordinates: usize,
    pub max_relative_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    /// Per parameter tensor, `max_k |fd − ad| / max(max_k |fd|, max_k |ad|,
    /// 1e-10)`. Insensitive to isolated coordinates whose gradient is too
    /// small for central differences to resolve in f64.
    pub tensor_errors: Vec<(String, f64)>,
    pub max_tensor_relative_error: f64,
    pub tolerance: f64,
    /// Every coordinate within `tolerance`.
    pub passed: bool,
}

impl GradientReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Walks every parameter coordinate, evaluates `probe` at `θ ± eps` and
/// turns the two probes into `L(θ+eps) − L(θ−eps)` with `delta`.
fn central_differences<P, D>(
    store: &mut ParamStore,
    grads: &std::collections::BTreeMap<crate::tensor::ParamId, DenseTensor>,
    eps: f64,
    tolerance: f64,
    probe: P,
    delta: D,
) -> Result<GradientReport>
where
    P: Fn(&ParamStore) -> Result<Vec<f64>>,
    D: Fn(&[f64], &[f64]) -> f64,
{
    let ids: Vec<_> = store.iter().map(|p| p.id).collect();
    let mut worst = None;
    let mut max_err = 0.0_f64;
    let mut coordinates = 0;
    let mut tensor_errors = Vec::with_capacity(ids.len());
    for id in ids {
        let (mut diff, mut scale) = (0.0_f64, 1e-10_f64);
        for k in 0..store.get(id).value.len() {
            let orig = store.get(id).value.data()[k];
            store.get_mut(id).value.data_mut()[k] = orig + eps;
            let up = probe(store);
            store.get_mut(id).value.data_mut()[k] = orig - eps;
            let down = probe(store);
            store.get_mut(id).value.data_mut()[k] = orig;
            let fd = delta(&up?, &down?) / (2.0 * eps);
            let ad = grads[&id].data()[k];
            let err = (fd - ad).abs() / fd.abs().max(ad.abs()).max(1e-10);
            diff = diff.max((fd - ad).abs());
            scale = scale.max(fd.abs()).max(ad.abs());
            coordinates += 1;
            if err > max_err || worst.is_none() {
                max_err = max_err.max(err);
                worst = Some((store.get(id).name.clone(), k));
            }
        }
        tensor_errors.push((store.get(id).name.clone(), diff / scale));
    }
    let max_tensor_relative_error = tensor_errors.iter().map(|t| t.1).fold(0.0, f64::max);
    Ok(GradientReport {
        eps,
        coordinates,
        max_relative_error: max_err,
        worst,
        tensor_errors,
        max_tensor_relative_error,
        tolerance,
        passed: max_err < tolerance,
    })
}

/// Compares reverse-mode gradients of the scalar `loss` with central
/// differences on every coordinate of every parameter. The relative error
/// of a coordinate is `|fd − ad| / max(|fd|, |ad|, 1e-10)`.
pub fn check_gradients_with<F>(store: &mut ParamStore, eps: f64, tolerance: f64, loss: F) -> Result<GradientReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let l = loss(&mut tape, store)?;
    let grads = differentiate(&tape, l, store)?;
    drop(tape);
    let probe = |store: &ParamStore| -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let l = loss(&mut tape, store)?;
        Ok(vec![tape.value(l).data()[0]])
    };
    central_differences(store, &grads, eps, tolerance, probe, |up, down| up[0] - down[0])
}

/// Gradient check of `MSE(net(graph), target)` against a fixed random
/// target drawn from `seed`.
///
/// The loss difference is formed as `mean((p₊ − p₋)(p₊ + p₋ − 2t))`, which
/// equals `L₊ − L₋` exactly but avoids cancelling two nearly equal losses,
/// so rounding noise does not swamp coordinates with small gradients.
pub fn check_gradients(net: &Network, graph: &Graph, eps: f64, tolerance: f64, seed: u64) -> Result<GradientReport> {
    let batch = GraphBatch::new(std::slice::from_ref(graph), net.config())?;
    let shape = net.predict(&batch)?.shape().to_vec();
    let mut rng = seeded(seed);
    let len: usize = shape.iter().product();
    let target = DenseTensor::new(shape, (0..len).map(|_| normal(&mut rng)).collect())?;
    let mut store = net.params().clone();

    let mut tape = Tape::new();
    let pred = net.forward_with(&mut tape, &store, &batch)?;
    let t = tape.constant(target.clone());
    let l = ops::loss(&mut tape, ops::Metric::Mse, pred, t)?;
    let grads = differentiate(&tape, l, &store)?;
    drop(tape);

    let probe = |store: &ParamStore| -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let pred = net.forward_with(&mut tape, store, &batch)?;
        Ok(tape.value(pred).data().to_vec())
    };
    let delta = |up: &[f64], down: &[f64]| {
        let s: f64 = up
            .iter()
            .zip(down)
            .zip(target.data())
            .map(|((p, q), t)| (p - q) * (p + q - 2.0 * t))
            .sum();
        s / len as f64
    };
    central_differences(&mut store, &grads, eps, tolerance, probe, delta)
}
