use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::o3::{transform_rows, GroupElement, Vec3};
use crate::rng::{normal, seeded};
use crate::segnn::{Graph, GraphBatch, Network};
use crate::tensor::Tape;

/// Outcome of one sampled transformation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformCheck {
    pub element: String,
    pub translation: Vec3,
    pub max_abs_error: f64,
    pub relative_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceReport {
    /// `"equivariance"` or `"invariance"`.
    pub property: String,
    pub tolerance: f64,
    pub checks: Vec<TransformCheck>,
    pub max_abs_error: f64,
    pub max_relative_error: f64,
    pub passed: bool,
}

impl EquivarianceReport {
    fn from_checks(property: &str, tolerance: f64, checks: Vec<TransformCheck>) -> Self {
        let max_abs_error = checks.iter().map(|c| c.max_abs_error).fold(0.0, f64::max);
        let max_relative_error = checks.iter().map(|c| c.relative_error).fold(0.0, f64::max);
        let passed = checks.iter().all(|c| c.passed);
        Self {
            property: property.into(),
            tolerance,
            checks,
            max_abs_error,
            max_relative_error,
            passed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Sampling plan shared by the equivariance and invariance checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckOptions {
    /// Number of transformations, the first of which is the identity.
    pub num_samples: usize,
    pub tolerance: f64,
    pub include_reflection: bool,
    pub include_translation: bool,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            num_samples: 20,
            tolerance: 1e-8,
            include_reflection: true,
            include_translation: true,
            seed: 0,
        }
    }
}

fn samples(opts: &CheckOptions) -> Vec<(GroupElement, Vec3)> {
    let mut rng = seeded(opts.seed);
    (0..opts.num_samples)
        .map(|k| {
            if k == 0 {
                return (GroupElement::identity(), [0.0; 3]);
            }
            let g = GroupElement::random(&mut rng, opts.include_reflection);
            let t = if opts.include_translation {
                [normal(&mut rng), normal(&mut rng), normal(&mut rng)].map(|v| 3.0 * v)
            } else {
                [0.0; 3]
            };
            (g, t)
        })
        .collect()
}

fn compare(expected: &[f64], actual: &[f64], floor: f64) -> (f64, f64) {
    let abs = expected
        .iter()
        .zip(actual)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = expected.iter().map(|v| v.abs()).fold(0.0, f64::max).max(floor);
    (abs, abs / scale)
}

/// Certifies `D_out(g) f(x) = f(g x + t)` for the network output. The error
/// of each sample is relative to `max(‖f(x)‖∞, 1e-8)`.
pub fn check_equivariance(net: &Network, graph: &Graph, opts: &CheckOptions) -> Result<EquivarianceReport> {
    let config = net.config();
    let layout = net.output_layout();
    let base = net.predict(&GraphBatch::new(std::slice::from_ref(graph), config)?)?;
    let mut checks = Vec::with_capacity(opts.num_samples);
    for (g, t) in samples(opts) {
        let moved = graph.transformed(&g, &t);
        let out = net.predict(&GraphBatch::new(&[moved], config)?)?;
        let mut expected = base.data().to_vec();
        transform_rows(&layout, &g, &mut expected);
        let (max_abs_error, relative_error) = compare(&expected, out.data(), 1e-8);
        checks.push(TransformCheck {
            element: g.to_string(),
            translation: t,
            max_abs_error,
            relative_error,
            passed: relative_error < opts.tolerance,
        });
    }
    Ok(EquivarianceReport::from_checks("equivariance", opts.tolerance, checks))
}

fn invariant_outputs(net: &Network, graph: &Graph) -> Result<Vec<f64>> {
    let batch = GraphBatch::new(std::slice::from_ref(graph), net.config())?;
    let mut tape = Tape::new();
    let h = net.node_embeddings(&mut tape, &batch)?;
    let mut values = tape.value(h).data().to_vec();
    if net.output_layout().num_scalars() == net.output_layout().dim() {
        let out = net.forward(&mut tape, &batch)?;
        values.extend_from_slice(tape.value(out).data());
    }
    Ok(values)
}

/// Requires the hidden node features (and a scalar head output, when there
/// is one) to be unchanged by every sampled transformation, to absolute
/// error `opts.tolerance`. Passes only when the whole pipeline is invariant,
/// which is the case for `l_f = l_a = 0` models.
pub fn check_invariance(net: &Network, graph: &Graph, opts: &CheckOptions) -> Result<EquivarianceReport> {
    let base = invariant_outputs(net, graph)?;
    let mut checks = Vec::with_capacity(opts.num_samples);
    for (g, t) in samples(opts) {
        let out = invariant_outputs(net, &graph.transformed(&g, &t))?;
        let (max_abs_error, relative_error) = compare(&base, &out, 1e-8);
        checks.push(TransformCheck {
            element: g.to_string(),
            translation: t,
            max_abs_error,
            relative_error,
            passed: max_abs_error < opts.tolerance,
        });
    }
    Ok(EquivarianceReport::from_checks("invariance", opts.tolerance, checks))
}

/// Largest deviation of `f(P x)` from `P f(x)` under a node relabelling.
/// Only meaningful for node-level outputs.
pub fn permutation_error(net: &Network, graph: &Graph, perm: &[usize]) -> Result<f64> {
    let config = net.config();
    let base = net.predict(&GraphBatch::new(std::slice::from_ref(graph), config)?)?;
    let out = net.predict(&GraphBatch::new(&[graph.permuted(perm)], config)?)?;
    let cols = base.cols();
    let expected: Vec<f64> = perm.iter().flat_map(|&p| base.row(p).to_vec()).collect();
    debug_assert_eq!(expected.len(), perm.len() * cols);
    Ok(compare(&expected, out.data(), 0.0).0)
}
