//! Weighted Clebsch-Gordan tensor product.
//!
//! Paths are compiled into groups that share an input term, an attribute
//! term and an output degree. For each group the coupled intermediate
//! `t[m][row][u·V + v] = Σ C[m1,m2,m] h[row,u,m1] a[row,v,m2]` is formed once;
//! every output term of that degree then receives `t[m] · W` as one matrix
//! product per component `m`, with `W` the `(U·V) × W_out` block of path
//! weights.

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, ShapeBuilder};

use super::paths::{enumerate_paths_partial, enumerate_paths_with, Fault, TensorProductSpec};
use super::tensor::SteerableTensor;
use crate::error::{Error, Result};
use crate::o3::{cg_coefficients, CgTable, IrrepsLayout};
use crate::tensor::{DenseTensor, Op, ParamId, ParamStore, Tape, Var};

/// Rows processed per block; bounds the size of the coupled intermediate.
const ROW_BLOCK: usize = 2048;

/// Factor applied to weight gradients under [`Fault::CorruptAdjoint`].
const CORRUPT_FACTOR: f64 = 1.5;

struct Target {
    out_offset: usize,
    mult: usize,
    /// Flat weight index for `[u·V + v][w]`.
    weights: Vec<usize>,
}

struct Group {
    table: Arc<CgTable>,
    in_offset: usize,
    attr_offset: usize,
    u: usize,
    v: usize,
    d1: usize,
    d2: usize,
    d: usize,
    targets: Vec<Target>,
}

impl Group {
    fn uv(&self) -> usize {
        self.u * self.v
    }
}

/// Executable form of a [`TensorProductSpec`].
pub struct TensorProduct {
    spec: TensorProductSpec,
    groups: Vec<Group>,
    in_dim: usize,
    attr_dim: usize,
    out_dim: usize,
}

impl std::fmt::Debug for TensorProduct {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TensorProduct({})", self.spec)
    }
}

impl TensorProduct {
    pub fn new(spec: TensorProductSpec) -> Self {
        let in_slots = spec.in_layout.slots();
        let attr_slots = spec.attr_layout.slots();
        let out_slots = spec.out_layout.slots();
        let in_offsets = spec.in_layout.term_offsets();
        let attr_offsets = spec.attr_layout.term_offsets();
        let out_offsets = spec.out_layout.term_offsets();

        let mut index: BTreeMap<(usize, usize, u32), usize> = BTreeMap::new();
        let mut groups: Vec<Group> = Vec::new();
        let mut target_of: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for p in &spec.paths {
            let (is, as_, os) = (in_slots[p.in_slot], attr_slots[p.attr_slot], out_slots[p.out_slot]);
            let gi = *index.entry((is.term, as_.term, p.l)).or_insert_with(|| {
                let mut table = (*cg_coefficients(p.l1, p.l2, p.l)).clone();
                if spec.fault == Some(Fault::FlipCgSign) && table.nonzero().len() > 1 {
                    table = table.with_flipped_entry(0);
                }
                let (d1, d2, d) = table.dims();
                groups.push(Group {
                    table: Arc::new(table),
                    in_offset: in_offsets[is.term],
                    attr_offset: attr_offsets[as_.term],
                    u: spec.in_layout.terms()[is.term].mult,
                    v: spec.attr_layout.terms()[as_.term].mult,
                    d1,
                    d2,
                    d,
                    targets: Vec::new(),
                });
                groups.len() - 1
            });
            let group = &mut groups[gi];
            let ti = *target_of.entry((gi, os.term)).or_insert_with(|| {
                let mult = spec.out_layout.terms()[os.term].mult;
                group.targets.push(Target {
                    out_offset: out_offsets[os.term],
                    mult,
                    weights: vec![usize::MAX; group.u * group.v * mult],
                });
                group.targets.len() - 1
            });
            let v = group.v;
            let target = &mut group.targets[ti];
            target.weights[(is.copy * v + as_.copy) * target.mult + os.copy] = p.weight;
        }
        debug_assert!(groups
            .iter()
            .all(|g| g.targets.iter().all(|t| t.weights.iter().all(|&w| w != usize::MAX))));
        Self {
            in_dim: spec.in_layout.dim(),
            attr_dim: spec.attr_layout.dim(),
            out_dim: spec.out_layout.dim(),
            spec,
            groups,
        }
    }

    pub fn build(
        in_layout: &IrrepsLayout,
        attr_layout: &IrrepsLayout,
        out_layout: &IrrepsLayout,
        fault: Option<Fault>,
    ) -> Result<Self> {
        Ok(Self::new(enumerate_paths_with(in_layout, attr_layout, out_layout, fault)?))
    }

    /// [`TensorProduct::build`] tolerating unreachable output slots, which
    /// are left at zero.
    pub fn build_partial(
        in_layout: &IrrepsLayout,
        attr_layout: &IrrepsLayout,
        out_layout: &IrrepsLayout,
        fault: Option<Fault>,
    ) -> Result<Self> {
        Ok(Self::new(enumerate_paths_partial(in_layout, attr_layout, out_layout, fault)?))
    }

    pub fn spec(&self) -> &TensorProductSpec {
        &self.spec
    }

    pub fn weight_count(&self) -> usize {
        self.spec.weight_count
    }

    fn check(&self, h: &DenseTensor, a: &DenseTensor, w: &DenseTensor) -> Result<usize> {
        let mismatch = |slot: &str, reason: String| Error::LayoutMismatch {
            slot: slot.to_string(),
            reason,
        };
        if h.cols() != self.in_dim {
            return Err(mismatch(
                "input",
                format!("expected {} ({}), got trailing extent {}", self.spec.in_layout, self.in_dim, h.cols()),
            ));
        }
        if a.cols() != self.attr_dim {
            return Err(mismatch(
                "attribute",
                format!("expected {} ({}), got trailing extent {}", self.spec.attr_layout, self.attr_dim, a.cols()),
            ));
        }
        if h.rows() != a.rows() {
            return Err(mismatch("attribute", format!("{} rows vs {} input rows", a.rows(), h.rows())));
        }
        if w.len() != self.spec.weight_count {
            return Err(mismatch(
                "weights",
                format!("expected {} weights, got {}", self.spec.weight_count, w.len()),
            ));
        }
        Ok(h.rows())
    }

    fn coupled(&self, g: &Group, h: &[f64], a: &[f64], rows: usize, t: &mut Vec<f64>) {
        let uv = g.uv();
        t.clear();
        t.resize(g.d * rows * uv, 0.0);
        for &(i1, i2, i, c) in g.table.nonzero() {
            let tm = &mut t[i * rows * uv..(i + 1) * rows * uv];
            for r in 0..rows {
                let hr = &h[r * self.in_dim + g.in_offset..];
                let ar = &a[r * self.attr_dim + g.attr_offset..];
                let trow = &mut tm[r * uv..(r + 1) * uv];
                for u in 0..g.u {
                    let hu = c * hr[u * g.d1 + i1];
                    let dst = &mut trow[u * g.v..(u + 1) * g.v];
                    for (v, slot) in dst.iter_mut().enumerate() {
                        *slot += hu * ar[v * g.d2 + i2];
                    }
                }
            }
        }
    }

    fn weight_block(target: &Target, uv: usize, w: &[f64]) -> Array2<f64> {
        Array2::from_shape_fn((uv, target.mult), |(k, o)| w[target.weights[k * target.mult + o]])
    }

    /// Raw forward on row-major buffers.
    pub fn forward_raw(&self, h: &[f64], a: &[f64], w: &[f64], rows: usize) -> Vec<f64> {
        let mut out = vec![0.0; rows * self.out_dim];
        let mut t = Vec::new();
        for g in &self.groups {
            let uv = g.uv();
            let blocks: Vec<Array2<f64>> = g.targets.iter().map(|tg| Self::weight_block(tg, uv, w)).collect();
            for start in (0..rows).step_by(ROW_BLOCK) {
                let n = ROW_BLOCK.min(rows - start);
                self.coupled(g, &h[start * self.in_dim..], &a[start * self.attr_dim..], n, &mut t);
                let out_block = &mut out[start * self.out_dim..(start + n) * self.out_dim];
                for (tg, wb) in g.targets.iter().zip(&blocks) {
                    for m in 0..g.d {
                        let tm = ArrayView2::from_shape((n, uv), &t[m * n * uv..(m + 1) * n * uv]).unwrap();
                        let mut dst = ArrayViewMut2::from_shape(
                            (n, tg.mult).strides((self.out_dim, g.d)),
                            &mut out_block[tg.out_offset + m..],
                        )
                        .unwrap();
                        general_mat_mul(1.0, &tm, wb, 1.0, &mut dst);
                    }
                }
            }
        }
        out
    }

    /// Gradients with respect to `(h, a, w)`; only the requested ones are
    /// computed.
    #[allow(clippy::too_many_arguments)]
    pub fn backward_raw(
        &self,
        h: &[f64],
        a: &[f64],
        w: &[f64],
        grad: &[f64],
        rows: usize,
        needs: [bool; 3],
    ) -> (Option<Vec<f64>>, Option<Vec<f64>>, Option<Vec<f64>>) {
        let [need_h, need_a, need_w] = needs;
        let mut gh = need_h.then(|| vec![0.0; rows * self.in_dim]);
        let mut ga = need_a.then(|| vec![0.0; rows * self.attr_dim]);
        let mut gw = need_w.then(|| vec![0.0; self.spec.weight_count]);
        let mut t = Vec::new();
        let mut dt = Vec::new();
        for g in &self.groups {
            let uv = g.uv();
            let blocks: Vec<Array2<f64>> = g.targets.iter().map(|tg| Self::weight_block(tg, uv, w)).collect();
            let mut dw_blocks: Vec<Array2<f64>> = g.targets.iter().map(|tg| Array2::zeros((uv, tg.mult))).collect();
            for start in (0..rows).step_by(ROW_BLOCK) {
                let n = ROW_BLOCK.min(rows - start);
                let gblock = &grad[start * self.out_dim..(start + n) * self.out_dim];
                let grad_view = |tg: &Target, m: usize| {
                    ArrayView2::from_shape((n, tg.mult).strides((self.out_dim, g.d)), &gblock[tg.out_offset + m..])
                        .unwrap()
                };
                if need_w {
                    self.coupled(g, &h[start * self.in_dim..], &a[start * self.attr_dim..], n, &mut t);
                    for (tg, dwb) in g.targets.iter().zip(dw_blocks.iter_mut()) {
                        for m in 0..g.d {
                            let tm = ArrayView2::from_shape((n, uv), &t[m * n * uv..(m + 1) * n * uv]).unwrap();
                            general_mat_mul(1.0, &tm.t(), &grad_view(tg, m), 1.0, dwb);
                        }
                    }
                }
                if !(need_h || need_a) {
                    continue;
                }
                dt.clear();
                dt.resize(g.d * n * uv, 0.0);
                for (tg, wb) in g.targets.iter().zip(&blocks) {
                    for m in 0..g.d {
                        let mut dtm = ArrayViewMut2::from_shape((n, uv), &mut dt[m * n * uv..(m + 1) * n * uv]).unwrap();
                        general_mat_mul(1.0, &grad_view(tg, m), &wb.t(), 1.0, &mut dtm);
                    }
                }
                let hb = &h[start * self.in_dim..];
                let ab = &a[start * self.attr_dim..];
                for &(i1, i2, i, c) in g.table.nonzero() {
                    let dtm = &dt[i * n * uv..(i + 1) * n * uv];
                    for r in 0..n {
                        let drow = &dtm[r * uv..(r + 1) * uv];
                        let ar = &ab[r * self.attr_dim + g.attr_offset..];
                        let hr = &hb[r * self.in_dim + g.in_offset..];
                        if let Some(gh) = gh.as_mut() {
                            let base = (start + r) * self.in_dim + g.in_offset;
                            for u in 0..g.u {
                                let s: f64 = (0..g.v).map(|v| drow[u * g.v + v] * ar[v * g.d2 + i2]).sum();
                                gh[base + u * g.d1 + i1] += c * s;
                            }
                        }
                        if let Some(ga) = ga.as_mut() {
                            let base = (start + r) * self.attr_dim + g.attr_offset;
                            for v in 0..g.v {
                                let s: f64 = (0..g.u).map(|u| drow[u * g.v + v] * hr[u * g.d1 + i1]).sum();
                                ga[base + v * g.d2 + i2] += c * s;
                            }
                        }
                    }
                }
            }
            if let Some(gw) = gw.as_mut() {
                for (tg, dwb) in g.targets.iter().zip(&dw_blocks) {
                    for ((k, o), v) in dwb.indexed_iter() {
                        gw[tg.weights[k * tg.mult + o]] += v;
                    }
                }
            }
        }
        if self.spec.fault == Some(Fault::CorruptAdjoint) {
            if let Some(gw) = gw.as_mut() {
                gw.iter_mut().for_each(|x| *x *= CORRUPT_FACTOR);
            }
        }
        (gh, ga, gw)
    }

    /// Forward on steerable tensors outside any recording.
    pub fn apply(&self, h: &SteerableTensor, a: &SteerableTensor, w: &DenseTensor) -> Result<SteerableTensor> {
        let rows = self.check(h.data(), a.data(), w)?;
        let mut shape = h.batch().to_vec();
        shape.push(self.out_dim);
        let out = self.forward_raw(h.data().data(), a.data().data(), w.data(), rows);
        SteerableTensor::new(self.spec.out_layout.clone(), DenseTensor::new(shape, out)?)
    }
}

struct ProductOp(Arc<TensorProduct>);

impl Op for ProductOp {
    fn name(&self) -> &'static str {
        "weighted_cg_product"
    }

    fn backward(
        &self,
        inputs: &[&DenseTensor],
        _output: &DenseTensor,
        grad: &DenseTensor,
        needs: &[bool],
    ) -> Result<Vec<Option<DenseTensor>>> {
        let (h, a, w) = (inputs[0], inputs[1], inputs[2]);
        let (gh, ga, gw) = self
            .0
            .backward_raw(h.data(), a.data(), w.data(), grad.data(), h.rows(), [needs[0], needs[1], needs[2]]);
        let wrap = |g: Option<Vec<f64>>, like: &DenseTensor| g.map(|g| DenseTensor::new(like.shape().to_vec(), g)).transpose();
        Ok(vec![wrap(gh, h)?, wrap(ga, a)?, wrap(gw, w)?])
    }
}

/// Records `tp(h, a; w)`. `h` and `a` must have the same number of rows.
pub fn weighted_cg_product(tape: &mut Tape, tp: &Arc<TensorProduct>, h: Var, a: Var, w: Var) -> Result<Var> {
    let (hv, av, wv) = (tape.value(h), tape.value(a), tape.value(w));
    let rows = tp.check(hv, av, wv)?;
    let mut shape = hv.shape().to_vec();
    *shape.last_mut().unwrap() = tp.out_dim;
    let out = tp.forward_raw(hv.data(), av.data(), wv.data(), rows);
    let out = DenseTensor::new(shape, out)?;
    tape.record(Box::new(ProductOp(tp.clone())), &[h, a, w], out)
}

/// Column indices of the `0e` components of a layout.
pub fn scalar_columns(layout: &IrrepsLayout) -> Vec<usize> {
    layout
        .terms()
        .iter()
        .zip(layout.term_offsets())
        .filter(|(t, _)| t.irrep.is_scalar())
        .flat_map(|(t, off)| off..off + t.mult)
        .collect()
}

struct AddBias {
    columns: Vec<usize>,
}

impl Op for AddBias {
    fn name(&self) -> &'static str {
        "add_scalar_bias"
    }

    fn backward(
        &self,
        _inputs: &[&DenseTensor],
        _output: &DenseTensor,
        grad: &DenseTensor,
        needs: &[bool],
    ) -> Result<Vec<Option<DenseTensor>>> {
        let gb = needs[1].then(|| {
            let mut gb = vec![0.0; self.columns.len()];
            for row in grad.data().chunks(grad.cols()) {
                for (acc, &c) in gb.iter_mut().zip(&self.columns) {
                    *acc += row[c];
                }
            }
            DenseTensor::from_vec(gb)
        });
        Ok(vec![needs[0].then(|| grad.clone()), gb])
    }
}

/// Adds `bias` to the `0e` components of every row of `x`.
pub fn add_scalar_bias(tape: &mut Tape, layout: &IrrepsLayout, x: Var, bias: Var) -> Result<Var> {
    let columns = scalar_columns(layout);
    let b = tape.value(bias);
    if b.len() != columns.len() {
        return Err(Error::Shape(format!(
            "bias has {} entries but {layout} has {} scalar outputs",
            b.len(),
            columns.len()
        )));
    }
    let mut out = tape.value(x).clone();
    let cols = out.cols();
    let bias_data = b.data().to_vec();
    for row in out.data_mut().chunks_mut(cols) {
        for (&c, bv) in columns.iter().zip(&bias_data) {
            row[c] += bv;
        }
    }
    tape.record(Box::new(AddBias { columns }), &[x, bias], out)
}

/// `tp(h, a; w)` with `bias` added to the scalar outputs.
pub fn conditioned_linear(
    tape: &mut Tape,
    tp: &Arc<TensorProduct>,
    h: Var,
    a: Var,
    w: Var,
    bias: Option<Var>,
) -> Result<Var> {
    let out = weighted_cg_product(tape, tp, h, a, w)?;
    match bias {
        Some(b) => add_scalar_bias(tape, &tp.spec.out_layout, out, b),
        None => Ok(out),
    }
}

/// A tensor product together with its registered weight and optional bias
/// parameters.
#[derive(Clone, Debug)]
pub struct ConditionedLinear {
    pub tp: Arc<TensorProduct>,
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl ConditionedLinear {
    /// Registers freshly initialized parameters. A bias is created when the
    /// output has scalar components and `with_bias` is set.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        tp: TensorProduct,
        with_bias: bool,
        rng: &mut crate::rng::Rng,
    ) -> Self {
        let weights = crate::tensor::init_weights(tp.spec(), rng);
        let weight = store.add(format!("{name}.weight"), weights);
        let nb = tp.spec().out_layout.num_scalars();
        let bias = (with_bias && nb > 0).then(|| store.add(format!("{name}.bias"), DenseTensor::zeros(vec![nb])));
        Self {
            tp: Arc::new(tp),
            weight,
            bias,
        }
    }

    pub fn out_layout(&self) -> &IrrepsLayout {
        &self.tp.spec().out_layout
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, h: Var, a: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = self.bias.map(|id| tape.param(store, id));
        conditioned_linear(tape, &self.tp, h, a, w, b)
    }
}
