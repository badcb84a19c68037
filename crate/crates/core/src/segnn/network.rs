//! Network assembly: embedding, message-passing stack and prediction head.

use std::sync::Arc;

use super::config::{HeadKind, ModelConfig, Variant};
use super::graph::GraphBatch;
use crate::error::{Error, Result};
use crate::o3::{Irrep, IrrepsLayout};
use crate::rng::{seeded, Rng};
use crate::steerable::{enumerate_paths, gate_activation, instance_norm, ConditionedLinear, GateSpec, TensorProduct, INSTANCE_NORM_EPS};
use crate::tensor::{ops, DenseTensor, ParamStore, Tape, Var};

/// Conditioned linear layer whose output feeds a gate.
struct Gated {
    linear: ConditionedLinear,
    gate: Arc<GateSpec>,
}

impl Gated {
    fn new(store: &mut ParamStore, name: &str, input: &IrrepsLayout, attr: &IrrepsLayout, output: &IrrepsLayout, ctx: &mut Ctx) -> Result<Self> {
        let gate = Arc::new(GateSpec::for_output(output));
        let linear = ctx.linear(store, name, input, attr, gate.input())?;
        Ok(Self { linear, gate })
    }

    /// `gate(linear(h, a))`.
    fn forward(&self, tape: &mut Tape, store: &ParamStore, h: Var, a: Var) -> Result<Var> {
        let pre = self.linear.forward(tape, store, h, a)?;
        gate_activation(tape, &self.gate, pre)
    }
}

struct Ctx<'a> {
    rng: &'a mut Rng,
    config: &'a ModelConfig,
    /// Tolerate hidden slots the inputs cannot reach (embedding only).
    partial: bool,
}

impl Ctx<'_> {
    fn linear(&mut self, store: &mut ParamStore, name: &str, input: &IrrepsLayout, attr: &IrrepsLayout, output: &IrrepsLayout) -> Result<ConditionedLinear> {
        let tp = if self.partial {
            TensorProduct::build_partial(input, attr, output, self.config.fault)?
        } else {
            TensorProduct::build(input, attr, output, self.config.fault)?
        };
        Ok(ConditionedLinear::new(store, name, tp, true, self.rng))
    }
}

enum Layer {
    SeLinear {
        message: ConditionedLinear,
        gate: Arc<GateSpec>,
    },
    SeNonlinear {
        first: Gated,
        second: ConditionedLinear,
        gate: Arc<GateSpec>,
    },
    Segnn {
        first: Gated,
        second: Gated,
        update: Gated,
        out: ConditionedLinear,
    },
}

enum Head {
    /// `CL(f, ã_i) → 1x1o`.
    Vector(ConditionedLinear),
    /// Used when `1x1o` is unreachable from the hidden layout: invariant
    /// coefficients `CL(f, ã_i)` scale the raw input vectors.
    VectorFromInputs {
        coefficients: ConditionedLinear,
        mix: ConditionedLinear,
    },
    Scalar {
        cg: ConditionedLinear,
        swish: Arc<GateSpec>,
        pre_pool: ConditionedLinear,
        post_pool: ConditionedLinear,
        swish_out: Arc<GateSpec>,
        out: ConditionedLinear,
    },
}

/// Structural facts about one message-passing layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerInfo {
    pub message_linears: usize,
    /// Conditioned linear layers acting on node features after
    /// aggregation, all conditioned on node attributes.
    pub update_linears: usize,
    pub message_paths: Vec<usize>,
}

pub struct Network {
    config: ModelConfig,
    hidden: IrrepsLayout,
    embed: (Gated, ConditionedLinear),
    layers: Vec<Layer>,
    head: Head,
    params: ParamStore,
}

impl std::fmt::Debug for Network {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Network({:?}, hidden {}, {} parameters)", self.config.variant, self.hidden, self.num_parameters())
    }
}

impl Network {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(config.seed);
        let mut ctx = Ctx {
            rng: &mut rng,
            config,
            partial: true,
        };
        let mut store = ParamStore::new();
        let hidden = config.hidden_layout()?;
        let attr = config.attr_layout();
        let input = &config.input_layout;
        let unit = IrrepsLayout::scalars(1)?;

        let embed = (
            Gated::new(&mut store, "embed.0", input, &attr, &hidden, &mut ctx)?,
            ctx.linear(&mut store, "embed.1", &hidden, &attr, &hidden)?,
        );
        ctx.partial = false;

        let message_in = hidden
            .concat(&hidden)
            .concat(&IrrepsLayout::scalars(1 + config.extra_edge_scalars)?);
        let mut layers = Vec::with_capacity(config.num_layers);
        for k in 0..config.num_layers {
            let name = |s: &str| format!("layer{k}.{s}");
            let layer = match config.variant {
                Variant::SeLinear => {
                    let gate = Arc::new(GateSpec::for_output(&hidden));
                    let message = ctx.linear(&mut store, &name("message"), &message_in, &attr, gate.input())?;
                    Layer::SeLinear { message, gate }
                }
                Variant::SeNonlinear => {
                    let first = Gated::new(&mut store, &name("message.0"), &message_in, &attr, &hidden, &mut ctx)?;
                    let gate = Arc::new(GateSpec::for_output(&hidden));
                    let second = ctx.linear(&mut store, &name("message.1"), &hidden, &attr, gate.input())?;
                    Layer::SeNonlinear { first, second, gate }
                }
                Variant::Segnn => Layer::Segnn {
                    first: Gated::new(&mut store, &name("message.0"), &message_in, &attr, &hidden, &mut ctx)?,
                    second: Gated::new(&mut store, &name("message.1"), &hidden, &attr, &hidden, &mut ctx)?,
                    update: Gated::new(&mut store, &name("update.0"), &hidden.concat(&hidden), &attr, &hidden, &mut ctx)?,
                    out: ctx.linear(&mut store, &name("update.1"), &hidden, &attr, &hidden)?,
                },
            };
            layers.push(layer);
        }

        let vector = IrrepsLayout::new(vec![(1, Irrep::new(1, crate::o3::Parity::Odd))])?;
        let head = match config.head {
            HeadKind::NodeVector if enumerate_paths(&hidden, &attr, &vector).is_ok() => {
                Head::Vector(ctx.linear(&mut store, "head", &hidden, &attr, &vector)?)
            }
            HeadKind::NodeVector => {
                let n = input.num_slots();
                let coefficients = ctx.linear(&mut store, "head.coefficients", &hidden, &attr, &IrrepsLayout::scalars(n)?)?;
                let tp = TensorProduct::build(input, &IrrepsLayout::scalars(n)?, &vector, config.fault).map_err(|_| {
                    Error::Config(format!("no 1x1o output is reachable from hidden {hidden} or input {input}"))
                })?;
                let mix = ConditionedLinear::new(&mut store, "head.mix", tp, false, ctx.rng);
                Head::VectorFromInputs { coefficients, mix }
            }
            HeadKind::GraphScalar => {
                let k = IrrepsLayout::scalars(config.head_scalars)?;
                Head::Scalar {
                    cg: ctx.linear(&mut store, "head.cg", &hidden, &attr, &k)?,
                    swish: Arc::new(GateSpec::for_output(&k)),
                    pre_pool: ctx.linear(&mut store, "head.pre_pool", &k, &unit, &k)?,
                    post_pool: ctx.linear(&mut store, "head.post_pool", &k, &unit, &k)?,
                    swish_out: Arc::new(GateSpec::for_output(&k)),
                    out: ctx.linear(&mut store, "head.out", &k, &unit, &IrrepsLayout::scalars(1)?)?,
                }
            }
        };

        Ok(Self {
            config: config.clone(),
            hidden,
            embed,
            layers,
            head,
            params: store,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn hidden_layout(&self) -> &IrrepsLayout {
        &self.hidden
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    /// Output layout of the head.
    pub fn output_layout(&self) -> IrrepsLayout {
        match self.head {
            Head::Scalar { .. } => IrrepsLayout::scalars(1).expect("one scalar"),
            _ => "1x1o".parse().expect("valid layout"),
        }
    }

    pub fn layer_info(&self) -> Vec<LayerInfo> {
        self.layers
            .iter()
            .map(|layer| match layer {
                Layer::SeLinear { message, .. } => LayerInfo {
                    message_linears: 1,
                    update_linears: 0,
                    message_paths: vec![message.tp.spec().paths.len()],
                },
                Layer::SeNonlinear { first, second, .. } => LayerInfo {
                    message_linears: 2,
                    update_linears: 0,
                    message_paths: vec![first.linear.tp.spec().paths.len(), second.tp.spec().paths.len()],
                },
                Layer::Segnn { first, second, .. } => LayerInfo {
                    message_linears: 2,
                    update_linears: 2,
                    message_paths: vec![first.linear.tp.spec().paths.len(), second.linear.tp.spec().paths.len()],
                },
            })
            .collect()
    }

    /// Records the forward pass. Node-vector heads return `[nodes, 3]` in
    /// irrep component order; graph-scalar heads return `[graphs, 1]`.
    pub fn forward(&self, tape: &mut Tape, batch: &GraphBatch) -> Result<Var> {
        self.forward_with(tape, &self.params, batch)
    }

    /// [`Network::forward`] with parameter values taken from `params`, which
    /// must share this network's registration order.
    pub fn forward_with(&self, tape: &mut Tape, params: &ParamStore, batch: &GraphBatch) -> Result<Var> {
        let f = self.embeddings_with(tape, params, batch)?;
        self.head_forward(tape, params, batch, f)
    }

    /// Hidden node features after the last message-passing layer, laid out
    /// as [`Network::hidden_layout`].
    pub fn node_embeddings(&self, tape: &mut Tape, batch: &GraphBatch) -> Result<Var> {
        self.embeddings_with(tape, &self.params, batch)
    }

    fn embeddings_with(&self, tape: &mut Tape, p: &ParamStore, batch: &GraphBatch) -> Result<Var> {
        let edge_attr = tape.constant(batch.edge_attrs.clone());
        let node_attr = tape.constant(batch.node_attrs.clone());
        let x = tape.constant(batch.features.clone());
        let edge_scalars = tape.constant(batch.edge_scalars.clone());

        let h = self.embed.0.forward(tape, p, x, node_attr)?;
        let mut f = self.embed.1.forward(tape, p, h, node_attr)?;

        for layer in &self.layers {
            let fi = ops::gather_rows(tape, f, &batch.receivers)?;
            let fj = ops::gather_rows(tape, f, &batch.senders)?;
            let hij = ops::concat_cols(tape, &[fi, fj, edge_scalars])?;
            let update = match layer {
                Layer::SeLinear { message, gate } => {
                    let m = message.forward(tape, p, hij, edge_attr)?;
                    let agg = ops::scatter_sum(tape, m, &batch.receivers, batch.num_nodes)?;
                    gate_activation(tape, gate, agg)?
                }
                Layer::SeNonlinear { first, second, gate } => {
                    let m = first.forward(tape, p, hij, edge_attr)?;
                    let m = second.forward(tape, p, m, edge_attr)?;
                    let agg = ops::scatter_sum(tape, m, &batch.receivers, batch.num_nodes)?;
                    gate_activation(tape, gate, agg)?
                }
                Layer::Segnn { first, second, update, out } => {
                    let m = first.forward(tape, p, hij, edge_attr)?;
                    let m = second.forward(tape, p, m, edge_attr)?;
                    let agg = ops::scatter_sum(tape, m, &batch.receivers, batch.num_nodes)?;
                    let u = ops::concat_cols(tape, &[f, agg])?;
                    let u = update.forward(tape, p, u, node_attr)?;
                    out.forward(tape, p, u, node_attr)?
                }
            };
            let update = if self.config.use_instance_norm {
                instance_norm(tape, &self.hidden, update, &batch.node_graph, batch.num_graphs, INSTANCE_NORM_EPS)?
            } else {
                update
            };
            f = ops::add(tape, f, update)?;
        }
        Ok(f)
    }

    fn head_forward(&self, tape: &mut Tape, p: &ParamStore, batch: &GraphBatch, f: Var) -> Result<Var> {
        let node_attr = tape.constant(batch.node_attrs.clone());
        match &self.head {
            Head::Vector(lin) => lin.forward(tape, p, f, node_attr),
            Head::VectorFromInputs { coefficients, mix } => {
                let c = coefficients.forward(tape, p, f, node_attr)?;
                let x = tape.constant(batch.features.clone());
                mix.forward(tape, p, x, c)
            }
            Head::Scalar {
                cg,
                swish,
                pre_pool,
                post_pool,
                swish_out,
                out,
            } => {
                let ones = tape.constant(DenseTensor::matrix(batch.num_nodes, 1, vec![1.0; batch.num_nodes])?);
                let s = cg.forward(tape, p, f, node_attr)?;
                let s = gate_activation(tape, swish, s)?;
                let s = pre_pool.forward(tape, p, s, ones)?;
                let pooled = ops::segment_mean(tape, s, &batch.node_graph, batch.num_graphs)?;
                let graph_ones = tape.constant(DenseTensor::matrix(batch.num_graphs, 1, vec![1.0; batch.num_graphs])?);
                let s = post_pool.forward(tape, p, pooled, graph_ones)?;
                let s = gate_activation(tape, swish_out, s)?;
                out.forward(tape, p, s, graph_ones)
            }
        }
    }

    /// Forward pass outside training.
    pub fn predict(&self, batch: &GraphBatch) -> Result<DenseTensor> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, batch)?;
        Ok(tape.value(out).clone())
    }
}
