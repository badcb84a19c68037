//! Reverse-mode differentiation over a linear recording of operations.
//!
//! Every value produced during a forward pass is pushed onto a [`Tape`]
//! together with the [`Op`] that produced it. Adjoints live on the ops
//! themselves and are registered at the granularity of whole steerable
//! operations (tensor products, gates, norms), never per scalar.

use std::collections::BTreeMap;

use super::dense::DenseTensor;
use super::param::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A recorded operation. `backward` maps the gradient of the output to
/// gradients of each input; ops without an adjoint keep the default, which
/// fails loudly when a backward pass reaches them.
pub trait Op {
    fn name(&self) -> &'static str;

    /// `needs[i]` is false when input `i` does not lead to any parameter;
    /// the corresponding slot of the result may then be `None`.
    fn backward(
        &self,
        inputs: &[&DenseTensor],
        output: &DenseTensor,
        grad_output: &DenseTensor,
        needs: &[bool],
    ) -> Result<Vec<Option<DenseTensor>>> {
        let _ = (inputs, output, grad_output, needs);
        Err(Error::MissingAdjoint(self.name()))
    }
}

struct Node {
    value: DenseTensor,
    inputs: Vec<Var>,
    op: Option<Box<dyn Op>>,
    param: Option<ParamId>,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: DenseTensor) -> Var {
        self.push(Node {
            value,
            inputs: Vec::new(),
            op: None,
            param: None,
            requires_grad: false,
        })
    }

    /// Records the current value of a parameter as a differentiable leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(Node {
            value: store.get(id).value.clone(),
            inputs: Vec::new(),
            op: None,
            param: Some(id),
            requires_grad: true,
        })
    }

    /// Appends the result of `op` applied to `inputs`. Non-finite outputs are
    /// rejected here so that NaN never propagates silently.
    pub fn record(&mut self, op: Box<dyn Op>, inputs: &[Var], value: DenseTensor) -> Result<Var> {
        value.ensure_finite(op.name())?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(Node {
            value,
            inputs: inputs.to_vec(),
            op: Some(op),
            param: None,
            requires_grad,
        }))
    }

    pub fn value(&self, var: Var) -> &DenseTensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, node: Node) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    /// Gradients of the scalar `loss` with respect to every parameter leaf
    /// recorded on this tape. A parameter recorded more than once receives
    /// the sum of its leaf gradients.
    pub fn gradients(&self, loss: Var) -> Result<BTreeMap<ParamId, DenseTensor>> {
        let root = &self.nodes[loss.0];
        if root.value.len() != 1 {
            return Err(Error::Shape(format!(
                "loss must be a single scalar, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<DenseTensor>> = (0..=loss.0).map(|_| None).collect();
        let mut seed = root.value.zeros_like();
        seed.data_mut()[0] = 1.0;
        grads[loss.0] = Some(seed);

        let mut out = BTreeMap::new();
        for idx in (0..=loss.0).rev() {
            let Some(grad) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if let Some(id) = node.param {
                out.entry(id)
                    .and_modify(|g: &mut DenseTensor| g.add_assign(&grad))
                    .or_insert(grad);
                continue;
            }
            let Some(op) = node.op.as_ref() else { continue };
            let inputs: Vec<&DenseTensor> =
                node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let needs: Vec<bool> = node
                .inputs
                .iter()
                .map(|v| self.nodes[v.0].requires_grad)
                .collect();
            let input_grads = op.backward(&inputs, &node.value, &grad, &needs)?;
            if input_grads.len() != node.inputs.len() {
                return Err(Error::Shape(format!(
                    "adjoint of `{}` returned {} gradients for {} inputs",
                    op.name(),
                    input_grads.len(),
                    node.inputs.len()
                )));
            }
            for ((var, need), g) in node.inputs.iter().zip(&needs).zip(input_grads) {
                let Some(g) = g else { continue };
                if !need {
                    continue;
                }
                if !g.same_shape(&self.nodes[var.0].value) {
                    return Err(Error::Shape(format!(
                        "adjoint of `{}` produced gradient {:?} for input {:?}",
                        op.name(),
                        g.shape(),
                        self.nodes[var.0].value.shape()
                    )));
                }
                match &mut grads[var.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot => *slot = Some(g),
                }
            }
        }
        Ok(out)
    }
}

/// Gradient of `loss` for every parameter in `store`; parameters the loss
/// does not depend on get zeros.
pub fn differentiate(
    tape: &Tape,
    loss: Var,
    store: &ParamStore,
) -> Result<BTreeMap<ParamId, DenseTensor>> {
    let mut grads = tape.gradients(loss)?;
    for p in store.iter() {
        grads
            .entry(p.id)
            .or_insert_with(|| p.value.zeros_like());
    }
    Ok(grads)
}
