use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::NeighborRule;
use crate::error::{Error, Result};
use crate::o3::IrrepsLayout;
use crate::steerable::{balanced_layout, Fault, LayoutMode};
use crate::tensor::AdamConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Non-linear messages and node-attribute conditioned updates.
    Segnn,
    /// Two-layer steerable messages, gated residual update.
    SeNonlinear,
    /// One conditioned linear layer per message (point convolution).
    SeLinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Mean,
    Sum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// One `1x1o` vector per node.
    NodeVector,
    /// One invariant scalar per graph.
    GraphScalar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub variant: Variant,
    pub l_f: u32,
    pub l_a: u32,
    pub hidden_mode: LayoutMode,
    /// Target width handed to [`balanced_layout`].
    pub hidden_dim: usize,
    pub include_odd: bool,
    pub num_layers: usize,
    pub neighbors: NeighborRule,
    pub aggregation: Aggregation,
    /// Node vectors whose harmonic embedding is added to node attributes.
    pub node_vectors: Vec<String>,
    pub use_instance_norm: bool,
    pub head: HeadKind,
    /// Width of the scalar block in the graph-scalar head.
    pub head_scalars: usize,
    pub input_layout: IrrepsLayout,
    /// Invariant per-edge inputs beyond `‖x_ij‖²`.
    pub extra_edge_scalars: usize,
    /// Coincident nodes give zero edge attributes instead of an error.
    pub tolerant: bool,
    pub optimizer: AdamConfig,
    pub seed: u64,
    #[serde(skip)]
    pub fault: Option<Fault>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Segnn,
            l_f: 1,
            l_a: 1,
            hidden_mode: LayoutMode::Copies,
            hidden_dim: 64,
            include_odd: false,
            num_layers: 4,
            neighbors: NeighborRule::Complete,
            aggregation: Aggregation::Mean,
            node_vectors: Vec::new(),
            use_instance_norm: false,
            head: HeadKind::NodeVector,
            head_scalars: 64,
            input_layout: "1x0e+1x1o+1x1o".parse().expect("valid layout"),
            extra_edge_scalars: 0,
            tolerant: false,
            optimizer: AdamConfig::default(),
            seed: 0,
            fault: None,
        }
    }
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.head_scalars == 0 {
            return Err(Error::Config("hidden_dim and head_scalars must be positive".into()));
        }
        self.hidden_layout()?;
        Ok(())
    }

    pub fn hidden_layout(&self) -> Result<IrrepsLayout> {
        balanced_layout(self.hidden_dim, self.l_f, self.include_odd, self.hidden_mode, self.l_a)
    }

    pub fn attr_layout(&self) -> IrrepsLayout {
        IrrepsLayout::spherical_harmonics(self.l_a)
    }
}
