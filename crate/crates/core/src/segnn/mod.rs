//! Geometric graphs and the steerable message-passing networks.

mod config;
mod graph;
mod network;

pub use config::{Aggregation, HeadKind, ModelConfig, Variant};
pub use graph::{build_edges, attribute_scale, embed_edge_attributes, embed_node_attributes, Graph, GraphBatch, NeighborRule};
pub use network::{LayerInfo, Network};
