use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{Aggregation, ModelConfig};
use crate::error::{Error, Result};
use crate::o3::{norm, spherical_harmonics, GroupElement, IrrepsLayout, Vec3};
use crate::steerable::SteerableTensor;
use crate::tensor::DenseTensor;

/// Point cloud with steerable node features. Edges are `(receiver, sender)`
/// pairs; messages flow from sender to receiver.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    pub positions: Vec<Vec3>,
    pub node_features: SteerableTensor,
    pub edges: Vec<(usize, usize)>,
    /// Invariant per-edge inputs appended to every message, `[edge][k]`.
    pub edge_scalars: Vec<Vec<f64>>,
    pub node_vectors: BTreeMap<String, Vec<Vec3>>,
    pub node_scalars: BTreeMap<String, Vec<f64>>,
}

impl Graph {
    pub fn new(positions: Vec<Vec3>, node_features: SteerableTensor, edges: Vec<(usize, usize)>) -> Result<Self> {
        let g = Self {
            positions,
            node_features,
            edges,
            edge_scalars: Vec::new(),
            node_vectors: BTreeMap::new(),
            node_scalars: BTreeMap::new(),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn num_nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        if self.node_features.rows() != n {
            return Err(Error::Graph(format!("{} feature rows for {n} nodes", self.node_features.rows())));
        }
        if self.positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Graph("non-finite position".into()));
        }
        for &(i, j) in &self.edges {
            if i >= n || j >= n || i == j {
                return Err(Error::Graph(format!("invalid edge ({i}, {j}) for {n} nodes")));
            }
        }
        if !self.edge_scalars.is_empty() && self.edge_scalars.len() != self.edges.len() {
            return Err(Error::Graph(format!(
                "{} edge scalar rows for {} edges",
                self.edge_scalars.len(),
                self.edges.len()
            )));
        }
        for (name, v) in &self.node_vectors {
            if v.len() != n {
                return Err(Error::Graph(format!("node vector `{name}` has {} rows", v.len())));
            }
        }
        Ok(())
    }

    /// Applies `x ↦ g·x + t` to positions, `g` to node vectors and features.
    /// Edge scalars are invariant and left alone.
    pub fn transformed(&self, g: &GroupElement, translation: &Vec3) -> Self {
        let mut out = self.clone();
        for p in &mut out.positions {
            let q = g.apply(p);
            *p = [q[0] + translation[0], q[1] + translation[1], q[2] + translation[2]];
        }
        for vs in out.node_vectors.values_mut() {
            for v in vs.iter_mut() {
                *v = g.apply(v);
            }
        }
        out.node_features = self.node_features.transformed(g);
        out
    }

    /// Relabels nodes: new node `k` is old node `perm[k]`. Edge order is
    /// preserved.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut inv = vec![0; perm.len()];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let layout = self.node_features.layout().clone();
        let dim = layout.dim();
        let feats: Vec<f64> = perm.iter().flat_map(|&p| self.node_features.row(p).to_vec()).collect();
        let mut out = self.clone();
        out.positions = perm.iter().map(|&p| self.positions[p]).collect();
        out.node_features = SteerableTensor::from_rows(layout, perm.len(), feats).expect("same shape");
        debug_assert_eq!(out.node_features.data().cols(), dim);
        out.edges = self.edges.iter().map(|&(i, j)| (inv[i], inv[j])).collect();
        for vs in out.node_vectors.values_mut() {
            *vs = perm.iter().map(|&p| vs[p]).collect();
        }
        for vs in out.node_scalars.values_mut() {
            *vs = perm.iter().map(|&p| vs[p]).collect();
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NeighborRule {
    Complete,
    /// Each node receives from its `k` nearest others.
    Knn { k: usize },
    /// Each node receives from every other node within distance `r`.
    Radius { r: f64 },
}

/// Edge list under `rule`, ordered by receiver, then by sender index (kNN
/// ties broken by index).
pub fn build_edges(positions: &[Vec3], rule: NeighborRule) -> Vec<(usize, usize)> {
    let n = positions.len();
    let dist2 = |i: usize, j: usize| {
        let (a, b) = (positions[i], positions[j]);
        (0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum::<f64>()
    };
    let mut edges = Vec::new();
    for i in 0..n {
        match rule {
            NeighborRule::Complete => edges.extend((0..n).filter(|&j| j != i).map(|j| (i, j))),
            NeighborRule::Knn { k } => {
                let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                others.sort_by(|&a, &b| dist2(i, a).total_cmp(&dist2(i, b)).then(a.cmp(&b)));
                let mut chosen: Vec<usize> = others.into_iter().take(k).collect();
                chosen.sort_unstable();
                edges.extend(chosen.into_iter().map(|j| (i, j)));
            }
            NeighborRule::Radius { r } => {
                edges.extend((0..n).filter(|&j| j != i && dist2(i, j) <= r * r).map(|j| (i, j)))
            }
        }
    }
    edges
}

/// Factor applied to harmonic embeddings so that every edge attribute
/// `c·Y(x)` with degrees `0..=l_a` has unit norm: `Σ_l ‖Y_l‖² = (l_a+1)²/4π`.
/// Conditioned layers are linear in the attribute, so the factor only
/// rescales the effective weights, keeping layer gain near one at
/// initialization.
pub fn attribute_scale(l_a: u32) -> f64 {
    (4.0 * std::f64::consts::PI).sqrt() / f64::from(l_a + 1)
}

fn attribute(l_a: u32, v: &Vec3) -> Result<Vec<f64>> {
    let c = attribute_scale(l_a);
    Ok(spherical_harmonics(l_a, v)?.into_iter().map(|y| c * y).collect())
}

/// Unit-norm harmonic embedding of `x_j − x_i` for every edge, `[edges, (l_a+1)²]`. With
/// `tolerant`, a coincident pair yields the zero vector instead of an error.
pub fn embed_edge_attributes(graph: &Graph, l_a: u32, tolerant: bool) -> Result<SteerableTensor> {
    let layout = IrrepsLayout::spherical_harmonics(l_a);
    let dim = layout.dim();
    let mut data = Vec::with_capacity(graph.edges.len() * dim);
    for &(i, j) in &graph.edges {
        let (a, b) = (graph.positions[i], graph.positions[j]);
        let rel = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        match attribute(l_a, &rel) {
            Ok(y) => data.extend(y),
            Err(_) if tolerant => data.extend(std::iter::repeat_n(0.0, dim)),
            Err(e) => return Err(Error::Graph(format!("edge ({i}, {j}): {e}"))),
        }
    }
    SteerableTensor::from_rows(layout, graph.edges.len(), data)
}

/// Aggregated edge attributes at each receiver plus the harmonic embedding of
/// each configured node vector (skipped where it vanishes), divided by the
/// number of summands.
pub fn embed_node_attributes(
    graph: &Graph,
    edge_attrs: &SteerableTensor,
    config: &ModelConfig,
) -> Result<SteerableTensor> {
    let layout = edge_attrs.layout().clone();
    let dim = layout.dim();
    let n = graph.num_nodes();
    let mut data = vec![0.0; n * dim];
    let mut degree = vec![0usize; n];
    for (e, &(i, _)) in graph.edges.iter().enumerate() {
        degree[i] += 1;
        for (acc, v) in data[i * dim..(i + 1) * dim].iter_mut().zip(edge_attrs.row(e)) {
            *acc += v;
        }
    }
    if let Some(i) = degree.iter().position(|&d| d == 0) {
        return Err(Error::Graph(format!("node {i} has no incident edge")));
    }
    if config.aggregation == Aggregation::Mean {
        for (row, &d) in data.chunks_mut(dim).zip(&degree) {
            row.iter_mut().for_each(|v| *v /= d as f64);
        }
    }
    for name in &config.node_vectors {
        let vs = graph
            .node_vectors
            .get(name)
            .ok_or_else(|| Error::Graph(format!("graph has no node vector `{name}`")))?;
        for (row, v) in data.chunks_mut(dim).zip(vs) {
            if norm(v) < 1e-12 {
                continue;
            }
            for (acc, y) in row.iter_mut().zip(attribute(config.l_a, v)?) {
                *acc += y;
            }
        }
    }
    // Each summand has norm at most one (under mean aggregation); dividing
    // by their count keeps the node attribute inside the unit ball.
    let terms = 1.0 + config.node_vectors.len() as f64;
    data.iter_mut().for_each(|v| *v /= terms);
    SteerableTensor::from_rows(layout, n, data)
}

/// Several graphs merged into one disconnected graph, with every
/// parameter-independent quantity precomputed.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub num_graphs: usize,
    pub num_nodes: usize,
    /// Graph index of every node.
    pub node_graph: Vec<usize>,
    pub receivers: Vec<usize>,
    pub senders: Vec<usize>,
    pub features: DenseTensor,
    /// `‖x_ij‖²` followed by the graph's extra edge scalars.
    pub edge_scalars: DenseTensor,
    pub edge_attrs: DenseTensor,
    pub node_attrs: DenseTensor,
}

impl GraphBatch {
    pub fn new(graphs: &[Graph], config: &ModelConfig) -> Result<Self> {
        let in_dim = config.input_layout.dim();
        let attr_dim = IrrepsLayout::spherical_harmonics(config.l_a).dim();
        let escal = 1 + config.extra_edge_scalars;
        let mut b = Self {
            num_graphs: graphs.len(),
            num_nodes: 0,
            node_graph: Vec::new(),
            receivers: Vec::new(),
            senders: Vec::new(),
            features: DenseTensor::zeros(vec![0]),
            edge_scalars: DenseTensor::zeros(vec![0]),
            edge_attrs: DenseTensor::zeros(vec![0]),
            node_attrs: DenseTensor::zeros(vec![0]),
        };
        let (mut feats, mut scal, mut eattr, mut nattr) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (gi, g) in graphs.iter().enumerate() {
            g.validate()?;
            if g.node_features.layout() != &config.input_layout {
                return Err(Error::LayoutMismatch {
                    slot: "node features".into(),
                    reason: format!("graph has {}, model expects {}", g.node_features.layout(), config.input_layout),
                });
            }
            let extra = if g.edge_scalars.is_empty() { 0 } else { g.edge_scalars[0].len() };
            if extra != config.extra_edge_scalars || g.edge_scalars.iter().any(|s| s.len() != extra) {
                return Err(Error::Graph(format!(
                    "graph carries {extra} extra edge scalars, model expects {}",
                    config.extra_edge_scalars
                )));
            }
            let ea = embed_edge_attributes(g, config.l_a, config.tolerant)?;
            let na = embed_node_attributes(g, &ea, config)?;
            let off = b.num_nodes;
            for (e, &(i, j)) in g.edges.iter().enumerate() {
                b.receivers.push(off + i);
                b.senders.push(off + j);
                let (p, q) = (g.positions[i], g.positions[j]);
                scal.push((0..3).map(|k| (q[k] - p[k]) * (q[k] - p[k])).sum::<f64>());
                if extra > 0 {
                    scal.extend_from_slice(&g.edge_scalars[e]);
                }
            }
            feats.extend_from_slice(g.node_features.data().data());
            eattr.extend(ea.into_data().into_data());
            nattr.extend(na.into_data().into_data());
            b.node_graph.extend(std::iter::repeat_n(gi, g.num_nodes()));
            b.num_nodes += g.num_nodes();
        }
        let ne = b.receivers.len();
        b.features = DenseTensor::matrix(b.num_nodes, in_dim, feats)?;
        b.edge_scalars = DenseTensor::matrix(ne, escal, scal)?;
        b.edge_attrs = DenseTensor::matrix(ne, attr_dim, eattr)?;
        b.node_attrs = DenseTensor::matrix(b.num_nodes, attr_dim, nattr)?;
        Ok(b)
    }

    pub fn num_edges(&self) -> usize {
        self.receivers.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points() -> Vec<Vec3> {
        vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0]]
    }

    fn scalar_graph(positions: Vec<Vec3>, edges: Vec<(usize, usize)>) -> Graph {
        let n = positions.len();
        let feats = SteerableTensor::from_rows("1x0e".parse().unwrap(), n, vec![1.0; n]).unwrap();
        Graph::new(positions, feats, edges).unwrap()
    }

    #[test]
    fn neighbor_rules() {
        let p = points();
        assert_eq!(build_edges(&p, NeighborRule::Complete).len(), 12);
        let knn = build_edges(&p, NeighborRule::Knn { k: 1 });
        assert_eq!(knn, vec![(0, 1), (1, 0), (2, 0), (3, 0)]);
        let rad = build_edges(&p, NeighborRule::Radius { r: 1.5 });
        assert_eq!(rad, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn degree_zero_attributes_are_constant() {
        let g = scalar_graph(points(), build_edges(&points(), NeighborRule::Complete));
        let a = embed_edge_attributes(&g, 0, false).unwrap();
        assert!(a.data().data().iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn edge_attributes_have_unit_norm() {
        let g = scalar_graph(points(), build_edges(&points(), NeighborRule::Complete));
        for l_a in 0..4 {
            let a = embed_edge_attributes(&g, l_a, false).unwrap();
            for e in 0..g.edges.len() {
                let n2: f64 = a.row(e).iter().map(|v| v * v).sum();
                assert!((n2 - 1.0).abs() < 1e-13, "l_a={l_a}: {n2}");
            }
        }
    }

    #[test]
    fn reversed_edge_flips_odd_degrees() {
        let g = scalar_graph(points(), vec![(1, 2), (2, 1)]);
        let a = embed_edge_attributes(&g, 3, false).unwrap();
        let (f, b) = (a.row(0), a.row(1));
        for l in 0..=3u32 {
            let s = if l % 2 == 0 { 1.0 } else { -1.0 };
            for k in (l * l) as usize..((l + 1) * (l + 1)) as usize {
                assert!((b[k] - s * f[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn coincident_nodes() {
        let g = scalar_graph(vec![[0.0; 3], [0.0; 3]], vec![(0, 1), (1, 0)]);
        assert!(embed_edge_attributes(&g, 1, false).is_err());
        let a = embed_edge_attributes(&g, 1, true).unwrap();
        assert!(a.data().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mean_of_opposite_neighbors_cancels_odd() {
        let p = vec![[0.0; 3], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]];
        let g = scalar_graph(p, vec![(0, 1), (0, 2), (1, 0), (2, 0)]);
        let config = ModelConfig {
            l_a: 2,
            ..ModelConfig::default()
        };
        let ea = embed_edge_attributes(&g, 2, false).unwrap();
        let na = embed_node_attributes(&g, &ea, &config).unwrap();
        let row = na.row(0);
        assert!(row[1..4].iter().all(|v| v.abs() < 1e-15));
        for k in 4..9 {
            assert!((row[k] - 0.5 * (ea.row(0)[k] + ea.row(1)[k])).abs() < 1e-15);
        }
        assert_eq!(na.row(1), ea.row(2));
    }

    #[test]
    fn isolated_node_rejected() {
        let g = scalar_graph(points(), vec![(0, 1), (1, 0)]);
        let ea = embed_edge_attributes(&g, 1, false).unwrap();
        assert!(embed_node_attributes(&g, &ea, &ModelConfig::default()).is_err());
    }

    #[test]
    fn invalid_edges_rejected() {
        let feats = SteerableTensor::from_rows("1x0e".parse().unwrap(), 2, vec![0.0; 2]).unwrap();
        assert!(Graph::new(vec![[0.0; 3]; 2], feats.clone(), vec![(0, 0)]).is_err());
        assert!(Graph::new(vec![[0.0; 3]; 2], feats, vec![(0, 2)]).is_err());
    }
}
