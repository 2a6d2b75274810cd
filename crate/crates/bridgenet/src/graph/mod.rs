//! Road network data model: nodes, edges, bridges, reachability queries and
//! the balanced partitioner used for train/test target splits.
//!
//! A [`Network`] is an undirected simple graph. Nodes are roadway
//! intersections, edges are roadway segments, and each edge carries zero or
//! more bridges. Networks are immutable after construction and validated
//! against the full invariant set at build time, so downstream code can index
//! freely without re-checking.

mod io;
mod partition;

pub use io::{load_network, write_csv_pair, NetworkFormat};
pub use partition::{partition, Partition};

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type EdgeId = usize;
pub type BridgeId = usize;

/// Hop-count sentinel for unreachable nodes. Cannot occur on a validated
/// network (which is connected), but keeps BFS total.
pub const UNREACHABLE: usize = usize::MAX;

/// A roadway intersection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub lon: f64,
    pub lat: f64,
}

/// A roadway segment between two intersections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub id: EdgeId,
    pub endpoints: (NodeId, NodeId),
    /// Bridges carried by this segment, ascending by bridge id.
    pub bridge_ids: Vec<BridgeId>,
}

/// NBI-style structural attributes used to derive a fragility class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeAttributes {
    pub built_year: i32,
    pub material: String,
    pub structure_type: String,
    pub num_spans: u32,
    pub max_span_m: f64,
    pub length_m: f64,
    pub skew_deg: f64,
}

/// A bridge on a roadway segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeRecord {
    pub id: BridgeId,
    pub edge_id: EdgeId,
    pub lon: f64,
    pub lat: f64,
    /// Key into the fragility table.
    pub bridge_class: String,
    pub attributes: BridgeAttributes,
}

/// Validated, immutable road network.
///
/// Invariants (checked by [`Network::new`]):
/// - node ids are unique and contiguous from 0;
/// - edge endpoints are valid and no edge is a self-loop;
/// - at most one edge per unordered node pair (undirected simple graph);
/// - every bridge sits on exactly one existing edge;
/// - the undamaged graph is connected.
#[derive(Debug, Clone)]
pub struct Network {
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
    bridges: Vec<BridgeRecord>,
    /// adjacency[v] = (neighbor, connecting edge), ascending by neighbor id.
    adjacency: Vec<Vec<(NodeId, EdgeId)>>,
}

impl Network {
    /// Build and validate a network. `edges` may leave `bridge_ids` empty;
    /// the lists are derived from the bridges' `edge_id` fields.
    pub fn new(
        nodes: Vec<NodeRecord>,
        mut edges: Vec<EdgeRecord>,
        bridges: Vec<BridgeRecord>,
    ) -> Result<Self> {
        let n = nodes.len();
        if n == 0 {
            return Err(Error::Validation("network has no nodes".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(Error::Validation(format!(
                    "node ids must be contiguous from 0: position {i} holds id {}",
                    node.id
                )));
            }
            if !node.lon.is_finite() || !node.lat.is_finite() {
                return Err(Error::Validation(format!(
                    "node {} has non-finite coordinates",
                    node.id
                )));
            }
        }

        let mut seen_pairs = HashSet::new();
        for (i, edge) in edges.iter().enumerate() {
            if edge.id != i {
                return Err(Error::Validation(format!(
                    "edge ids must be contiguous from 0: position {i} holds id {}",
                    edge.id
                )));
            }
            let (u, v) = edge.endpoints;
            if u >= n || v >= n {
                return Err(Error::Validation(format!(
                    "edge {} references missing node {}",
                    edge.id,
                    if u >= n { u } else { v }
                )));
            }
            if u == v {
                return Err(Error::Validation(format!(
                    "edge {} is a self-loop at node {u}",
                    edge.id
                )));
            }
            if !seen_pairs.insert((u.min(v), u.max(v))) {
                return Err(Error::Validation(format!(
                    "duplicate edge between nodes {u} and {v} (edge {})",
                    edge.id
                )));
            }
        }

        // Rebuild per-edge bridge lists from the bridge records.
        for e in edges.iter_mut() {
            e.bridge_ids.clear();
        }
        for (i, bridge) in bridges.iter().enumerate() {
            if bridge.id != i {
                return Err(Error::Validation(format!(
                    "bridge ids must be contiguous from 0: position {i} holds id {}",
                    bridge.id
                )));
            }
            if !bridge.lon.is_finite() || !bridge.lat.is_finite() {
                return Err(Error::Validation(format!(
                    "bridge {} has non-finite coordinates",
                    bridge.id
                )));
            }
            let Some(edge) = edges.get_mut(bridge.edge_id) else {
                return Err(Error::Validation(format!(
                    "bridge {} references missing edge {}",
                    bridge.id, bridge.edge_id
                )));
            };
            edge.bridge_ids.push(bridge.id);
        }

        let mut adjacency = vec![Vec::new(); n];
        for edge in &edges {
            let (u, v) = edge.endpoints;
            adjacency[u].push((v, edge.id));
            adjacency[v].push((u, edge.id));
        }
        for adj in adjacency.iter_mut() {
            adj.sort_unstable();
        }

        let net = Network {
            nodes,
            edges,
            bridges,
            adjacency,
        };
        if net.node_count() > 1 {
            let hops = net.bfs_hops(0, None);
            if let Some(v) = hops.iter().position(|&h| h == UNREACHABLE) {
                return Err(Error::Validation(format!(
                    "undamaged network is not connected: node {v} unreachable from node 0"
                )));
            }
        }
        Ok(net)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn bridge_count(&self) -> usize {
        self.bridges.len()
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    pub fn bridges(&self) -> &[BridgeRecord] {
        &self.bridges
    }

    pub fn node(&self, id: NodeId) -> Result<&NodeRecord> {
        self.nodes.get(id).ok_or(Error::UnknownNode(id))
    }

    /// Neighbors of `v` with their connecting edges, ascending by neighbor id.
    pub fn neighbors(&self, v: NodeId) -> &[(NodeId, EdgeId)] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v].len()
    }

    /// BFS hop counts from `start`, skipping edges for which `failed` returns
    /// true. `None` edges filter means the undamaged graph.
    fn bfs_hops(&self, start: NodeId, failed: Option<&dyn Fn(EdgeId) -> bool>) -> Vec<usize> {
        let mut hops = vec![UNREACHABLE; self.nodes.len()];
        let mut queue = VecDeque::new();
        hops[start] = 0;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for &(w, e) in &self.adjacency[u] {
                if let Some(f) = failed {
                    if f(e) {
                        continue;
                    }
                }
                if hops[w] == UNREACHABLE {
                    hops[w] = hops[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        hops
    }

    /// True iff a path from `s` to `t` exists that avoids `failed_edges`.
    /// `s == t` is connected by convention.
    pub fn is_connected(
        &self,
        failed_edges: &HashSet<EdgeId>,
        s: NodeId,
        t: NodeId,
    ) -> Result<bool> {
        if s >= self.nodes.len() {
            return Err(Error::UnknownNode(s));
        }
        if t >= self.nodes.len() {
            return Err(Error::UnknownNode(t));
        }
        if s == t {
            return Ok(true);
        }
        let f = |e: EdgeId| failed_edges.contains(&e);
        let hops = self.bfs_hops(s, Some(&f));
        Ok(hops[t] != UNREACHABLE)
    }

    /// BFS distance in edge hops from every node to `t` on the undamaged
    /// graph. `hops[t] == 0`; unreachable nodes (impossible on a validated
    /// network) hold [`UNREACHABLE`].
    pub fn shortest_hops(&self, t: NodeId) -> Result<Vec<usize>> {
        if t >= self.nodes.len() {
            return Err(Error::UnknownNode(t));
        }
        Ok(self.bfs_hops(t, None))
    }

    /// Reachable set from `t` given failed edge flags (`true` = failed),
    /// written into `visited` (`true` = reachable). Buffers are caller-owned
    /// so the Monte Carlo loop does not allocate per draw.
    pub(crate) fn reachable_from(
        &self,
        t: NodeId,
        edge_failed: &[bool],
        visited: &mut [bool],
        queue: &mut VecDeque<NodeId>,
    ) {
        visited.iter_mut().for_each(|v| *v = false);
        queue.clear();
        visited[t] = true;
        queue.push_back(t);
        while let Some(u) = queue.pop_front() {
            for &(w, e) in &self.adjacency[u] {
                if !edge_failed[e] && !visited[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }

    /// Great-circle length of an edge in km.
    pub fn edge_length_km(&self, e: EdgeId) -> f64 {
        let (u, v) = self.edges[e].endpoints;
        let a = &self.nodes[u];
        let b = &self.nodes[v];
        great_circle_km(a.lon, a.lat, b.lon, b.lat)
    }
}

/// Haversine great-circle distance between two (lon, lat) points, in km.
pub fn great_circle_km(lon1: f64, lat1: f64, lon2: f64, lat2: f64) -> f64 {
    const EARTH_RADIUS_KM: f64 = 6371.0;
    let (lon1, lat1, lon2, lat2) = (
        lon1.to_radians(),
        lat1.to_radians(),
        lon2.to_radians(),
        lat2.to_radians(),
    );
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().asin()
}

/// Convenience constructor for tests and examples: nodes on a unit grid,
/// edges by (u, v) pairs, no bridges.
pub fn network_from_pairs(node_count: usize, pairs: &[(NodeId, NodeId)]) -> Result<Network> {
    let nodes = (0..node_count)
        .map(|i| NodeRecord {
            id: i,
            lon: i as f64 * 0.01,
            lat: 0.0,
        })
        .collect();
    let edges = pairs
        .iter()
        .enumerate()
        .map(|(i, &(u, v))| EdgeRecord {
            id: i,
            endpoints: (u, v),
            bridge_ids: Vec::new(),
        })
        .collect();
    Network::new(nodes, edges, Vec::new())
}
