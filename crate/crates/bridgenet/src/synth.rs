//! Synthetic road networks with the size profile of the study regions.
//!
//! Nodes are scattered in a Bay-Area-sized lon/lat box. A nearest-neighbor
//! spanning tree guarantees connectivity, remaining edges join the closest
//! unconnected pairs (keeping the graph roughly planar), and bridges are
//! apportioned to edges proportionally to edge length by largest
//! remainder. `extend_network` grows an existing network into a strict
//! superset, leaving every original node, edge and bridge untouched.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{
    great_circle_km, BridgeAttributes, BridgeRecord, EdgeRecord, Network, NodeRecord,
};
use crate::hazard::classify_bridge;
use crate::seed;

const DEFAULT_BBOX: (f64, f64, f64, f64) = (-122.2, -121.6, 37.0, 37.6);

fn feasible(nodes: usize, edges: usize) -> Result<()> {
    if nodes < 2 {
        return Err(Error::InfeasibleCounts(format!(
            "need at least 2 nodes, got {nodes}"
        )));
    }
    if edges + 1 < nodes {
        return Err(Error::InfeasibleCounts(format!(
            "{edges} edges cannot connect {nodes} nodes"
        )));
    }
    if edges > nodes * (nodes - 1) / 2 {
        return Err(Error::InfeasibleCounts(format!(
            "{edges} edges exceed the simple-graph maximum for {nodes} nodes"
        )));
    }
    Ok(())
}

/// Generate a connected random geometric-style network with exactly the
/// requested node, edge and bridge counts. Deterministic per seed.
pub fn synth_network(nodes: usize, edges: usize, bridges: usize, rng_seed: u64) -> Result<Network> {
    feasible(nodes, edges)?;
    let (lon0, lon1, lat0, lat1) = DEFAULT_BBOX;
    let mut rng = seed::rng(seed::mix(rng_seed, 0x90de));
    let node_records: Vec<NodeRecord> = (0..nodes)
        .map(|id| NodeRecord {
            id,
            lon: rng.gen_range(lon0..=lon1),
            lat: rng.gen_range(lat0..=lat1),
        })
        .collect();

    let mut pairs = spanning_tree(&node_records);
    close_leaf_loops(&node_records, &mut pairs, edges);
    add_closest_pairs(&node_records, &mut pairs, edges, |_, _| true);
    let edge_records: Vec<EdgeRecord> = pairs
        .iter()
        .enumerate()
        .map(|(id, &(u, v))| EdgeRecord {
            id,
            endpoints: (u, v),
            bridge_ids: Vec::new(),
        })
        .collect();

    let bridge_records = place_bridges(&node_records, &edge_records, bridges, 0, rng_seed)?;
    Network::new(node_records, edge_records, bridge_records)
}

/// Grow `base` into a superset with the given totals: original ids and
/// records are preserved, new edges touch at least one new node, and new
/// bridges sit on new edges only.
pub fn extend_network(
    base: &Network,
    total_nodes: usize,
    total_edges: usize,
    total_bridges: usize,
    rng_seed: u64,
) -> Result<Network> {
    let (n0, e0, b0) = (base.node_count(), base.edge_count(), base.bridge_count());
    if total_nodes < n0 || total_edges < e0 || total_bridges < b0 {
        return Err(Error::InfeasibleCounts(format!(
            "extension totals ({total_nodes}, {total_edges}, {total_bridges}) \
             below base counts ({n0}, {e0}, {b0})"
        )));
    }
    feasible(total_nodes, total_edges)?;
    let add_nodes = total_nodes - n0;
    let add_edges = total_edges - e0;
    if add_edges < add_nodes {
        return Err(Error::InfeasibleCounts(format!(
            "{add_edges} new edges cannot attach {add_nodes} new nodes"
        )));
    }

    // bounding box of the base, grown a little, hosts the new nodes
    let mut lon0 = f64::INFINITY;
    let mut lon1 = f64::NEG_INFINITY;
    let mut lat0 = f64::INFINITY;
    let mut lat1 = f64::NEG_INFINITY;
    for n in base.nodes() {
        lon0 = lon0.min(n.lon);
        lon1 = lon1.max(n.lon);
        lat0 = lat0.min(n.lat);
        lat1 = lat1.max(n.lat);
    }
    let grow_lon = (lon1 - lon0).max(1e-3) * 0.15;
    let grow_lat = (lat1 - lat0).max(1e-3) * 0.15;

    let mut rng = seed::rng(seed::mix(rng_seed, 0xe67e));
    let mut node_records = base.nodes().to_vec();
    for id in n0..total_nodes {
        node_records.push(NodeRecord {
            id,
            lon: rng.gen_range(lon0 - grow_lon..=lon1 + grow_lon),
            lat: rng.gen_range(lat0 - grow_lat..=lat1 + grow_lat),
        });
    }

    // attach each new node to its nearest earlier node, then densify with
    // pairs touching at least one new node
    let mut pairs: Vec<(usize, usize)> = base.edges().iter().map(|e| e.endpoints).collect();
    for v in n0..total_nodes {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for u in 0..v {
            let d = node_distance(&node_records, u, v);
            if d < best_d {
                best_d = d;
                best = u;
            }
        }
        pairs.push((best, v));
    }
    add_closest_pairs(&node_records, &mut pairs, total_edges, |u, v| {
        u >= n0 || v >= n0
    });

    let mut edge_records: Vec<EdgeRecord> = pairs
        .iter()
        .enumerate()
        .map(|(id, &(u, v))| EdgeRecord {
            id,
            endpoints: (u, v),
            bridge_ids: Vec::new(),
        })
        .collect();
    // new bridges only on new edges
    let new_edges: Vec<EdgeRecord> = edge_records.split_off(e0);
    let mut bridge_records = base.bridges().to_vec();
    let new_bridges = place_bridges(
        &node_records,
        &new_edges,
        total_bridges - b0,
        b0,
        rng_seed,
    )?;
    bridge_records.extend(new_bridges);
    edge_records.extend(new_edges);

    Network::new(node_records, edge_records, bridge_records)
}

fn node_distance(nodes: &[NodeRecord], u: usize, v: usize) -> f64 {
    great_circle_km(nodes[u].lon, nodes[u].lat, nodes[v].lon, nodes[v].lat)
}

/// Nearest-neighbor spanning tree: each node joins the closest node with a
/// smaller index.
fn spanning_tree(nodes: &[NodeRecord]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(nodes.len().saturating_sub(1));
    for v in 1..nodes.len() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for u in 0..v {
            let d = node_distance(nodes, u, v);
            if d < best_d {
                best_d = d;
                best = u;
            }
        }
        pairs.push((best, v));
    }
    pairs
}

/// Road networks are loopy: give every degree-1 tree node a second edge to
/// its nearest non-neighbor while the edge budget allows, so the graph has
/// few dangling chains.
fn close_leaf_loops(nodes: &[NodeRecord], pairs: &mut Vec<(usize, usize)>, budget: usize) {
    let mut degree = vec![0usize; nodes.len()];
    for &(u, v) in pairs.iter() {
        degree[u] += 1;
        degree[v] += 1;
    }
    let leaves: Vec<usize> = (0..nodes.len()).filter(|&v| degree[v] == 1).collect();
    for v in leaves {
        if pairs.len() >= budget || degree[v] != 1 {
            continue;
        }
        let adjacent: std::collections::HashSet<usize> = pairs
            .iter()
            .filter_map(|&(a, b)| {
                if a == v {
                    Some(b)
                } else if b == v {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for u in 0..nodes.len() {
            if u == v || adjacent.contains(&u) {
                continue;
            }
            let d = node_distance(nodes, u, v);
            if d < best_d {
                best_d = d;
                best = Some(u);
            }
        }
        if let Some(u) = best {
            pairs.push((u.min(v), u.max(v)));
            degree[u] += 1;
            degree[v] += 1;
        }
    }
}

/// Add shortest not-yet-present pairs satisfying `allow` until `target`
/// edges exist.
fn add_closest_pairs(
    nodes: &[NodeRecord],
    pairs: &mut Vec<(usize, usize)>,
    target: usize,
    allow: impl Fn(usize, usize) -> bool,
) {
    use std::collections::HashSet;
    let mut present: HashSet<(usize, usize)> = pairs
        .iter()
        .map(|&(u, v)| (u.min(v), u.max(v)))
        .collect();
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for u in 0..nodes.len() {
        for v in (u + 1)..nodes.len() {
            if allow(u, v) && !present.contains(&(u, v)) {
                candidates.push((node_distance(nodes, u, v), u, v));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for (_, u, v) in candidates {
        if pairs.len() >= target {
            break;
        }
        if present.insert((u, v)) {
            pairs.push((u, v));
        }
    }
}

/// Apportion `count` bridges over the given edges proportionally to edge
/// length (largest remainder), then synthesize NBI-style attributes.
fn place_bridges(
    nodes: &[NodeRecord],
    edges: &[EdgeRecord],
    count: usize,
    first_id: usize,
    rng_seed: u64,
) -> Result<Vec<BridgeRecord>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if edges.is_empty() {
        return Err(Error::InfeasibleCounts(
            "bridges requested but no edges to carry them".into(),
        ));
    }
    let lengths: Vec<f64> = edges
        .iter()
        .map(|e| node_distance(nodes, e.endpoints.0, e.endpoints.1).max(1e-9))
        .collect();
    let total_len: f64 = lengths.iter().sum();
    let quotas: Vec<f64> = lengths
        .iter()
        .map(|l| count as f64 * l / total_len)
        .collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = alloc.iter().sum();
    let mut remainders: Vec<(f64, usize)> = quotas
        .iter()
        .enumerate()
        .map(|(i, q)| (q - q.floor(), i))
        .collect();
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(count - assigned) {
        alloc[i] += 1;
    }

    let materials = ["concrete", "steel", "prestressed"];
    let structures = ["girder", "box-beam", "truss", "arch"];
    let mut bridges = Vec::with_capacity(count);
    let mut id = first_id;
    for (slot, edge) in edges.iter().enumerate() {
        let m = alloc[slot];
        let (u, v) = edge.endpoints;
        for j in 0..m {
            let mut rng = seed::rng(seed::mix2(rng_seed, 0xb81d6e, id as u64));
            let frac = (j + 1) as f64 / (m + 1) as f64;
            let lon = nodes[u].lon + frac * (nodes[v].lon - nodes[u].lon);
            let lat = nodes[u].lat + frac * (nodes[v].lat - nodes[u].lat);
            let material = materials[rng.gen_range(0..materials.len())];
            let built_year = rng.gen_range(1940..=2010);
            let num_spans = 1 + rng.gen_range(0..4u32);
            let max_span_m = rng.gen_range(15.0..60.0);
            let attributes = BridgeAttributes {
                built_year,
                material: material.to_string(),
                structure_type: structures[rng.gen_range(0..structures.len())].to_string(),
                num_spans,
                max_span_m,
                length_m: max_span_m * num_spans as f64 * rng.gen_range(0.7..0.95),
                skew_deg: rng.gen_range(0.0..40.0),
            };
            let bridge_class = classify_bridge(&attributes)?;
            bridges.push(BridgeRecord {
                id,
                edge_id: edge.id,
                lon,
                lat,
                bridge_class,
                attributes,
            });
            id += 1;
        }
    }
    Ok(bridges)
}
