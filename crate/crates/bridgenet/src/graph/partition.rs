//! Balanced connected partitioning by seeded BFS region growing.
//!
//! Seeds are placed by farthest-point sampling (first seed drawn from the
//! RNG), regions grow breadth-first with the smallest region claiming the
//! next frontier node, and a rebalancing pass shifts boundary nodes from
//! large to small regions while keeping every region connected. The output
//! is deterministic for a fixed seed.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Network, NodeId};
use crate::seed;

/// Default allowed spread beyond the ideal `ceil(|V|/P) - floor(|V|/P)`.
pub const DEFAULT_BALANCE_SLACK: usize = 2;

/// A node-to-part assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    part_count: usize,
}

impl Partition {
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn part_count(&self) -> usize {
        self.part_count
    }

    pub fn part_of(&self, v: NodeId) -> usize {
        self.assignment[v]
    }

    pub fn part_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.part_count];
        for &p in &self.assignment {
            sizes[p] += 1;
        }
        sizes
    }

    /// Members of part `p`, ascending by node id.
    pub fn members(&self, p: usize) -> Vec<NodeId> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|&(_, &q)| q == p)
            .map(|(v, _)| v)
            .collect()
    }

    /// Check all partition invariants against `net`: full assignment,
    /// balance within `slack`, and per-part connectivity.
    pub fn validate(&self, net: &Network, slack: usize) -> Result<()> {
        if self.assignment.len() != net.node_count() {
            return Err(Error::Validation(format!(
                "partition covers {} nodes, network has {}",
                self.assignment.len(),
                net.node_count()
            )));
        }
        if let Some(&p) = self.assignment.iter().find(|&&p| p >= self.part_count) {
            return Err(Error::Validation(format!(
                "part index {p} out of range (part_count {})",
                self.part_count
            )));
        }
        let sizes = self.part_sizes();
        let (min, max) = (
            *sizes.iter().min().unwrap_or(&0),
            *sizes.iter().max().unwrap_or(&0),
        );
        let n = net.node_count();
        let ideal_spread = usize::from(n % self.part_count != 0);
        if max - min > ideal_spread + slack {
            return Err(Error::Validation(format!(
                "part sizes {sizes:?} exceed balance slack {slack}"
            )));
        }
        for p in 0..self.part_count {
            if !self.part_is_connected(net, p) {
                return Err(Error::Validation(format!("part {p} is not connected")));
            }
        }
        Ok(())
    }

    fn part_is_connected(&self, net: &Network, p: usize) -> bool {
        let members = self.members(p);
        let Some(&start) = members.first() else {
            return false; // empty part
        };
        let mut seen = vec![false; net.node_count()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &(w, _) in net.neighbors(u) {
                if self.assignment[w] == p && !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == members.len()
    }
}

/// Partition `net` into `parts` balanced connected regions with the default
/// balance slack.
pub fn partition(net: &Network, parts: usize, rng_seed: u64) -> Result<Partition> {
    partition_with_slack(net, parts, rng_seed, DEFAULT_BALANCE_SLACK)
}

pub fn partition_with_slack(
    net: &Network,
    parts: usize,
    rng_seed: u64,
    slack: usize,
) -> Result<Partition> {
    let n = net.node_count();
    if parts < 1 || parts > n {
        return Err(Error::PartsOutOfRange { parts, nodes: n });
    }
    if parts == 1 {
        return Ok(Partition {
            assignment: vec![0; n],
            part_count: 1,
        });
    }

    // Region growing occasionally encloses a region before it reaches its
    // share; retry from different seed placements before giving up. Even
    // attempts use farthest-point seeds, odd attempts random seeds (the
    // farthest-point picks favor leaf tips, which is exactly what encloses
    // on tree-like graphs).
    let mut last_err = None;
    let mut best: Option<(usize, Partition)> = None;
    for attempt in 0..16u64 {
        let attempt_seed = seed::mix(rng_seed, attempt);
        let seeds = if attempt % 2 == 0 {
            spread_seeds(net, parts, attempt_seed)
        } else {
            random_seeds(net, parts, attempt_seed)
        };
        let mut assignment = grow_regions(net, &seeds);
        rebalance(net, &mut assignment, parts);
        let result = Partition {
            assignment,
            part_count: parts,
        };
        match result.validate(net, slack) {
            Ok(()) => {
                let sizes = result.part_sizes();
                let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
                match &best {
                    Some((s, _)) if *s <= spread => {}
                    _ => best = Some((spread, result)),
                }
                if best.as_ref().map(|(s, _)| *s) <= Some(n % parts) {
                    break; // cannot do better than the ideal spread
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((_, partition)) => Ok(partition),
        None => Err(last_err.expect("at least one attempt ran")),
    }
}

/// `parts` distinct random nodes.
fn random_seeds(net: &Network, parts: usize, rng_seed: u64) -> Vec<NodeId> {
    let n = net.node_count();
    let mut rng = seed::rng(seed::mix(rng_seed, 0x4a2d));
    let mut pool: Vec<NodeId> = (0..n).collect();
    for i in (1..pool.len()).rev() {
        let j = rng.gen_range(0..=i);
        pool.swap(i, j);
    }
    pool.truncate(parts);
    pool
}

/// Farthest-point sampling: the first seed is random, each later seed
/// maximizes its hop distance to all previous seeds (smallest id on ties).
fn spread_seeds(net: &Network, parts: usize, rng_seed: u64) -> Vec<NodeId> {
    let n = net.node_count();
    let mut rng = seed::rng(seed::mix(rng_seed, 0x5eed));
    let first = rng.gen_range(0..n);
    let mut seeds = vec![first];
    let mut min_dist = net.shortest_hops(first).expect("valid node");
    while seeds.len() < parts {
        let mut best = None;
        for v in 0..n {
            if seeds.contains(&v) {
                continue;
            }
            match best {
                None => best = Some(v),
                Some(b) if min_dist[v] > min_dist[b] => best = Some(v),
                _ => {}
            }
        }
        let next = best.expect("parts <= node count");
        let dist = net.shortest_hops(next).expect("valid node");
        for v in 0..n {
            min_dist[v] = min_dist[v].min(dist[v]);
        }
        seeds.push(next);
    }
    seeds
}

/// Multi-source BFS growth: the smallest region with a live frontier claims
/// one unassigned node per step.
fn grow_regions(net: &Network, seeds: &[NodeId]) -> Vec<usize> {
    let n = net.node_count();
    let parts = seeds.len();
    let mut assignment = vec![usize::MAX; n];
    let mut queues: Vec<VecDeque<NodeId>> = vec![VecDeque::new(); parts];
    let mut sizes = vec![0usize; parts];
    for (p, &s) in seeds.iter().enumerate() {
        assignment[s] = p;
        sizes[p] += 1;
        for &(w, _) in net.neighbors(s) {
            queues[p].push_back(w);
        }
    }

    let mut assigned = parts;
    while assigned < n {
        // smallest region that can still grow; ties to the lowest index
        let mut pick = None;
        for p in 0..parts {
            while let Some(&front) = queues[p].front() {
                if assignment[front] == usize::MAX {
                    break;
                }
                queues[p].pop_front();
            }
            if queues[p].is_empty() {
                continue;
            }
            match pick {
                None => pick = Some(p),
                Some(q) if sizes[p] < sizes[q] => pick = Some(p),
                _ => {}
            }
        }
        let Some(p) = pick else {
            // only possible on a disconnected input, which Network forbids
            break;
        };
        let v = queues[p].pop_front().expect("frontier checked nonempty");
        assignment[v] = p;
        sizes[p] += 1;
        assigned += 1;
        for &(w, _) in net.neighbors(v) {
            if assignment[w] == usize::MAX {
                queues[p].push_back(w);
            }
        }
    }
    assignment
}

/// Shift boundary nodes from large to small regions. A move is legal when
/// the node borders the recipient and its removal keeps the donor connected.
fn rebalance(net: &Network, assignment: &mut [usize], parts: usize) {
    let n = net.node_count();
    let mut sizes = vec![0usize; parts];
    for &p in assignment.iter() {
        sizes[p] += 1;
    }
    let ideal_spread = usize::from(n % parts != 0);

    for _ in 0..4 * n * parts {
        let max = *sizes.iter().max().unwrap();
        let min = *sizes.iter().min().unwrap();
        if max - min <= ideal_spread {
            break;
        }
        // candidate moves ordered by imbalance reduction, then node id;
        // every accepted move strictly lowers sum(sizes^2), so this ends
        let mut candidates: Vec<(usize, NodeId, usize)> = Vec::new();
        for u in 0..n {
            let a = assignment[u];
            let mut targets: Vec<usize> = net
                .neighbors(u)
                .iter()
                .map(|&(w, _)| assignment[w])
                .filter(|&b| b != a && sizes[a] >= sizes[b] + 2)
                .collect();
            targets.sort_unstable();
            targets.dedup();
            for b in targets {
                candidates.push((sizes[a] - sizes[b], u, b));
            }
        }
        candidates.sort_unstable_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let mut moved = false;
        for (_, u, b) in candidates {
            let a = assignment[u];
            if donor_connected_without(net, assignment, a, u) {
                assignment[u] = b;
                sizes[a] -= 1;
                sizes[b] += 1;
                moved = true;
                break;
            }
        }
        if !moved {
            break;
        }
    }
}

fn donor_connected_without(
    net: &Network,
    assignment: &[usize],
    part: usize,
    removed: NodeId,
) -> bool {
    let members: Vec<NodeId> = (0..net.node_count())
        .filter(|&v| assignment[v] == part && v != removed)
        .collect();
    let Some(&start) = members.first() else {
        return false; // would empty the donor
    };
    let mut seen = vec![false; net.node_count()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &(w, _) in net.neighbors(u) {
            if w != removed && assignment[w] == part && !seen[w] {
                seen[w] = true;
                count += 1;
                queue.push_back(w);
            }
        }
    }
    count == members.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::network_from_pairs;

    fn path(n: usize) -> Network {
        let pairs: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        network_from_pairs(n, &pairs).unwrap()
    }

    #[test]
    fn path_of_four_splits_two_two() {
        let net = path(4);
        let part = partition(&net, 2, 7).unwrap();
        let mut sizes = part.part_sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2]);
        part.validate(&net, 0).unwrap();
    }

    #[test]
    fn single_part_assigns_everything_to_zero() {
        let net = path(5);
        let part = partition(&net, 1, 0).unwrap();
        assert!(part.assignment().iter().all(|&p| p == 0));
    }

    #[test]
    fn parts_out_of_range_rejected() {
        let net = path(3);
        assert!(matches!(
            partition(&net, 0, 0),
            Err(Error::PartsOutOfRange { .. })
        ));
        assert!(matches!(
            partition(&net, 4, 0),
            Err(Error::PartsOutOfRange { .. })
        ));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let net = path(17);
        let a = partition(&net, 4, 99).unwrap();
        let b = partition(&net, 4, 99).unwrap();
        assert_eq!(a.assignment(), b.assignment());
    }

    #[test]
    fn parts_cover_all_nodes_disjointly_and_connected() {
        // a 5x5 grid
        let mut pairs = Vec::new();
        for r in 0..5 {
            for c in 0..5 {
                let v = r * 5 + c;
                if c + 1 < 5 {
                    pairs.push((v, v + 1));
                }
                if r + 1 < 5 {
                    pairs.push((v, v + 5));
                }
            }
        }
        let net = network_from_pairs(25, &pairs).unwrap();
        for parts in [2, 3, 5, 8] {
            let part = partition(&net, parts, 13).unwrap();
            part.validate(&net, DEFAULT_BALANCE_SLACK).unwrap();
            assert_eq!(part.part_sizes().iter().sum::<usize>(), 25);
        }
    }
}
