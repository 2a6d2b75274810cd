//! Monte Carlo connectivity estimation and the exact enumeration oracle.
//!
//! Each draw samples independent edge failures from the failure field and
//! runs one breadth-first search from the target over surviving edges, so a
//! single traversal yields the connectivity indicator for every source node
//! at once. Draws are grouped into fixed batches of `check_interval`; each
//! batch has a seed derived from (config seed, batch index), so splitting
//! batches across worker threads cannot change the result.

use std::collections::VecDeque;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeId, Network, NodeId};
use crate::hazard::FailureField;
use crate::seed;

/// Draws before the first convergence check.
pub const MIN_DRAWS: usize = 1_000;

/// Largest number of probabilistic edges `exact_connectivity` will
/// enumerate (2^20 states).
pub const MAX_UNCERTAIN_EDGES: usize = 20;

/// Batches evaluated concurrently between convergence checks.
const WAVE_BATCHES: usize = 8;

/// Monte Carlo sampling controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    /// Hard cap on draws.
    pub max_samples: usize,
    /// Stop early once every node's standard error is below this.
    pub std_threshold: f64,
    /// Draws between convergence checks.
    pub check_interval: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            max_samples: 10_000,
            std_threshold: 0.01,
            check_interval: 500,
            seed: 0,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_samples < 1 {
            return Err(Error::Validation("mc max_samples must be >= 1".into()));
        }
        if !(self.std_threshold > 0.0 && self.std_threshold < 1.0) {
            return Err(Error::Validation(
                "mc std_threshold must be in (0, 1)".into(),
            ));
        }
        if self.check_interval < 1 {
            return Err(Error::Validation("mc check_interval must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Estimated connectivity of every node to one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityEstimate {
    pub target: NodeId,
    /// `probabilities[s]` estimates P(s connected to target).
    pub probabilities: Vec<f64>,
    /// Binomial standard error `sqrt(p(1-p)/k)` per node.
    pub std_errors: Vec<f64>,
    /// Draws backing each node's estimate (identical across nodes; one BFS
    /// per draw serves every source).
    pub samples_used: Vec<usize>,
}

fn check_field(net: &Network, field: &FailureField) -> Result<()> {
    if field.edge_probs.len() != net.edge_count() {
        return Err(Error::ShapeMismatch(format!(
            "failure field has {} edge probabilities, network has {} edges",
            field.edge_probs.len(),
            net.edge_count()
        )));
    }
    if let Some(p) = field
        .edge_probs
        .iter()
        .chain(field.bridge_probs.iter())
        .find(|p| !(0.0..=1.0).contains(*p))
    {
        return Err(Error::Validation(format!(
            "failure probability {p} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Sample one damage state: every edge fails independently with its field
/// probability. Sampling directly at the edge level is equivalent to
/// sampling bridges, because bridges are disjoint across edges and an edge
/// fails iff at least one of its bridges fails. Returns failed edge ids in
/// ascending order.
pub fn sample_damage(
    net: &Network,
    field: &FailureField,
    rng: &mut impl Rng,
) -> Result<Vec<EdgeId>> {
    check_field(net, field)?;
    let mut failed = Vec::new();
    for (e, &p) in field.edge_probs.iter().enumerate() {
        if rng.gen::<f64>() < p {
            failed.push(e);
        }
    }
    Ok(failed)
}

struct BatchCounts {
    draws: usize,
    reached: Vec<u64>,
}

fn run_batch(net: &Network, field: &FailureField, t: NodeId, draws: usize, seed: u64) -> BatchCounts {
    let n = net.node_count();
    let m = net.edge_count();
    let mut rng = seed::rng(seed);
    let mut edge_failed = vec![false; m];
    let mut visited = vec![false; n];
    let mut queue = VecDeque::with_capacity(n);
    let mut reached = vec![0u64; n];
    for _ in 0..draws {
        for (e, &p) in field.edge_probs.iter().enumerate() {
            edge_failed[e] = rng.gen::<f64>() < p;
        }
        net.reachable_from(t, &edge_failed, &mut visited, &mut queue);
        for (v, &hit) in visited.iter().enumerate() {
            reached[v] += u64::from(hit);
        }
    }
    BatchCounts { draws, reached }
}

fn std_error(p: f64, k: usize) -> f64 {
    (p * (1.0 - p) / k as f64).sqrt()
}

/// Estimate connectivity of every node to target `t` by Monte Carlo.
///
/// Stops at the first convergence check (every `check_interval` draws, after
/// at least [`MIN_DRAWS`]) where all nodes' standard errors are below the
/// threshold, or at `max_samples`. Deterministic for a fixed config
/// regardless of thread count.
pub fn estimate_connectivity(
    net: &Network,
    field: &FailureField,
    t: NodeId,
    cfg: &McConfig,
) -> Result<ConnectivityEstimate> {
    cfg.validate()?;
    check_field(net, field)?;
    if t >= net.node_count() {
        return Err(Error::UnknownNode(t));
    }

    let n = net.node_count();
    let interval = cfg.check_interval;
    let total_batches = cfg.max_samples.div_ceil(interval);
    let mut cumulative = vec![0u64; n];
    let mut draws_done = 0usize;
    let mut next_batch = 0usize;

    'outer: while next_batch < total_batches {
        let wave_end = (next_batch + WAVE_BATCHES).min(total_batches);
        let wave: Vec<BatchCounts> = (next_batch..wave_end)
            .into_par_iter()
            .map(|b| {
                let start = b * interval;
                let draws = interval.min(cfg.max_samples - start);
                run_batch(net, field, t, draws, seed::mix2(cfg.seed, 0xba7c, b as u64))
            })
            .collect();
        for batch in wave {
            for (c, r) in cumulative.iter_mut().zip(&batch.reached) {
                *c += r;
            }
            draws_done += batch.draws;
            if draws_done >= MIN_DRAWS.min(cfg.max_samples) {
                let converged = cumulative.iter().all(|&c| {
                    let p = c as f64 / draws_done as f64;
                    std_error(p, draws_done) < cfg.std_threshold
                });
                if converged {
                    break 'outer;
                }
            }
        }
        next_batch = wave_end;
    }

    let probabilities: Vec<f64> = cumulative
        .iter()
        .map(|&c| c as f64 / draws_done as f64)
        .collect();
    let std_errors = probabilities
        .iter()
        .map(|&p| std_error(p, draws_done))
        .collect();
    Ok(ConnectivityEstimate {
        target: t,
        probabilities,
        std_errors,
        samples_used: vec![draws_done; n],
    })
}

/// Exact two-terminal connectivity probability by enumerating every state
/// of the probabilistic edges. Edges with probability exactly 0 or 1 are
/// fixed; at most [`MAX_UNCERTAIN_EDGES`] edges may be uncertain.
pub fn exact_connectivity(
    net: &Network,
    field: &FailureField,
    s: NodeId,
    t: NodeId,
) -> Result<f64> {
    check_field(net, field)?;
    if s >= net.node_count() {
        return Err(Error::UnknownNode(s));
    }
    if t >= net.node_count() {
        return Err(Error::UnknownNode(t));
    }

    let uncertain: Vec<EdgeId> = field
        .edge_probs
        .iter()
        .enumerate()
        .filter(|&(_, &p)| p > 0.0 && p < 1.0)
        .map(|(e, _)| e)
        .collect();
    if uncertain.len() > MAX_UNCERTAIN_EDGES {
        return Err(Error::TooManyUncertainEdges {
            count: uncertain.len(),
            max: MAX_UNCERTAIN_EDGES,
        });
    }

    let n = net.node_count();
    let mut edge_failed: Vec<bool> = field.edge_probs.iter().map(|&p| p == 1.0).collect();
    let mut visited = vec![false; n];
    let mut queue = VecDeque::with_capacity(n);
    let mut total = 0.0;
    for state in 0u64..(1u64 << uncertain.len()) {
        let mut prob = 1.0;
        for (bit, &e) in uncertain.iter().enumerate() {
            let fails = state >> bit & 1 == 1;
            edge_failed[e] = fails;
            prob *= if fails {
                field.edge_probs[e]
            } else {
                1.0 - field.edge_probs[e]
            };
        }
        net.reachable_from(t, &edge_failed, &mut visited, &mut queue);
        if visited[s] {
            total += prob;
        }
    }
    Ok(total)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::graph::network_from_pairs;
    use crate::hazard::{FailureField, FaultStyle, SeismicScenario, SigmaMode};

    pub fn field_for(net: &Network, edge_probs: Vec<f64>) -> FailureField {
        let scenario = SeismicScenario {
            magnitude: 7.0,
            epicenter: (0.0, 0.0),
            style_of_faulting: FaultStyle::StrikeSlip,
            regional_quality: 150.0,
            basin_depth_km: 0.0,
            sigma_mode: SigmaMode::Median,
        };
        assert_eq!(edge_probs.len(), net.edge_count());
        FailureField::from_edge_probs(scenario, edge_probs)
    }

    #[test]
    fn sample_damage_extremes() {
        let net = network_from_pairs(3, &[(0, 1), (1, 2)]).unwrap();
        let mut rng = seed::rng(1);
        let none = sample_damage(&net, &field_for(&net, vec![0.0, 0.0]), &mut rng).unwrap();
        assert!(none.is_empty());
        let all = sample_damage(&net, &field_for(&net, vec![1.0, 1.0]), &mut rng).unwrap();
        assert_eq!(all, vec![0, 1]);
    }

    #[test]
    fn sample_damage_frequency_matches_probability() {
        let net = network_from_pairs(2, &[(0, 1)]).unwrap();
        let field = field_for(&net, vec![0.28]);
        let mut rng = seed::rng(42);
        let draws = 100_000;
        let mut failures = 0usize;
        for _ in 0..draws {
            failures += sample_damage(&net, &field, &mut rng).unwrap().len();
        }
        let freq = failures as f64 / draws as f64;
        assert!((freq - 0.28).abs() < 0.01, "freq = {freq}");
    }

    #[test]
    fn exact_series_and_parallel() {
        let series = network_from_pairs(3, &[(0, 1), (1, 2)]).unwrap();
        let p = exact_connectivity(&series, &field_for(&series, vec![0.1, 0.2]), 0, 2).unwrap();
        assert!((p - 0.72).abs() < 1e-12);

        // two node-disjoint single-edge paths cannot share endpoints in a
        // simple graph; use two 2-hop paths with reliable inner edges
        let par = network_from_pairs(4, &[(0, 1), (1, 3), (0, 2), (2, 3)]).unwrap();
        let p = exact_connectivity(
            &par,
            &field_for(&par, vec![0.5, 0.0, 0.5, 0.0]),
            0,
            3,
        )
        .unwrap();
        assert!((p - 0.75).abs() < 1e-12);
    }

    #[test]
    fn exact_wheatstone_bridge_is_half() {
        // s=0, a=1, b=2, t=3 with a bridging edge a-b; all p = 0.5
        let net = network_from_pairs(4, &[(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)]).unwrap();
        let field = field_for(&net, vec![0.5; 5]);
        let p = exact_connectivity(&net, &field, 0, 3).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn exact_with_no_uncertainty() {
        let net = network_from_pairs(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(
            exact_connectivity(&net, &field_for(&net, vec![0.0, 0.0]), 0, 2).unwrap(),
            1.0
        );
        assert_eq!(
            exact_connectivity(&net, &field_for(&net, vec![1.0, 0.0]), 0, 2).unwrap(),
            0.0
        );
    }

    #[test]
    fn exact_rejects_too_many_uncertain_edges() {
        let pairs: Vec<_> = (0..21).map(|i| (i, i + 1)).collect();
        let net = network_from_pairs(22, &pairs).unwrap();
        let field = field_for(&net, vec![0.5; 21]);
        assert!(matches!(
            exact_connectivity(&net, &field, 0, 21),
            Err(Error::TooManyUncertainEdges { count: 21, max: 20 })
        ));
    }

    #[test]
    fn exact_monotone_in_every_edge_probability() {
        let net = network_from_pairs(4, &[(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)]).unwrap();
        let base_probs = vec![0.3, 0.5, 0.2, 0.4, 0.6];
        let base =
            exact_connectivity(&net, &field_for(&net, base_probs.clone()), 0, 3).unwrap();
        for e in 0..base_probs.len() {
            let mut raised = base_probs.clone();
            raised[e] = (raised[e] + 0.2).min(1.0);
            let p = exact_connectivity(&net, &field_for(&net, raised), 0, 3).unwrap();
            assert!(p <= base + 1e-15, "raising edge {e} increased connectivity");
        }
    }

    #[test]
    fn estimate_certain_field_converges_at_min_draws() {
        let net = network_from_pairs(3, &[(0, 1), (1, 2)]).unwrap();
        let field = field_for(&net, vec![0.0, 0.0]);
        let est = estimate_connectivity(&net, &field, 0, &McConfig::default()).unwrap();
        assert!(est.probabilities.iter().all(|&p| p == 1.0));
        assert!(est.samples_used.iter().all(|&k| k == MIN_DRAWS));
    }

    #[test]
    fn estimate_two_node_edge() {
        let net = network_from_pairs(2, &[(0, 1)]).unwrap();
        let field = field_for(&net, vec![0.3]);
        let cfg = McConfig {
            max_samples: 10_000,
            std_threshold: 1e-9, // force the full sample budget
            check_interval: 500,
            seed: 7,
        };
        let est = estimate_connectivity(&net, &field, 1, &cfg).unwrap();
        assert_eq!(est.probabilities[1], 1.0);
        let tol = 3.0 * (0.21f64 / 10_000.0).sqrt();
        assert!((est.probabilities[0] - 0.7).abs() < tol);
        assert_eq!(est.samples_used[0], 10_000);
    }

    #[test]
    fn estimate_is_deterministic_and_thread_count_independent() {
        let net = network_from_pairs(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let field = field_for(&net, vec![0.4, 0.3, 0.5, 0.2]);
        let cfg = McConfig::default().with_seed(5);
        let base = estimate_connectivity(&net, &field, 0, &cfg).unwrap();
        let again = estimate_connectivity(&net, &field, 0, &cfg).unwrap();
        assert_eq!(base, again);

        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| estimate_connectivity(&net, &field, 0, &cfg).unwrap());
        assert_eq!(base, single);
    }

    #[test]
    fn isolated_target_detects_certain_disconnection() {
        let net = network_from_pairs(3, &[(0, 1), (1, 2)]).unwrap();
        let field = field_for(&net, vec![1.0, 1.0]);
        let est = estimate_connectivity(&net, &field, 1, &McConfig::default()).unwrap();
        assert_eq!(est.probabilities, vec![0.0, 1.0, 0.0]);
    }
}
