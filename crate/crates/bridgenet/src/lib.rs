//! Seismic connectivity reliability of bridge road networks.
//!
//! The library estimates, for a target intersection in a highway bridge
//! network, the probability that every other intersection stays connected
//! to it after an earthquake. Two engines answer the question:
//!
//! - a Monte Carlo oracle ([`mc`]) that samples bridge failures and runs a
//!   breadth-first search per draw, and
//! - a trained graph-network surrogate ([`gnn`]) that predicts the same
//!   probabilities from local node and edge features in a fraction of the
//!   time.
//!
//! Supporting modules build the hazard model ([`hazard`]), synthesize and
//! load networks ([`graph`], [`synth`]), generate labeled datasets
//! ([`dataset`]) and score the surrogate against the oracle ([`evaluate`]).
//! The `bridgenet` CLI in the companion crate wires these together; the
//! `book/` directory walks through the concepts with runnable snippets.

pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod gnn;
pub mod graph;
pub mod hazard;
pub mod mc;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
