//! Influence and control analyses over a miner network: edges that run
//! against the hash-power hierarchy, driver nodes from a maximum matching,
//! and minimum-hash dominating sets.

mod domination;
mod hierarchy;
mod matching;

pub use domination::{
    exact_min_weight_dominating_set, greedy_min_weight_dominating_set, threshold_domination,
    verify_domination, verify_threshold, CoverageError, DominatingSet, DOMINATION_EPSILON, EXACT_MAX_NODES,
    exact_threshold_domination,
};
pub use hierarchy::{against_hierarchy, EdgeLabel, HierarchyReport};
pub use matching::{driver_nodes, maximum_matching, DriverSet, Matching};

use thiserror::Error;

use crate::address::Address;

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("no hash statistics for node {0}")]
    MissingStats(Address),
    #[error("exhaustive search is limited to {max} nodes, network has {n}")]
    TooLarge { n: usize, max: usize },
    #[error("threshold must lie in (0, 1], found {0}")]
    InvalidTheta(f64),
    #[error("expected {expected} node weights, found {found}")]
    WeightMismatch { expected: usize, found: usize },
}
