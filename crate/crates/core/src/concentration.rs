//! Concentration and degree statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netbuild::{MinerNetwork, MinerStats};
use crate::sum::{sum, NeumaierSum};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("gini is undefined for an empty or all-zero distribution")]
    UndefinedGini,
    #[error("negative or non-finite value {0}")]
    InvalidValue(f64),
    #[error("shares sum to {0}, expected 100")]
    SharesNotNormalized(f64),
    #[error("density needs at least two nodes, found {0}")]
    TooFewNodes(usize),
}

/// Gini coefficient over sorted values:
/// `Σ (2i − n − 1)·x_(i) / (n·Σx)` for `i = 1..n`.
pub fn gini(values: &[f64]) -> Result<f64, MetricError> {
    if let Some(&bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(MetricError::InvalidValue(bad));
    }
    let total = sum(values.iter().copied());
    if values.is_empty() || total <= 0.0 {
        return Err(MetricError::UndefinedGini);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut acc = NeumaierSum::new();
    for (i, x) in sorted.iter().enumerate() {
        acc.add((2.0 * (i + 1) as f64 - n - 1.0) * x);
    }
    Ok(acc.value() / (n * total))
}

/// Tolerance on the share total accepted by [`hhi`].
pub const HHI_SHARE_TOLERANCE: f64 = 1e-6;

/// Herfindahl–Hirschman index over percentage shares (0–100 each).
pub fn hhi(shares_pct: &[f64]) -> Result<f64, MetricError> {
    if let Some(&bad) = shares_pct.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(MetricError::InvalidValue(bad));
    }
    let total = sum(shares_pct.iter().copied());
    if (total - 100.0).abs() > HHI_SHARE_TOLERANCE {
        return Err(MetricError::SharesNotNormalized(total));
    }
    Ok(sum(shares_pct.iter().map(|s| s * s)))
}

/// Combined share of the `n` top-ranked miners (all of them if `n > N`).
pub fn top_n_share(stats: &MinerStats, n: usize) -> f64 {
    sum(stats.by_rank().into_iter().take(n).map(|s| s.hash_share))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Density {
    /// `|E| / (|V|·(|V|−1))` over every miner.
    pub all: f64,
    /// Same ratio restricted to miners with at least one relationship;
    /// `None` when fewer than two such miners exist.
    pub connected: Option<f64>,
    pub connected_nodes: usize,
}

pub fn density(net: &MinerNetwork) -> Result<Density, MetricError> {
    let n = net.node_count();
    if n < 2 {
        return Err(MetricError::TooFewNodes(n));
    }
    let e = net.edge_count() as f64;
    let possible = |v: usize| (v as f64) * (v as f64 - 1.0);
    let connected_nodes = net.connected_node_count();
    Ok(Density {
        all: e / possible(n),
        connected: (connected_nodes >= 2).then(|| e / possible(connected_nodes)),
        connected_nodes,
    })
}

/// Per-node weighted and unweighted degrees.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeProfile {
    pub w_in: Vec<f64>,
    pub w_out: Vec<f64>,
    pub d_in: Vec<usize>,
    pub d_out: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegreeSummary {
    pub mean: f64,
    pub median: f64,
}

impl DegreeProfile {
    /// Weighted degree of a node: the mean of its weighted in- and
    /// out-degree, so the network average equals the common average of
    /// in- and out-degrees.
    pub fn weighted_degree(&self, node: usize) -> f64 {
        (self.w_in[node] + self.w_out[node]) / 2.0
    }

    pub fn summary(&self) -> DegreeSummary {
        let n = self.w_in.len();
        if n == 0 {
            return DegreeSummary { mean: 0.0, median: 0.0 };
        }
        let mut degrees: Vec<f64> = (0..n).map(|v| self.weighted_degree(v)).collect();
        let mean = sum(degrees.iter().copied()) / n as f64;
        degrees.sort_by(f64::total_cmp);
        DegreeSummary { mean, median: lower_median(&degrees) }
    }
}

/// Median of sorted data, taking the lower middle element for even counts.
pub fn lower_median(sorted: &[f64]) -> f64 {
    if sorted.is_empty() {
        0.0
    } else {
        sorted[(sorted.len() - 1) / 2]
    }
}

pub fn degree_profile(net: &MinerNetwork) -> DegreeProfile {
    let n = net.node_count();
    let mut w_in = vec![NeumaierSum::new(); n];
    let mut w_out = vec![NeumaierSum::new(); n];
    let mut d_in = vec![0; n];
    let mut d_out = vec![0; n];
    for e in net.edges() {
        w_out[e.from].add(e.attr.value_usd);
        w_in[e.to].add(e.attr.value_usd);
        d_out[e.from] += 1;
        d_in[e.to] += 1;
    }
    DegreeProfile {
        w_in: w_in.iter().map(NeumaierSum::value).collect(),
        w_out: w_out.iter().map(NeumaierSum::value).collect(),
        d_in,
        d_out,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Sender,
    Receiver,
    Mixed,
    Isolated,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Sender, Role::Receiver, Role::Mixed, Role::Isolated];

    pub fn from_degrees(d_in: usize, d_out: usize) -> Role {
        match (d_in > 0, d_out > 0) {
            (false, true) => Role::Sender,
            (true, false) => Role::Receiver,
            (true, true) => Role::Mixed,
            (false, false) => Role::Isolated,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Sender => "sender",
            Role::Receiver => "receiver",
            Role::Mixed => "mixed",
            Role::Isolated => "isolated",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL.into_iter().find(|r| r.as_str() == s).ok_or_else(|| format!("unknown role `{s}`"))
    }
}

pub fn classify_roles(net: &MinerNetwork) -> Vec<Role> {
    (0..net.node_count()).map(|v| Role::from_degrees(net.in_degree(v), net.out_degree(v))).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RoleCounts {
    pub sender: usize,
    pub receiver: usize,
    pub mixed: usize,
    pub isolated: usize,
}

impl RoleCounts {
    pub fn tally(roles: &[Role]) -> Self {
        let mut c = RoleCounts::default();
        for r in roles {
            match r {
                Role::Sender => c.sender += 1,
                Role::Receiver => c.receiver += 1,
                Role::Mixed => c.mixed += 1,
                Role::Isolated => c.isolated += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.sender + self.receiver + self.mixed + self.isolated
    }
}
