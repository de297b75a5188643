use serde::Serialize;

use super::ControlError;
use crate::netbuild::{MinerNetwork, MinerStats};
use crate::sum::{sum, NeumaierSum};

/// Direction of an edge relative to the blocks mined by its endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeLabel {
    /// The receiver mined strictly more blocks than the sender.
    Against,
    /// The sender mined strictly more blocks than the receiver.
    With,
    Tied,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchyReport {
    /// One label per edge of the network, in edge order.
    #[serde(skip)]
    pub labels: Vec<EdgeLabel>,
    pub count: usize,
    pub value_usd: f64,
    pub fraction: f64,
    /// Mean percentile climb over against-edges, in percent.
    pub mean_climb_pct: Option<f64>,
}

impl HierarchyReport {
    fn empty(edges: usize) -> Self {
        HierarchyReport { labels: vec![EdgeLabel::Tied; edges], count: 0, value_usd: 0.0, fraction: 0.0, mean_climb_pct: None }
    }
}

/// Labels every edge and summarizes those running against the hierarchy.
///
/// The climb of an against-edge `i → j` is `(pct(j) − pct(i))·100` with
/// `pct(x) = 1 − (rank(x) − 1)/(N − 1)` over all `N` miners in `stats`.
pub fn against_hierarchy(net: &MinerNetwork, stats: &MinerStats) -> Result<HierarchyReport, ControlError> {
    let mut info = Vec::with_capacity(net.node_count());
    for a in net.nodes() {
        let s = stats.get(a).ok_or(ControlError::MissingStats(*a))?;
        info.push((s.blocks_mined, s.rank));
    }
    let n = stats.len();
    if n <= 1 {
        return Ok(HierarchyReport::empty(net.edge_count()));
    }
    let percentile = |rank: usize| 1.0 - (rank as f64 - 1.0) / (n as f64 - 1.0);
    let mut labels = Vec::with_capacity(net.edge_count());
    let mut value = NeumaierSum::new();
    let mut climbs = Vec::new();
    for e in net.edges() {
        let (from, to) = (info[e.from], info[e.to]);
        let label = match to.0.cmp(&from.0) {
            std::cmp::Ordering::Greater => EdgeLabel::Against,
            std::cmp::Ordering::Less => EdgeLabel::With,
            std::cmp::Ordering::Equal => EdgeLabel::Tied,
        };
        if label == EdgeLabel::Against {
            value.add(e.attr.value_usd);
            climbs.push((percentile(to.1) - percentile(from.1)) * 100.0);
        }
        labels.push(label);
    }
    let total = net.total_value();
    let value_usd = value.value();
    Ok(HierarchyReport {
        labels,
        count: climbs.len(),
        value_usd,
        fraction: if total > 0.0 { value_usd / total } else { 0.0 },
        mean_climb_pct: (!climbs.is_empty()).then(|| sum(climbs.iter().copied()) / climbs.len() as f64),
    })
}
