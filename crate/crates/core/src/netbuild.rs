//! Analysis slices, the miner transaction network, and per-slice hash-power
//! statistics.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::address::Address;
use crate::ingest::{miner_set, BlockTable, MinerTx};
use crate::sum::NeumaierSum;

pub const SECONDS_PER_DAY: u64 = 86_400;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("no blocks to slice")]
    NoBlocks,
    #[error("window_days must be positive")]
    ZeroWindow,
    #[error("self-loop on {0}")]
    SelfLoop(Address),
    #[error("edge endpoint {0} is not a node")]
    UnknownEndpoint(Address),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(Address, Address),
    #[error("transaction endpoint {0} never mined a block")]
    NotAMiner(Address),
}

/// One cumulative analysis slice: genesis through `last_block`, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SliceIndex {
    /// 1-based slice number.
    pub k: usize,
    pub last_block: u64,
    pub blocks_per_window: u64,
}

/// Average number of blocks per window, or `None` when the whole chain fits
/// in a single window.
pub fn window_size(total_blocks: u64, span_secs: u64, window_days: u64) -> Option<u64> {
    let window_secs = window_days.checked_mul(SECONDS_PER_DAY)?;
    if total_blocks == 0 || span_secs == 0 || span_secs < window_secs {
        return None;
    }
    let per_window = (total_blocks as u128 * window_secs as u128 / span_secs as u128) as u64;
    if per_window >= total_blocks {
        None
    } else {
        Some(per_window.max(1))
    }
}

/// Number of slices produced for a chain of `total_blocks` spanning
/// `span_secs`: the trailing partial window is merged into the last slice.
pub fn slice_count(total_blocks: u64, span_secs: u64, window_days: u64) -> u64 {
    match window_size(total_blocks, span_secs, window_days) {
        Some(w) => (total_blocks / w).max(1),
        None => 1,
    }
}

/// Cumulative slice boundaries every `window_days` worth of blocks.
pub fn slice_boundaries(blocks: &BlockTable, window_days: u64) -> Result<Vec<SliceIndex>, NetworkError> {
    if window_days == 0 {
        return Err(NetworkError::ZeroWindow);
    }
    let records = blocks.records();
    let (first, last) = match (records.first(), records.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(NetworkError::NoBlocks),
    };
    let total = records.len() as u64;
    let span = last.timestamp.saturating_sub(first.timestamp);
    let Some(per_window) = window_size(total, span, window_days) else {
        return Ok(vec![SliceIndex { k: 1, last_block: last.block_number, blocks_per_window: total }]);
    };
    let k_max = slice_count(total, span, window_days);
    Ok((1..=k_max)
        .map(|k| {
            let last_block = if k == k_max {
                last.block_number
            } else {
                records[(k * per_window - 1) as usize].block_number
            };
            SliceIndex { k: k as usize, last_block, blocks_per_window: per_window }
        })
        .collect())
}

/// Aggregate of all transfers in one direction between two miners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeAttr {
    pub value_usd: f64,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub attr: EdgeAttr,
}

/// Directed weighted network between miners.
///
/// Nodes are kept sorted by address, so a node id is its rank in address
/// order. Edges are sorted by `(from, to)` and indexed both ways.
#[derive(Debug, Clone, PartialEq)]
pub struct MinerNetwork {
    nodes: Vec<Address>,
    edges: Vec<Edge>,
    out_start: Vec<usize>,
    in_start: Vec<usize>,
    in_edges: Vec<usize>,
    slice: Option<SliceIndex>,
}

impl MinerNetwork {
    /// Builds a network from explicit nodes and edges. Duplicate nodes are
    /// merged; self-loops, duplicate edges, and dangling endpoints are errors.
    pub fn new<I>(nodes: Vec<Address>, edges: I) -> Result<Self, NetworkError>
    where
        I: IntoIterator<Item = (Address, Address, EdgeAttr)>,
    {
        let mut nodes = nodes;
        nodes.sort_unstable();
        nodes.dedup();
        let mut indexed = Vec::new();
        for (from, to, attr) in edges {
            if from == to {
                return Err(NetworkError::SelfLoop(from));
            }
            let f = nodes.binary_search(&from).map_err(|_| NetworkError::UnknownEndpoint(from))?;
            let t = nodes.binary_search(&to).map_err(|_| NetworkError::UnknownEndpoint(to))?;
            indexed.push(Edge { from: f, to: t, attr });
        }
        indexed.sort_unstable_by_key(|e| (e.from, e.to));
        if let Some(p) = indexed.windows(2).find(|p| (p[0].from, p[0].to) == (p[1].from, p[1].to)) {
            return Err(NetworkError::DuplicateEdge(nodes[p[0].from], nodes[p[0].to]));
        }
        Ok(Self::from_sorted(nodes, indexed, None))
    }

    /// Network over nodes `0..n` (addresses from [`Address::from_u64`]) with
    /// unit-value edges. Duplicate pairs and self-loops are dropped.
    pub fn from_edge_list(n: usize, edges: &[(usize, usize)]) -> Self {
        let nodes: Vec<Address> = (0..n as u64).map(Address::from_u64).collect();
        let mut list: Vec<(usize, usize)> = edges.iter().copied().filter(|(a, b)| a != b).collect();
        list.sort_unstable();
        list.dedup();
        let edges = list
            .into_iter()
            .map(|(from, to)| {
                assert!(from < n && to < n, "edge ({from}, {to}) out of range for {n} nodes");
                Edge { from, to, attr: EdgeAttr { value_usd: 1.0, count: 1 } }
            })
            .collect();
        Self::from_sorted(nodes, edges, None)
    }

    fn from_sorted(nodes: Vec<Address>, edges: Vec<Edge>, slice: Option<SliceIndex>) -> Self {
        let n = nodes.len();
        let mut out_start = vec![0usize; n + 1];
        let mut in_start = vec![0usize; n + 1];
        for e in &edges {
            out_start[e.from + 1] += 1;
            in_start[e.to + 1] += 1;
        }
        for i in 0..n {
            out_start[i + 1] += out_start[i];
            in_start[i + 1] += in_start[i];
        }
        let mut fill = in_start.clone();
        let mut in_edges = vec![0usize; edges.len()];
        for (id, e) in edges.iter().enumerate() {
            in_edges[fill[e.to]] = id;
            fill[e.to] += 1;
        }
        MinerNetwork { nodes, edges, out_start, in_start, in_edges, slice }
    }

    pub fn with_slice(mut self, slice: SliceIndex) -> Self {
        self.slice = Some(slice);
        self
    }

    pub fn slice(&self) -> Option<SliceIndex> {
        self.slice
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Address] {
        &self.nodes
    }

    pub fn address(&self, node: usize) -> Address {
        self.nodes[node]
    }

    pub fn index_of(&self, address: &Address) -> Option<usize> {
        self.nodes.binary_search(address).ok()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn out_edges(&self, node: usize) -> &[Edge] {
        &self.edges[self.out_start[node]..self.out_start[node + 1]]
    }

    pub fn in_edges(&self, node: usize) -> impl Iterator<Item = &Edge> + '_ {
        self.in_edges[self.in_start[node]..self.in_start[node + 1]].iter().map(move |&id| &self.edges[id])
    }

    pub fn out_degree(&self, node: usize) -> usize {
        self.out_start[node + 1] - self.out_start[node]
    }

    pub fn in_degree(&self, node: usize) -> usize {
        self.in_start[node + 1] - self.in_start[node]
    }

    pub fn successors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.out_edges(node).iter().map(|e| e.to)
    }

    pub fn predecessors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.in_edges(node).map(|e| e.from)
    }

    pub fn edge(&self, from: usize, to: usize) -> Option<&EdgeAttr> {
        let out = self.out_edges(from);
        out.binary_search_by_key(&to, |e| e.to).ok().map(|i| &out[i].attr)
    }

    pub fn total_value(&self) -> f64 {
        crate::sum::sum(self.edges.iter().map(|e| e.attr.value_usd))
    }

    /// Nodes with at least one incident edge.
    pub fn connected_node_count(&self) -> usize {
        (0..self.node_count()).filter(|&v| self.out_degree(v) + self.in_degree(v) > 0).count()
    }

    /// Subgraph induced by `keep` (indexed by node id). Returns the subgraph
    /// and, for each of its nodes, the id in `self`.
    pub fn induced(&self, keep: &[bool]) -> (MinerNetwork, Vec<usize>) {
        assert_eq!(keep.len(), self.node_count());
        let old_ids: Vec<usize> = (0..self.node_count()).filter(|&v| keep[v]).collect();
        let mut new_id = vec![usize::MAX; self.node_count()];
        for (new, &old) in old_ids.iter().enumerate() {
            new_id[old] = new;
        }
        let nodes = old_ids.iter().map(|&v| self.nodes[v]).collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| keep[e.from] && keep[e.to])
            .map(|e| Edge { from: new_id[e.from], to: new_id[e.to], attr: e.attr })
            .collect();
        (Self::from_sorted(nodes, edges, self.slice), old_ids)
    }
}

/// Aggregates miner transactions into cumulative slice networks.
///
/// A transaction enters slice `k` once its block is within the slice and both
/// endpoints have mined a block by `last_block`, so every edge endpoint is a
/// node of that slice. Transactions are summed in one canonical order
/// (activation block, block number, tx index), which makes every slice
/// independent of input order and each slice's sums a prefix of the next.
pub struct NetworkBuilder<'a> {
    blocks: &'a BlockTable,
    pairs: Vec<(Address, Address)>,
    /// (activation block, pair id, value) in canonical order.
    entries: Vec<(u64, usize, f64)>,
}

impl<'a> NetworkBuilder<'a> {
    pub fn new(miner_txs: &[MinerTx], blocks: &'a BlockTable) -> Result<Self, NetworkError> {
        let mut first_mined: HashMap<Address, u64> = HashMap::new();
        for b in blocks.records() {
            first_mined.entry(b.miner).or_insert(b.block_number);
        }
        let mut pair_ids: BTreeMap<(Address, Address), usize> = BTreeMap::new();
        let mut keyed = Vec::with_capacity(miner_txs.len());
        for tx in miner_txs {
            if tx.from == tx.to {
                return Err(NetworkError::SelfLoop(tx.from));
            }
            let f = *first_mined.get(&tx.from).ok_or(NetworkError::NotAMiner(tx.from))?;
            let t = *first_mined.get(&tx.to).ok_or(NetworkError::NotAMiner(tx.to))?;
            let activation = tx.block_number.max(f).max(t);
            let next = pair_ids.len();
            let pair = *pair_ids.entry((tx.from, tx.to)).or_insert(next);
            keyed.push(((activation, tx.block_number, tx.tx_index), pair, tx.value_usd));
        }
        keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.total_cmp(&b.2)));
        // Renumber pairs so that pair order is (from, to) address order.
        let mut remap = vec![0usize; pair_ids.len()];
        let mut pairs = Vec::with_capacity(pair_ids.len());
        for (sorted_id, (pair, first_id)) in pair_ids.into_iter().enumerate() {
            remap[first_id] = sorted_id;
            pairs.push(pair);
        }
        let entries = keyed.into_iter().map(|((act, _, _), pair, v)| (act, remap[pair], v)).collect();
        Ok(NetworkBuilder { blocks, pairs, entries })
    }

    pub fn build(&self, slice: &SliceIndex) -> MinerNetwork {
        let nodes: Vec<Address> = miner_set(self.blocks, slice.last_block).into_iter().collect();
        let mut acc: Vec<(NeumaierSum, u64)> = vec![(NeumaierSum::new(), 0); self.pairs.len()];
        let end = self.entries.partition_point(|e| e.0 <= slice.last_block);
        for &(_, pair, value) in &self.entries[..end] {
            acc[pair].0.add(value);
            acc[pair].1 += 1;
        }
        let edges = self
            .pairs
            .iter()
            .zip(&acc)
            .filter(|(_, (_, count))| *count > 0)
            .map(|((from, to), (sum, count))| Edge {
                from: nodes.binary_search(from).expect("activation implies membership"),
                to: nodes.binary_search(to).expect("activation implies membership"),
                attr: EdgeAttr { value_usd: sum.value(), count: *count },
            })
            .collect();
        MinerNetwork::from_sorted(nodes, edges, Some(*slice))
    }

    /// Σ value of the transactions that enter `slice`, in canonical order.
    pub fn slice_value(&self, slice: &SliceIndex) -> f64 {
        let end = self.entries.partition_point(|e| e.0 <= slice.last_block);
        crate::sum::sum(self.entries[..end].iter().map(|e| e.2))
    }
}

/// Cumulative network for one slice.
pub fn build_network(
    miner_txs: &[MinerTx],
    blocks: &BlockTable,
    slice: &SliceIndex,
) -> Result<MinerNetwork, NetworkError> {
    Ok(NetworkBuilder::new(miner_txs, blocks)?.build(slice))
}

/// Edges gained (or grown) between two cumulative networks, with attribute
/// differences. Useful for per-window series.
pub fn window_delta(prev: &MinerNetwork, next: &MinerNetwork) -> Vec<(Address, Address, EdgeAttr)> {
    next.edges()
        .iter()
        .filter_map(|e| {
            let (from, to) = (next.address(e.from), next.address(e.to));
            let before = match (prev.index_of(&from), prev.index_of(&to)) {
                (Some(f), Some(t)) => prev.edge(f, t).copied(),
                _ => None,
            }
            .unwrap_or(EdgeAttr { value_usd: 0.0, count: 0 });
            let count = e.attr.count - before.count;
            (count > 0).then_some((from, to, EdgeAttr { value_usd: e.attr.value_usd - before.value_usd, count }))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinerStat {
    pub address: Address,
    pub blocks_mined: u64,
    pub hash_share: f64,
    /// 1 = most blocks; ties broken by address.
    pub rank: usize,
}

/// Blocks mined per miner up to a slice boundary, used as the hash-power
/// proxy.
#[derive(Debug, Clone, PartialEq)]
pub struct MinerStats {
    /// Sorted by address.
    entries: Vec<MinerStat>,
    total_blocks: u64,
}

impl MinerStats {
    /// Stats from raw block counts. Ranks descend by count, ties by address.
    pub fn from_counts<I: IntoIterator<Item = (Address, u64)>>(counts: I) -> Self {
        let mut by_addr: BTreeMap<Address, u64> = BTreeMap::new();
        for (a, c) in counts {
            *by_addr.entry(a).or_default() += c;
        }
        let total_blocks: u64 = by_addr.values().sum();
        let mut entries: Vec<MinerStat> = by_addr
            .into_iter()
            .map(|(address, blocks_mined)| MinerStat {
                address,
                blocks_mined,
                hash_share: if total_blocks == 0 { 0.0 } else { blocks_mined as f64 / total_blocks as f64 },
                rank: 0,
            })
            .collect();
        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.sort_by(|&a, &b| {
            entries[b].blocks_mined.cmp(&entries[a].blocks_mined).then(entries[a].address.cmp(&entries[b].address))
        });
        for (rank, idx) in order.into_iter().enumerate() {
            entries[idx].rank = rank + 1;
        }
        MinerStats { entries, total_blocks }
    }

    pub fn entries(&self) -> &[MinerStat] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_blocks(&self) -> u64 {
        self.total_blocks
    }

    pub fn get(&self, address: &Address) -> Option<&MinerStat> {
        self.entries.binary_search_by_key(address, |s| s.address).ok().map(|i| &self.entries[i])
    }

    /// Entries ordered by rank.
    pub fn by_rank(&self) -> Vec<&MinerStat> {
        let mut v: Vec<&MinerStat> = self.entries.iter().collect();
        v.sort_by_key(|s| s.rank);
        v
    }

    /// Hash share of every network node (0 for nodes without stats).
    pub fn weights_for(&self, net: &MinerNetwork) -> Vec<f64> {
        net.nodes().iter().map(|a| self.get(a).map_or(0.0, |s| s.hash_share)).collect()
    }

    /// Blocks mined by every network node (0 for nodes without stats).
    pub fn blocks_for(&self, net: &MinerNetwork) -> Vec<u64> {
        net.nodes().iter().map(|a| self.get(a).map_or(0, |s| s.blocks_mined)).collect()
    }
}

pub fn hash_stats(blocks: &BlockTable, slice: &SliceIndex) -> MinerStats {
    MinerStats::from_counts(blocks.upto(slice.last_block).iter().map(|b| (b.miner, 1)))
}
