use std::collections::VecDeque;

use serde::Serialize;

use crate::netbuild::MinerNetwork;

/// A matching in the bipartite split of a digraph: each node has an
/// out-copy and an in-copy, and edge `i → j` links out-copy `i` to in-copy `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    /// `out_to[i] = Some(j)` when edge `i → j` is matched.
    pub out_to: Vec<Option<usize>>,
    /// `in_from[j] = Some(i)` when edge `i → j` is matched.
    pub in_from: Vec<Option<usize>>,
}

impl Matching {
    fn empty(n: usize) -> Self {
        Matching { out_to: vec![None; n], in_from: vec![None; n] }
    }

    pub fn size(&self) -> usize {
        self.out_to.iter().flatten().count()
    }

    /// Matched edges, sorted by tail.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.out_to.iter().enumerate().filter_map(|(i, j)| j.map(|j| (i, j))).collect()
    }

    /// Builds a matching from an edge list, checking that it is one.
    pub fn from_edges(net: &MinerNetwork, edges: &[(usize, usize)]) -> Result<Self, String> {
        let n = net.node_count();
        let mut m = Matching::empty(n);
        for &(i, j) in edges {
            if i >= n || j >= n || net.edge(i, j).is_none() {
                return Err(format!("({i}, {j}) is not an edge"));
            }
            if m.out_to[i].is_some() {
                return Err(format!("tail {i} matched twice"));
            }
            if m.in_from[j].is_some() {
                return Err(format!("head {j} matched twice"));
            }
            m.out_to[i] = Some(j);
            m.in_from[j] = Some(i);
        }
        Ok(m)
    }
}

const INF: usize = usize::MAX;

/// Maximum-cardinality matching by Hopcroft–Karp, O(E·√V).
///
/// Both phases are iterative, so path length is not bounded by the call stack.
pub fn maximum_matching(net: &MinerNetwork) -> Matching {
    let n = net.node_count();
    let mut m = Matching::empty(n);
    let mut dist = vec![INF; n];
    let mut next_edge = vec![0usize; n];
    let mut queue = VecDeque::new();
    let mut stack: Vec<usize> = Vec::new();
    let mut via: Vec<usize> = Vec::new();

    loop {
        // Layer the free tails.
        queue.clear();
        for u in 0..n {
            if m.out_to[u].is_none() {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = INF;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for v in net.successors(u) {
                match m.in_from[v] {
                    None => found = true,
                    Some(w) if dist[w] == INF => {
                        dist[w] = dist[u] + 1;
                        queue.push_back(w);
                    }
                    Some(_) => {}
                }
            }
        }
        if !found {
            break;
        }

        // Vertex-disjoint shortest augmenting paths.
        next_edge.iter_mut().for_each(|x| *x = 0);
        for root in 0..n {
            if m.out_to[root].is_some() {
                continue;
            }
            stack.clear();
            via.clear();
            stack.push(root);
            while let Some(&u) = stack.last() {
                let out = net.out_edges(u);
                if next_edge[u] == out.len() {
                    dist[u] = INF;
                    stack.pop();
                    via.pop();
                    continue;
                }
                let v = out[next_edge[u]].to;
                next_edge[u] += 1;
                match m.in_from[v] {
                    None => {
                        via.push(v);
                        for (&tail, &head) in stack.iter().zip(&via) {
                            m.out_to[tail] = Some(head);
                            m.in_from[head] = Some(tail);
                        }
                        break;
                    }
                    Some(w) if dist[w] != INF && dist[w] == dist[u] + 1 => {
                        via.push(v);
                        stack.push(w);
                    }
                    Some(_) => {}
                }
            }
        }
    }
    m
}

/// Minimum driver set for structural control.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriverSet {
    /// Nodes whose in-copy is unmatched, sorted. When the matching is
    /// perfect, the smallest node alone.
    pub drivers: Vec<usize>,
    /// `max(|V| − |M*|, 1)`; 0 only for an empty network.
    pub n_d: usize,
    #[serde(skip)]
    pub matching: Matching,
    /// Fraction of non-driver nodes reachable from some driver.
    pub reachable_fraction: f64,
}

pub fn driver_nodes(net: &MinerNetwork) -> DriverSet {
    let n = net.node_count();
    let matching = maximum_matching(net);
    let mut drivers: Vec<usize> = (0..n).filter(|&v| matching.in_from[v].is_none()).collect();
    if drivers.is_empty() && n > 0 {
        drivers.push(0);
    }
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = drivers.iter().copied().collect();
    for &d in &drivers {
        seen[d] = true;
    }
    while let Some(u) = queue.pop_front() {
        for v in net.successors(u) {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    let mut is_driver = vec![false; n];
    for &d in &drivers {
        is_driver[d] = true;
    }
    let others = n - drivers.len();
    let reached = (0..n).filter(|&v| !is_driver[v] && seen[v]).count();
    DriverSet {
        n_d: drivers.len(),
        reachable_fraction: if others == 0 { 1.0 } else { reached as f64 / others as f64 },
        drivers,
        matching,
    }
}
