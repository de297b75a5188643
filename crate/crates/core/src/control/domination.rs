use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use super::ControlError;
use crate::netbuild::MinerNetwork;
use crate::seeds::{rng_for, Stream};
use crate::sum::sum;

/// Added to a node's own weight in the greedy ratio so zero-hash nodes do not
/// divide by zero.
pub const DOMINATION_EPSILON: f64 = 1e-12;

/// Largest network accepted by [`exact_min_weight_dominating_set`].
pub const EXACT_MAX_NODES: usize = 20;

/// A node dominates itself and every node it has sent a transaction to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominatingSet {
    /// Node ids, sorted.
    pub members: Vec<usize>,
    pub total_hash_share: f64,
    /// Weight of the nodes that are members or out-neighbors of members.
    pub covered_hash_share: f64,
    /// Whether every node is covered.
    pub coverage_complete: bool,
}

impl DominatingSet {
    fn from_members(net: &MinerNetwork, weights: &[f64], mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        let covered = covered_mask(net, &members);
        DominatingSet {
            total_hash_share: sum(members.iter().map(|&v| weights[v])),
            covered_hash_share: sum((0..net.node_count()).filter(|&v| covered[v]).map(|v| weights[v])),
            coverage_complete: covered.iter().all(|&c| c),
            members,
        }
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    fn better_than(&self, other: &DominatingSet) -> bool {
        match self.total_hash_share.total_cmp(&other.total_hash_share) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => self.members < other.members,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{} node(s) not dominated, first {}", uncovered.len(), uncovered[0])]
pub struct CoverageError {
    pub uncovered: Vec<usize>,
}

/// Coverage by a single scan of the edge list; shares no state with the
/// search routines.
fn covered_mask(net: &MinerNetwork, members: &[usize]) -> Vec<bool> {
    let mut is_member = vec![false; net.node_count()];
    for &m in members {
        is_member[m] = true;
    }
    let mut covered = is_member.clone();
    for e in net.edges() {
        if is_member[e.from] {
            covered[e.to] = true;
        }
    }
    covered
}

/// Checks that every node is a member or has an in-edge from a member.
pub fn verify_domination(net: &MinerNetwork, members: &[usize]) -> Result<(), CoverageError> {
    if let Some(&bad) = members.iter().find(|&&m| m >= net.node_count()) {
        return Err(CoverageError { uncovered: vec![bad] });
    }
    let covered = covered_mask(net, members);
    let uncovered: Vec<usize> = (0..net.node_count()).filter(|&v| !covered[v]).collect();
    if uncovered.is_empty() {
        Ok(())
    } else {
        Err(CoverageError { uncovered })
    }
}

/// Checks that members cover at least `theta` of the total weight.
pub fn verify_threshold(net: &MinerNetwork, weights: &[f64], members: &[usize], theta: f64) -> bool {
    if members.iter().any(|&m| m >= net.node_count()) {
        return false;
    }
    let covered = covered_mask(net, members);
    let total = sum(weights.iter().copied());
    let got = sum((0..net.node_count()).filter(|&v| covered[v]).map(|v| weights[v]));
    got >= theta * total - threshold_tolerance(total)
}

fn threshold_tolerance(total: f64) -> f64 {
    1e-12 * total.max(1.0)
}

fn check_weights(net: &MinerNetwork, weights: &[f64]) -> Result<(), ControlError> {
    if weights.len() != net.node_count() {
        return Err(ControlError::WeightMismatch { expected: net.node_count(), found: weights.len() });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    ratio: f64,
    gain: f64,
    priority: u64,
    node: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // Max-heap: highest ratio first, then lowest priority value.
    fn cmp(&self, other: &Self) -> Ordering {
        self.ratio.total_cmp(&other.ratio).then(other.priority.cmp(&self.priority))
    }
}

/// Greedy state shared by full and threshold domination.
#[derive(Clone)]
struct Greedy<'a> {
    net: &'a MinerNetwork,
    weights: &'a [f64],
    member: Vec<bool>,
    covered: Vec<bool>,
    /// Number of members dominating each node.
    cover_count: Vec<u32>,
    uncovered: usize,
    covered_weight: f64,
}

impl<'a> Greedy<'a> {
    fn new(net: &'a MinerNetwork, weights: &'a [f64]) -> Self {
        let n = net.node_count();
        Greedy {
            net,
            weights,
            member: vec![false; n],
            covered: vec![false; n],
            cover_count: vec![0; n],
            uncovered: n,
            covered_weight: 0.0,
        }
    }

    fn closed_out(&self, v: usize) -> impl Iterator<Item = usize> + 'a {
        std::iter::once(v).chain(self.net.successors(v))
    }

    fn add(&mut self, v: usize) {
        debug_assert!(!self.member[v]);
        self.member[v] = true;
        for u in self.closed_out(v) {
            self.cover_count[u] += 1;
            if !self.covered[u] {
                self.covered[u] = true;
                self.uncovered -= 1;
                self.covered_weight += self.weights[u];
            }
        }
    }

    fn remove(&mut self, v: usize) {
        self.member[v] = false;
        for u in self.closed_out(v) {
            self.cover_count[u] -= 1;
            if self.cover_count[u] == 0 {
                self.covered[u] = false;
                self.uncovered += 1;
                self.covered_weight -= self.weights[u];
            }
        }
    }

    /// Newly covered node count (`by_weight == false`) or weight.
    fn gain(&self, v: usize, by_weight: bool) -> f64 {
        let fresh = self.closed_out(v).filter(|&u| !self.covered[u]);
        if by_weight {
            sum(fresh.map(|u| self.weights[u]))
        } else {
            fresh.count() as f64
        }
    }

    /// Weight lost if `v` left the set.
    fn exclusive_weight(&self, v: usize) -> f64 {
        sum(self.closed_out(v).filter(|&u| self.cover_count[u] == 1).map(|u| self.weights[u]))
    }

    fn removable_for_full(&self, v: usize) -> bool {
        self.closed_out(v).all(|u| self.cover_count[u] >= 2)
    }

    /// Lazy greedy: pops the best ratio, re-evaluates, and accepts when the
    /// gain is unchanged (gains never increase as coverage grows).
    /// `observe` sees the state before every step.
    fn run(
        &mut self,
        priorities: &[u64],
        by_weight: bool,
        mut done: impl FnMut(&Self) -> bool,
        mut observe: impl FnMut(&Self),
    ) {
        let mut heap = BinaryHeap::new();
        for v in 0..self.net.node_count() {
            if self.member[v] {
                continue;
            }
            let gain = self.gain(v, by_weight);
            if gain > 0.0 {
                heap.push(Candidate { ratio: gain / (self.weights[v] + DOMINATION_EPSILON), gain, priority: priorities[v], node: v });
            }
        }
        while !done(self) {
            observe(self);
            let Some(top) = heap.pop() else { break };
            if self.member[top.node] {
                continue;
            }
            let gain = self.gain(top.node, by_weight);
            if gain <= 0.0 {
                continue;
            }
            if gain < top.gain {
                heap.push(Candidate {
                    ratio: gain / (self.weights[top.node] + DOMINATION_EPSILON),
                    gain,
                    ..top
                });
                continue;
            }
            self.add(top.node);
        }
    }

    fn members(&self) -> Vec<usize> {
        (0..self.member.len()).filter(|&v| self.member[v]).collect()
    }

    /// Members ordered heaviest first, ties by higher tie-break priority.
    fn prune_order(&self, priorities: &[u64]) -> Vec<usize> {
        let mut order = self.members();
        order.sort_by(|&a, &b| self.weights[b].total_cmp(&self.weights[a]).then(priorities[b].cmp(&priorities[a])));
        order
    }
}

/// Tie-break priorities for one restart. Restart 0 uses node order;
/// later restarts use a random permutation.
fn restart_priorities<R: Rng>(n: usize, restart: usize, rng: &mut R) -> Vec<u64> {
    let mut p: Vec<u64> = (0..n as u64).collect();
    if restart > 0 {
        p.shuffle(rng);
    }
    p
}

/// Seeded multi-start greedy for a minimum-weight dominating set.
///
/// Nodes without in-edges can only dominate themselves and are added
/// first. Each run then repeatedly adds the node with the best
/// newly-dominated-count / (own weight + ε) ratio and finally drops members
/// that became redundant, heaviest first. Restarts after the first use
/// random tie-breaks and begin from a random node. The lightest result wins
/// (ties: lexicographically smallest member list); it is checked by
/// [`verify_domination`] before being returned.
pub fn greedy_min_weight_dominating_set(
    net: &MinerNetwork,
    weights: &[f64],
    restarts: usize,
    seed: u64,
) -> Result<DominatingSet, ControlError> {
    check_weights(net, weights)?;
    let n = net.node_count();
    let mut best: Option<DominatingSet> = None;
    for restart in 0..restarts.max(1) {
        let mut rng = rng_for(seed, Stream::Domination(restart as u64));
        let priorities = restart_priorities(n, restart, &mut rng);
        let mut g = Greedy::new(net, weights);
        for v in 0..n {
            if net.in_degree(v) == 0 {
                g.add(v);
            }
        }
        if restart > 0 && g.uncovered > 0 {
            let open: Vec<usize> = (0..n).filter(|&v| !g.member[v]).collect();
            if let Some(&start) = open.choose(&mut rng) {
                g.add(start);
            }
        }
        g.run(&priorities, false, |s| s.uncovered == 0, |_| {});
        for v in g.prune_order(&priorities) {
            if net.in_degree(v) > 0 && g.removable_for_full(v) {
                g.remove(v);
            }
        }
        let result = DominatingSet::from_members(net, weights, g.members());
        if best.as_ref().is_none_or(|b| result.better_than(b)) {
            best = Some(result);
        }
    }
    let best = best.expect("at least one restart");
    verify_domination(net, &best.members).expect("greedy result dominates every node");
    Ok(best)
}

/// Seeded multi-start greedy for the lightest set whose members and their
/// out-neighbors carry at least `theta` of the network's total weight.
pub fn threshold_domination(
    net: &MinerNetwork,
    weights: &[f64],
    theta: f64,
    restarts: usize,
    seed: u64,
) -> Result<DominatingSet, ControlError> {
    check_weights(net, weights)?;
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(ControlError::InvalidTheta(theta));
    }
    let n = net.node_count();
    let total = sum(weights.iter().copied());
    let target = theta * total - threshold_tolerance(total);
    // Completion candidates: before each greedy step, the lightest single
    // node that reaches the target on its own. Ratio-greedy alone tends to
    // overshoot with its last pick.
    let mut lightest: Vec<usize> = (0..n).collect();
    lightest.sort_by(|&a, &b| weights[a].total_cmp(&weights[b]).then(a.cmp(&b)));
    let reach: Vec<f64> = (0..n).map(|v| weights[v] + sum(net.successors(v).map(|u| weights[u]))).collect();
    let mut best: Option<DominatingSet> = None;
    for restart in 0..restarts.max(1) {
        let mut rng = rng_for(seed, Stream::Threshold(restart as u64));
        let priorities = restart_priorities(n, restart, &mut rng);
        let mut g = Greedy::new(net, weights);
        if restart > 0 && n > 0 {
            g.add(rng.gen_range(0..n));
        }
        let mut completions = Vec::new();
        let bound = best.as_ref().map_or(f64::INFINITY, |b| b.total_hash_share);
        g.run(&priorities, true, |s| s.covered_weight >= target, |s| {
            let held = sum(s.members().into_iter().map(|v| weights[v]));
            let need = target - s.covered_weight;
            let limit = completions.iter().map(|c: &(f64, usize)| c.0).fold(bound, f64::min) - held;
            let found = lightest
                .iter()
                .take_while(|&&v| weights[v] < limit)
                .find(|&&v| !s.member[v] && reach[v] >= need && s.gain(v, true) >= need);
            if let Some(&v) = found {
                let mut done = s.clone();
                done.add(v);
                completions.push((held + weights[v], v));
                let result = prune_threshold(done, &priorities, target);
                completions.last_mut().expect("just pushed").0 = result.total_hash_share;
                if best.as_ref().is_none_or(|b| result.better_than(b)) {
                    best = Some(result);
                }
            }
        });
        let result = prune_threshold(g, &priorities, target);
        if result.covered_hash_share >= target && best.as_ref().is_none_or(|b| result.better_than(b)) {
            best = Some(result);
        }
    }
    let best = best.unwrap_or_else(|| DominatingSet::from_members(net, weights, (0..n).collect()));
    debug_assert!(verify_threshold(net, weights, &best.members, theta));
    Ok(best)
}

fn prune_threshold(mut g: Greedy<'_>, priorities: &[u64], target: f64) -> DominatingSet {
    for v in g.prune_order(priorities) {
        if g.covered_weight - g.exclusive_weight(v) >= target {
            g.remove(v);
        }
    }
    DominatingSet::from_members(g.net, g.weights, g.members())
}

/// Exhaustive minimum-weight dominating set for networks of at most
/// [`EXACT_MAX_NODES`] nodes. Branch and bound over nodes in id order, with
/// forced members and a prune as soon as a node can no longer be dominated.
pub fn exact_min_weight_dominating_set(net: &MinerNetwork, weights: &[f64]) -> Result<DominatingSet, ControlError> {
    check_weights(net, weights)?;
    let n = net.node_count();
    if n > EXACT_MAX_NODES {
        return Err(ControlError::TooLarge { n, max: EXACT_MAX_NODES });
    }
    // coverers[j]: nodes that dominate j.
    let mut coverers = vec![0u32; n];
    for (j, c) in coverers.iter_mut().enumerate() {
        *c = 1 << j;
    }
    for e in net.edges() {
        coverers[e.to] |= 1 << e.from;
    }
    // due[i]: nodes whose last possible coverer is i.
    let mut due = vec![0u32; n];
    for (j, &c) in coverers.iter().enumerate() {
        let last = 31 - c.leading_zeros() as usize;
        due[last] |= 1 << j;
    }
    let forced: u32 = (0..n).filter(|&v| net.in_degree(v) == 0).fold(0, |m, v| m | (1 << v));

    struct Search<'s> {
        n: usize,
        weights: &'s [f64],
        coverers: &'s [u32],
        due: &'s [u32],
        forced: u32,
        best: Option<(f64, Vec<usize>)>,
    }

    impl Search<'_> {
        fn go(&mut self, i: usize, chosen: u32, weight: f64) {
            if let Some((bw, _)) = &self.best {
                if weight > *bw {
                    return;
                }
            }
            if i == self.n {
                let members: Vec<usize> = (0..self.n).filter(|&v| chosen & (1 << v) != 0).collect();
                let better = match &self.best {
                    None => true,
                    Some((bw, bm)) => weight < *bw || (weight == *bw && members < *bm),
                };
                if better {
                    self.best = Some((weight, members));
                }
                return;
            }
            let bit = 1u32 << i;
            let feasible = |chosen: u32| {
                let mut due = self.due[i];
                while due != 0 {
                    let j = due.trailing_zeros() as usize;
                    due &= due - 1;
                    if self.coverers[j] & chosen == 0 {
                        return false;
                    }
                }
                true
            };
            let with = chosen | bit;
            if feasible(with) {
                self.go(i + 1, with, weight + self.weights[i]);
            }
            if self.forced & bit == 0 && feasible(chosen) {
                self.go(i + 1, chosen, weight);
            }
        }
    }

    let mut search = Search { n, weights, coverers: &coverers, due: &due, forced, best: None };
    search.go(0, 0, 0.0);
    let (_, members) = search.best.expect("the full node set dominates");
    Ok(DominatingSet::from_members(net, weights, members))
}

/// Exhaustive lightest threshold set for networks of at most
/// [`EXACT_MAX_NODES`] nodes. Enumerates every subset; ties go to the
/// lexicographically smallest member list.
pub fn exact_threshold_domination(net: &MinerNetwork, weights: &[f64], theta: f64) -> Result<DominatingSet, ControlError> {
    check_weights(net, weights)?;
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(ControlError::InvalidTheta(theta));
    }
    let n = net.node_count();
    if n > EXACT_MAX_NODES {
        return Err(ControlError::TooLarge { n, max: EXACT_MAX_NODES });
    }
    let total = sum(weights.iter().copied());
    let target = theta * total - threshold_tolerance(total);
    let mut reach = vec![0u32; n];
    for (v, r) in reach.iter_mut().enumerate() {
        *r = 1 << v;
    }
    for e in net.edges() {
        reach[e.from] |= 1 << e.to;
    }
    let size = 1usize << n;
    let mut weight = vec![0.0f64; size];
    let mut cover = vec![0u32; size];
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 1..size {
        let low = mask.trailing_zeros() as usize;
        let rest = mask & (mask - 1);
        weight[mask] = weight[rest] + weights[low];
        cover[mask] = cover[rest] | reach[low];
        // The running sums are plain; the slack keeps ties for the exact recheck.
        if best.as_ref().is_some_and(|(bw, _)| weight[mask] > *bw + 1e-12) {
            continue;
        }
        let covered = cover[mask];
        let got = sum((0..n).filter(|&v| covered & (1 << v) != 0).map(|v| weights[v]));
        if got < target {
            continue;
        }
        let members: Vec<usize> = (0..n).filter(|&v| mask & (1 << v) != 0).collect();
        let held = sum(members.iter().map(|&v| weights[v]));
        let better = match &best {
            None => true,
            Some((bw, bm)) => held < *bw || (held == *bw && members < *bm),
        };
        if better {
            best = Some((held, members));
        }
    }
    let members = best.map(|(_, m)| m).unwrap_or_default();
    Ok(DominatingSet::from_members(net, weights, members))
}
