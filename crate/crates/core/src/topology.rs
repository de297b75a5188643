//! Weak and strong component structure, role-based flows between the parts of
//! the great weakly connected component, and SCC statistics.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::concentration::{lower_median, Role};
use crate::netbuild::MinerNetwork;
use crate::sum::{sum, NeumaierSum};

/// Component label per node, with dense ids starting at 0.
///
/// Ids are assigned in increasing order of each component's smallest node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub ids: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl Partition {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    pub fn members(&self, id: usize) -> Vec<usize> {
        self.ids.iter().enumerate().filter(|(_, &c)| c == id).map(|(v, _)| v).collect()
    }

    fn from_labels(labels: &[usize]) -> Self {
        let mut remap = vec![usize::MAX; labels.len()];
        let mut ids = Vec::with_capacity(labels.len());
        let mut sizes = Vec::new();
        for &l in labels {
            if remap[l] == usize::MAX {
                remap[l] = sizes.len();
                sizes.push(0);
            }
            ids.push(remap[l]);
            sizes[remap[l]] += 1;
        }
        Partition { ids, sizes }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakComponents {
    pub partition: Partition,
    /// The great weakly connected component; `None` for an empty network.
    pub gwcc: Option<usize>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Components of the underlying undirected graph. The GWCC is the largest by
/// node count, ties broken by total weight, then lowest id.
pub fn weakly_connected_components(net: &MinerNetwork, weights: &[f64]) -> WeakComponents {
    let n = net.node_count();
    assert_eq!(weights.len(), n);
    let mut parent: Vec<usize> = (0..n).collect();
    for e in net.edges() {
        let (a, b) = (find(&mut parent, e.from), find(&mut parent, e.to));
        if a != b {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            parent[hi] = lo;
        }
    }
    let roots: Vec<usize> = (0..n).map(|v| find(&mut parent, v)).collect();
    let partition = Partition::from_labels(&roots);
    let mut weight = vec![NeumaierSum::new(); partition.count()];
    for (v, &c) in partition.ids.iter().enumerate() {
        weight[c].add(weights[v]);
    }
    let gwcc = (0..partition.count()).min_by(|&a, &b| {
        partition.sizes[b]
            .cmp(&partition.sizes[a])
            .then(weight[b].value().total_cmp(&weight[a].value()))
            .then(a.cmp(&b))
    });
    WeakComponents { partition, gwcc }
}

/// Strongly connected components by an iterative Tarjan traversal.
/// Singletons are included.
pub fn strongly_connected_components(net: &MinerNetwork) -> Partition {
    const UNSEEN: usize = usize::MAX;
    let n = net.node_count();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut calls: Vec<(usize, usize)> = Vec::new();
    let mut label = vec![0usize; n];
    let mut next_index = 0;
    let mut n_comp = 0;

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        calls.push((root, 0));

        while let Some(top) = calls.last_mut() {
            let v = top.0;
            let out = net.out_edges(v);
            if top.1 < out.len() {
                let w = out[top.1].to;
                top.1 += 1;
                if index[w] == UNSEEN {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    calls.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            calls.pop();
            if low[v] == index[v] {
                loop {
                    let w = stack.pop().expect("tarjan stack holds v");
                    on_stack[w] = false;
                    label[w] = n_comp;
                    if w == v {
                        break;
                    }
                }
                n_comp += 1;
            }
            if let Some(&(parent, _)) = calls.last() {
                low[parent] = low[parent].min(low[v]);
            }
        }
    }
    Partition::from_labels(&label)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComponentSummary {
    pub id: usize,
    pub size: usize,
    pub hash_share: f64,
    /// Value of edges with both endpoints inside the component.
    pub internal_value: f64,
}

pub fn summarize(net: &MinerNetwork, partition: &Partition, weights: &[f64]) -> Vec<ComponentSummary> {
    let k = partition.count();
    let mut hash = vec![NeumaierSum::new(); k];
    let mut value = vec![NeumaierSum::new(); k];
    for (v, &c) in partition.ids.iter().enumerate() {
        hash[c].add(weights[v]);
    }
    for e in net.edges() {
        let c = partition.ids[e.from];
        if c == partition.ids[e.to] {
            value[c].add(e.attr.value_usd);
        }
    }
    (0..k)
        .map(|id| ComponentSummary {
            id,
            size: partition.sizes[id],
            hash_share: hash[id].value(),
            internal_value: value[id].value(),
        })
        .collect()
}

/// Node → weak component, strong component and role.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMap {
    pub wcc: Partition,
    pub scc: Partition,
    pub roles: Vec<Role>,
    pub gwcc: Option<usize>,
    pub wcc_summary: Vec<ComponentSummary>,
    pub scc_summary: Vec<ComponentSummary>,
}

impl ComponentMap {
    /// Roles are those of the full network. Restricting to a weak component
    /// keeps every incident edge, so they equal the roles within the GWCC.
    pub fn compute(net: &MinerNetwork, weights: &[f64]) -> Self {
        let weak = weakly_connected_components(net, weights);
        let scc = strongly_connected_components(net);
        ComponentMap {
            wcc_summary: summarize(net, &weak.partition, weights),
            scc_summary: summarize(net, &scc, weights),
            roles: crate::concentration::classify_roles(net),
            wcc: weak.partition,
            scc,
            gwcc: weak.gwcc,
        }
    }

    pub fn gwcc_mask(&self) -> Vec<bool> {
        match self.gwcc {
            Some(g) => self.wcc.ids.iter().map(|&c| c == g).collect(),
            None => Vec::new(),
        }
    }
}

/// Value sent between role classes, indexed `[from][to]` by [`Role::index`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FlowMatrix {
    pub cells: [[f64; 4]; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowCell {
    pub from_role: Role,
    pub to_role: Role,
    pub value_usd: f64,
}

impl FlowMatrix {
    pub fn get(&self, from: Role, to: Role) -> f64 {
        self.cells[from.index()][to.index()]
    }

    pub fn total(&self) -> f64 {
        sum(self.cells.iter().flatten().copied())
    }

    /// All 16 cells in role order.
    pub fn cells(&self) -> Vec<FlowCell> {
        Role::ALL
            .into_iter()
            .flat_map(|from| Role::ALL.into_iter().map(move |to| (from, to)))
            .map(|(from_role, to_role)| FlowCell { from_role, to_role, value_usd: self.get(from_role, to_role) })
            .collect()
    }
}

impl Serialize for FlowMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.cells().serialize(serializer)
    }
}

/// Sums edge values by `(role(from), role(to))` over edges inside `keep`.
pub fn component_flows(net: &MinerNetwork, roles: &[Role], keep: &[bool]) -> FlowMatrix {
    let mut acc = [[NeumaierSum::new(); 4]; 4];
    for e in net.edges() {
        if keep[e.from] && keep[e.to] {
            acc[roles[e.from].index()][roles[e.to].index()].add(e.attr.value_usd);
        }
    }
    let mut m = FlowMatrix::default();
    for (i, row) in acc.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            m.cells[i][j] = cell.value();
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Correlation {
    Defined { n: usize, r: f64, p_value: f64 },
    TooFewPoints { n: usize },
    ZeroVariance { n: usize },
}

/// Pearson correlation with a two-sided p-value from Student's t with
/// `n − 2` degrees of freedom, `t = r·sqrt((n−2)/(1−r²))`.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Correlation {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 3 {
        return Correlation::TooFewPoints { n };
    }
    let mx = sum(xs.iter().copied()) / n as f64;
    let my = sum(ys.iter().copied()) / n as f64;
    let (mut sxy, mut sxx, mut syy) = (NeumaierSum::new(), NeumaierSum::new(), NeumaierSum::new());
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy.add(dx * dy);
        sxx.add(dx * dx);
        syy.add(dy * dy);
    }
    if sxx.value() <= 0.0 || syy.value() <= 0.0 {
        return Correlation::ZeroVariance { n };
    }
    let r = (sxy.value() / (sxx.value() * syy.value()).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p_value = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
        (2.0 * dist.sf(t.abs())).min(1.0)
    };
    Correlation::Defined { n, r, p_value }
}

/// Statistics over strongly connected components of size two or more.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SccReport {
    pub components: Vec<ComponentSummary>,
    pub singleton_count: usize,
    pub mean_size: f64,
    pub median_size: f64,
    pub largest: usize,
    pub member_count: usize,
    pub hash_share: f64,
    pub internal_value: f64,
    /// Correlation between SCC hash share and internal value.
    pub correlation: Correlation,
}

pub fn scc_stats(net: &MinerNetwork, sccs: &Partition, weights: &[f64]) -> SccReport {
    let all = summarize(net, sccs, weights);
    let singleton_count = all.iter().filter(|c| c.size < 2).count();
    let components: Vec<ComponentSummary> = all.into_iter().filter(|c| c.size >= 2).collect();
    let mut sizes: Vec<f64> = components.iter().map(|c| c.size as f64).collect();
    sizes.sort_by(f64::total_cmp);
    let xs: Vec<f64> = components.iter().map(|c| c.hash_share).collect();
    let ys: Vec<f64> = components.iter().map(|c| c.internal_value).collect();
    SccReport {
        singleton_count,
        mean_size: if sizes.is_empty() { 0.0 } else { sum(sizes.iter().copied()) / sizes.len() as f64 },
        median_size: lower_median(&sizes),
        largest: components.iter().map(|c| c.size).max().unwrap_or(0),
        member_count: components.iter().map(|c| c.size).sum(),
        hash_share: sum(xs.iter().copied()),
        internal_value: sum(ys.iter().copied()),
        correlation: pearson(&xs, &ys),
        components,
    }
}
