//! Brute-force graph oracles over adjacency lists. Nothing here calls into
//! the library.

pub type Adj = Vec<Vec<usize>>;

pub fn adjacency(n: usize, edges: &[(usize, usize)]) -> Adj {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        if a != b && !adj[a].contains(&b) {
            adj[a].push(b);
        }
    }
    adj
}

/// Reflexive transitive closure, Floyd–Warshall style.
pub fn closure(adj: &Adj) -> Vec<Vec<bool>> {
    let n = adj.len();
    let mut r = vec![vec![false; n]; n];
    for (i, row) in r.iter_mut().enumerate() {
        row[i] = true;
        for &j in &adj[i] {
            row[j] = true;
        }
    }
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                for j in 0..n {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    r
}

/// Labels from an equivalence relation, numbered by smallest member.
pub fn labels_from(n: usize, same: impl Fn(usize, usize) -> bool) -> Vec<usize> {
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for i in 0..n {
        if label[i] == usize::MAX {
            for j in i..n {
                if label[j] == usize::MAX && same(i, j) {
                    label[j] = next;
                }
            }
            next += 1;
        }
    }
    label
}

pub fn scc_labels(adj: &Adj) -> Vec<usize> {
    let r = closure(adj);
    labels_from(adj.len(), |i, j| r[i][j] && r[j][i])
}

pub fn wcc_labels(adj: &Adj) -> Vec<usize> {
    let mut sym = adj.clone();
    for (i, out) in adj.iter().enumerate() {
        for &j in out {
            sym[j].push(i);
        }
    }
    let r = closure(&sym);
    labels_from(adj.len(), |i, j| r[i][j])
}

/// Maximum matching of the split graph by exhaustive search over the head
/// assigned to each tail.
pub fn max_matching(adj: &Adj) -> usize {
    fn go(i: usize, used: u64, adj: &Adj, memo: &mut std::collections::HashMap<(usize, u64), usize>) -> usize {
        if i == adj.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, used)) {
            return v;
        }
        let mut best = go(i + 1, used, adj, memo);
        for &j in &adj[i] {
            if used & (1 << j) == 0 {
                best = best.max(1 + go(i + 1, used | (1 << j), adj, memo));
            }
        }
        memo.insert((i, used), best);
        best
    }
    go(0, 0, adj, &mut std::collections::HashMap::new())
}

pub fn covered_by(adj: &Adj, members: &[usize]) -> Vec<bool> {
    let mut c = vec![false; adj.len()];
    for &m in members {
        c[m] = true;
        for &j in &adj[m] {
            c[j] = true;
        }
    }
    c
}

/// Lightest subset (by summed weight) whose members and out-neighbors
/// satisfy `accept`. Exhaustive over all 2^n subsets.
pub fn lightest_subset(adj: &Adj, weights: &[f64], accept: impl Fn(&[bool]) -> bool) -> Option<f64> {
    let n = adj.len();
    assert!(n <= 20);
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|&v| mask & (1 << v) != 0).collect();
        let w: f64 = members.iter().map(|&v| weights[v]).sum();
        if best.is_some_and(|b| w >= b) {
            continue;
        }
        if accept(&covered_by(adj, &members)) {
            best = Some(w);
        }
    }
    best
}

pub fn min_dominating_weight(adj: &Adj, weights: &[f64]) -> f64 {
    lightest_subset(adj, weights, |c| c.iter().all(|&x| x)).expect("V dominates")
}
