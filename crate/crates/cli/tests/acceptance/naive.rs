//! Straight-line recomputation of report.json from the raw CSV files. Only
//! std and serde_json; no library code. Heuristic outputs (which driver set,
//! which dominating set) are read back from the emitted CSVs and checked
//! against brute-force optima instead of being reproduced.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crate::oracles::{self, Adj};

pub struct Chain {
    pub blocks: Vec<(u64, u64, String)>,
    pub prices: Vec<(String, f64)>,
    pub txs: Vec<(u64, u64, String, String, u128)>,
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    text.lines().skip(1).filter(|l| !l.is_empty()).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

impl Chain {
    pub fn read(dir: &Path) -> Chain {
        Chain {
            blocks: rows(&dir.join("blocks.csv"))
                .into_iter()
                .map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap(), r[2].to_lowercase()))
                .collect(),
            prices: rows(&dir.join("prices.csv")).into_iter().map(|r| (r[0].clone(), r[1].parse().unwrap())).collect(),
            txs: rows(&dir.join("transactions.csv"))
                .into_iter()
                .map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap(), r[2].to_lowercase(), r[3].to_lowercase(), r[4].parse().unwrap()))
                .collect(),
        }
    }
}

/// Proleptic Gregorian date of a day count since 1970-01-01.
fn civil(days: i64) -> String {
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = yoe + era * 400 + if m <= 2 { 1 } else { 0 };
    format!("{y:04}-{m:02}-{d:02}")
}

fn price_on(prices: &[(String, f64)], date: &str) -> f64 {
    let mut sorted: Vec<&(String, f64)> = prices.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut rate = sorted[0].1;
    for (d, p) in sorted {
        if d.as_str() <= date {
            rate = *p;
        }
    }
    rate
}

fn pairwise_gini(xs: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let total: f64 = xs.iter().sum();
    if xs.is_empty() || total <= 0.0 {
        return None;
    }
    let mut diff = 0.0;
    for a in xs {
        for b in xs {
            diff += (a - b).abs();
        }
    }
    Some(diff / (2.0 * n * total))
}

fn lower_median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[(xs.len() - 1) / 2]
}

/// Two-sided Student-t tail by Simpson integration in θ = atan(x), where
/// the density times dx/dθ is `cos^(df−1)·(cos² + sin²/df)^(−(df+1)/2)`.
fn t_two_sided(t: f64, df: f64) -> f64 {
    let g = |th: f64| {
        let (s, c) = th.sin_cos();
        c.powf(df - 1.0) * (c * c + s * s / df).powf(-(df + 1.0) / 2.0)
    };
    let simpson = |a: f64, b: f64| {
        let n = 20_000;
        let h = (b - a) / n as f64;
        let mut acc = g(a) + g(b);
        for i in 1..n {
            acc += g(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    (simpson(t.abs().atan(), half_pi) / simpson(0.0, half_pi)).min(1.0)
}

fn correlation(xs: &[f64], ys: &[f64]) -> Value {
    let n = xs.len();
    if n < 3 {
        return json!({"status": "too_few_points", "n": n});
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx <= 0.0 || syy <= 0.0 {
        return json!({"status": "zero_variance", "n": n});
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if r.abs() >= 1.0 { 0.0 } else { t_two_sided(r * (df / (1.0 - r * r)).sqrt(), df) };
    json!({"status": "defined", "n": n, "r": r, "p_value": p})
}

const ROLES: [&str; 4] = ["sender", "receiver", "mixed", "isolated"];

fn role(d_in: usize, d_out: usize) -> usize {
    match (d_in > 0, d_out > 0) {
        (false, true) => 0,
        (true, false) => 1,
        (true, true) => 2,
        (false, false) => 3,
    }
}

fn role_counts(roles: &[usize]) -> Value {
    let c = |r| roles.iter().filter(|&&x| x == r).count();
    json!({"sender": c(0), "receiver": c(1), "mixed": c(2), "isolated": c(3)})
}

pub struct Settings {
    pub window_days: u64,
    pub restarts: usize,
    pub seed: u64,
    pub theta: f64,
}

/// Problems found while reading back member lists; reported alongside the
/// field comparison.
pub type Problems = Vec<String>;

pub fn report(chain: &Chain, out: &Path, cfg: &Settings, problems: &mut Problems) -> Value {
    let miners: BTreeSet<&str> = chain.blocks.iter().map(|b| b.2.as_str()).collect();
    let ts_of: HashMap<u64, u64> = chain.blocks.iter().map(|b| (b.0, b.1)).collect();
    let mut first_mined: HashMap<&str, u64> = HashMap::new();
    for b in &chain.blocks {
        let e = first_mined.entry(b.2.as_str()).or_insert(b.0);
        *e = (*e).min(b.0);
    }
    let (mut dropped, mut selfs, mut zeros) = (0u64, 0u64, 0u64);
    // (activation, block, index, from, to, usd)
    let mut kept: Vec<(u64, u64, u64, &str, &str, f64)> = Vec::new();
    for (b, i, from, to, wei) in &chain.txs {
        if !miners.contains(from.as_str()) || !miners.contains(to.as_str()) {
            dropped += 1;
        } else if from == to {
            selfs += 1;
        } else {
            zeros += u64::from(*wei == 0);
            let date = civil((ts_of[b] / 86_400) as i64);
            let usd = *wei as f64 / 1e18 * price_on(&chain.prices, &date);
            let act = (*b).max(first_mined[from.as_str()]).max(first_mined[to.as_str()]);
            kept.push((act, *b, *i, from, to, usd));
        }
    }
    kept.sort_by_key(|a| (a.0, a.1, a.2));

    let n_blocks = chain.blocks.len() as u64;
    let span = chain.blocks.last().unwrap().1 - chain.blocks[0].1;
    let window = cfg.window_days * 86_400;
    let mut bounds = vec![chain.blocks.last().unwrap().0];
    if span > 0 && span >= window {
        let bhat = (n_blocks as u128 * window as u128 / span as u128) as u64;
        if bhat < n_blocks {
            let bhat = bhat.max(1);
            let k_max = n_blocks / bhat;
            bounds = (1..=k_max)
                .map(|k| if k == k_max { chain.blocks.last().unwrap().0 } else { chain.blocks[(k * bhat - 1) as usize].0 })
                .collect();
        }
    }

    let slices: Vec<Value> = bounds
        .iter()
        .enumerate()
        .map(|(i, &last)| slice(chain, &kept, i + 1, last, out, cfg, problems))
        .collect();
    json!({
        "schema_version": 1,
        "config": {"window_days": cfg.window_days, "slices": "all", "restarts": cfg.restarts, "seed": cfg.seed, "theta": cfg.theta},
        "input": {
            "blocks": chain.blocks.len(),
            "first_block": chain.blocks[0].0,
            "last_block": chain.blocks.last().unwrap().0,
            "transactions": chain.txs.len(),
            "miner_transactions": kept.len(),
            "dropped_transactions": dropped,
            "self_transactions": selfs,
            "zero_value_transactions": zeros,
            "timestamp_warnings": chain.blocks.windows(2).filter(|w| w[1].1 < w[0].1).count(),
        },
        "slice_count": bounds.len(),
        "slices": slices,
    })
}

fn read_list(path: &Path) -> Vec<String> {
    rows(path).into_iter().map(|r| r[0].clone()).collect()
}

#[allow(clippy::too_many_arguments)]
fn slice(
    chain: &Chain,
    kept: &[(u64, u64, u64, &str, &str, f64)],
    k: usize,
    last: u64,
    out: &Path,
    cfg: &Settings,
    problems: &mut Problems,
) -> Value {
    let dir = out.join("slices").join(format!("k{k:02}"));
    let mut blocks: BTreeMap<&str, u64> = BTreeMap::new();
    for b in chain.blocks.iter().filter(|b| b.0 <= last) {
        *blocks.entry(b.2.as_str()).or_default() += 1;
    }
    let nodes: Vec<&str> = blocks.keys().copied().collect();
    let n = nodes.len();
    let idx: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let total_blocks: u64 = blocks.values().sum();
    let counts: Vec<f64> = nodes.iter().map(|a| blocks[a] as f64).collect();
    let share: Vec<f64> = counts.iter().map(|c| c / total_blocks as f64).collect();

    let mut edge_map: BTreeMap<(usize, usize), (f64, u64)> = BTreeMap::new();
    for t in kept.iter().filter(|t| t.0 <= last) {
        let e = edge_map.entry((idx[t.3], idx[t.4])).or_default();
        e.0 += t.5;
        e.1 += 1;
    }
    let edges: Vec<(usize, usize, f64, u64)> = edge_map.iter().map(|(&(a, b), &(v, c))| (a, b, v, c)).collect();
    let adj: Adj = oracles::adjacency(n, &edges.iter().map(|e| (e.0, e.1)).collect::<Vec<_>>());
    let total_value: f64 = edges.iter().map(|e| e.2).sum();

    let mut top = share.clone();
    top.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut d_in = vec![0; n];
    let mut d_out = vec![0; n];
    let mut w_in = vec![0.0; n];
    let mut w_out = vec![0.0; n];
    for &(a, b, v, _) in &edges {
        d_out[a] += 1;
        d_in[b] += 1;
        w_out[a] += v;
        w_in[b] += v;
    }
    let wdeg: Vec<f64> = (0..n).map(|v| (w_in[v] + w_out[v]) / 2.0).collect();
    let roles: Vec<usize> = (0..n).map(|v| role(d_in[v], d_out[v])).collect();
    let connected = (0..n).filter(|&v| d_in[v] + d_out[v] > 0).count();
    let possible = |m: usize| m as f64 * (m as f64 - 1.0);
    let density = if n < 2 {
        Value::Null
    } else {
        json!({
            "all": edges.len() as f64 / possible(n),
            "connected": if connected >= 2 { json!(edges.len() as f64 / possible(connected)) } else { Value::Null },
            "connected_nodes": connected,
        })
    };

    // Weak components: the largest, then the heaviest, then the one with the
    // smallest node.
    let wcc = oracles::wcc_labels(&adj);
    let n_wcc = wcc.iter().max().map_or(0, |m| m + 1);
    let g = (0..n_wcc).max_by(|&a, &b| {
        let size = |c| wcc.iter().filter(|&&x| x == c).count();
        let weight = |c| (0..n).filter(|&v| wcc[v] == c).map(|v| share[v]).sum::<f64>();
        size(a).cmp(&size(b)).then(weight(a).partial_cmp(&weight(b)).unwrap()).then(b.cmp(&a))
    });
    let in_g: Vec<bool> = (0..n).map(|v| Some(wcc[v]) == g).collect();
    let g_nodes: Vec<usize> = (0..n).filter(|&v| in_g[v]).collect();
    let g_edges: Vec<&(usize, usize, f64, u64)> = edges.iter().filter(|e| in_g[e.0] && in_g[e.1]).collect();
    let scc = oracles::scc_labels(&adj);
    let n_scc = scc.iter().max().map_or(0, |m| m + 1);
    let gwcc = g.map(|_| {
        let mut flows = Vec::new();
        for (fi, from) in ROLES.iter().enumerate() {
            for (ti, to) in ROLES.iter().enumerate() {
                let v: f64 = g_edges.iter().filter(|e| roles[e.0] == fi && roles[e.1] == ti).map(|e| e.2).sum();
                flows.push(json!({"from_role": from, "to_role": to, "value_usd": v}));
            }
        }
        json!({
            "size": g_nodes.len(),
            "edge_count": g_edges.len(),
            "hash_share": g_nodes.iter().map(|&v| share[v]).sum::<f64>(),
            "value_usd": g_edges.iter().map(|e| e.2).sum::<f64>(),
            "component_count": n_wcc,
            "scc_count": (0..n_scc)
                .filter(|&c| {
                    let members: Vec<usize> = (0..n).filter(|&v| scc[v] == c).collect();
                    members.len() >= 2 && in_g[members[0]]
                })
                .count(),
            "roles": role_counts(&g_nodes.iter().map(|&v| roles[v]).collect::<Vec<_>>()),
            "flows": flows,
        })
    });

    let mut comps = Vec::new();
    let mut singletons = 0;
    for c in 0..n_scc {
        let members: Vec<usize> = (0..n).filter(|&v| scc[v] == c).collect();
        if members.len() < 2 {
            singletons += 1;
            continue;
        }
        let hs: f64 = members.iter().map(|&v| share[v]).sum();
        let iv: f64 = edges.iter().filter(|e| scc[e.0] == c && scc[e.1] == c).map(|e| e.2).sum();
        comps.push((c, members.len(), hs, iv));
    }
    let sizes: Vec<f64> = comps.iter().map(|c| c.1 as f64).collect();
    let xs: Vec<f64> = comps.iter().map(|c| c.2).collect();
    let ys: Vec<f64> = comps.iter().map(|c| c.3).collect();
    let scc_json = json!({
        "components": comps.iter().map(|c| json!({"id": c.0, "size": c.1, "hash_share": c.2, "internal_value": c.3})).collect::<Vec<_>>(),
        "singleton_count": singletons,
        "mean_size": if sizes.is_empty() { 0.0 } else { sizes.iter().sum::<f64>() / sizes.len() as f64 },
        "median_size": lower_median(sizes.clone()),
        "largest": comps.iter().map(|c| c.1).max().unwrap_or(0),
        "member_count": comps.iter().map(|c| c.1).sum::<usize>(),
        "hash_share": xs.iter().sum::<f64>(),
        "internal_value": ys.iter().sum::<f64>(),
        "correlation": correlation(&xs, &ys),
    });

    // Hierarchy: rank 1 mined the most blocks, ties by address.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| counts[b].partial_cmp(&counts[a]).unwrap().then(nodes[a].cmp(nodes[b])));
    let mut rank = vec![0usize; n];
    for (r, &v) in order.iter().enumerate() {
        rank[v] = r + 1;
    }
    let against_json = if n <= 1 {
        json!({"count": 0, "value_usd": 0.0, "fraction": 0.0, "mean_climb_pct": null})
    } else {
        let pct = |v: usize| 1.0 - (rank[v] as f64 - 1.0) / (n as f64 - 1.0);
        let against: Vec<&(usize, usize, f64, u64)> = edges.iter().filter(|e| counts[e.1] > counts[e.0]).collect();
        let value: f64 = against.iter().map(|e| e.2).sum();
        let climbs: Vec<f64> = against.iter().map(|e| (pct(e.1) - pct(e.0)) * 100.0).collect();
        json!({
            "count": against.len(),
            "value_usd": value,
            "fraction": if total_value > 0.0 { value / total_value } else { 0.0 },
            "mean_climb_pct": if climbs.is_empty() { Value::Null } else { json!(climbs.iter().sum::<f64>() / climbs.len() as f64) },
        })
    };

    // Control sets on the GWCC, in local ids.
    let local: HashMap<&str, usize> = g_nodes.iter().enumerate().map(|(i, &v)| (nodes[v], i)).collect();
    let gn = g_nodes.len();
    let g_adj: Adj = oracles::adjacency(gn, &g_edges.iter().map(|e| (local[nodes[e.0]], local[nodes[e.1]])).collect::<Vec<_>>());
    let g_share: Vec<f64> = g_nodes.iter().map(|&v| share[v]).collect();
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let lookup = |list: Vec<String>, map: &HashMap<&str, usize>, what: &str, problems: &mut Problems| -> Vec<usize> {
        list.iter()
            .filter_map(|a| {
                let id = map.get(a.as_str()).copied();
                if id.is_none() {
                    problems.push(format!("k{k}: {what} lists {a}, not in scope"));
                }
                id
            })
            .collect()
    };

    let best_matching = oracles::max_matching(&g_adj);
    let n_d = if gn == 0 { 0 } else { (gn - best_matching).max(1) };
    let pairs: Vec<(usize, usize)> = rows(&dir.join("matching.csv"))
        .into_iter()
        .filter_map(|r| Some((*local.get(r[0].as_str())?, *local.get(r[1].as_str())?)))
        .collect();
    let tails: BTreeSet<usize> = pairs.iter().map(|p| p.0).collect();
    let heads: BTreeSet<usize> = pairs.iter().map(|p| p.1).collect();
    if tails.len() != pairs.len() || heads.len() != pairs.len() || pairs.iter().any(|&(a, b)| !g_adj[a].contains(&b)) {
        problems.push(format!("k{k}: emitted matching is not a matching of the GWCC"));
    }
    let drivers = lookup(read_list(&dir.join("drivers.csv")), &local, "drivers.csv", problems);
    let mut expected: Vec<usize> = (0..gn).filter(|v| !heads.contains(v)).collect();
    if expected.is_empty() && gn > 0 {
        expected.push(0);
    }
    let mut sorted_drivers = drivers.clone();
    sorted_drivers.sort_unstable();
    if sorted_drivers != expected {
        problems.push(format!("k{k}: drivers.csv is not the unmatched set of matching.csv"));
    }
    let mut seen = vec![false; gn];
    let mut queue: VecDeque<usize> = drivers.iter().copied().collect();
    for &d in &drivers {
        seen[d] = true;
    }
    while let Some(u) = queue.pop_front() {
        for &v in &g_adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    let non_drivers = gn - drivers.len();
    let reached = (0..gn).filter(|v| !drivers.contains(v) && seen[*v]).count();

    let dominating = lookup(read_list(&dir.join("dominating.csv")), &local, "dominating.csv", problems);
    if !oracles::covered_by(&g_adj, &dominating).iter().all(|&c| c) {
        problems.push(format!("k{k}: dominating.csv does not dominate the GWCC"));
    }
    let dom_opt = if gn == 0 { 0.0 } else { oracles::min_dominating_weight(&g_adj, &g_share) };

    let all_idx: HashMap<&str, usize> = idx.clone();
    let threshold = lookup(read_list(&dir.join("threshold.csv")), &all_idx, "threshold.csv", problems);
    let total_share: f64 = share.iter().sum();
    let target = cfg.theta * total_share - 1e-12 * total_share.max(1.0);
    let covered_weight = |c: &[bool]| (0..n).filter(|&v| c[v]).map(|v| share[v]).sum::<f64>();
    let thr_cov = covered_weight(&oracles::covered_by(&adj, &threshold));
    if thr_cov < target {
        problems.push(format!("k{k}: threshold.csv covers {thr_cov}, below theta"));
    }
    let thr_opt = oracles::lightest_subset(&adj, &share, |c| covered_weight(c) >= target).unwrap_or(f64::NAN);

    json!({
        "k": k,
        "last_block": last,
        "n_miners": n,
        "n_edges": edges.len(),
        "n_transactions": edges.iter().map(|e| e.3).sum::<u64>(),
        "total_value_usd": total_value,
        "gini": pairwise_gini(&counts),
        "hhi": share.iter().map(|s| (100.0 * s).powi(2)).sum::<f64>(),
        "top10_share": top.iter().take(10).sum::<f64>(),
        "density": density,
        "degree": {"mean": if n == 0 { 0.0 } else { wdeg.iter().sum::<f64>() / n as f64 }, "median": lower_median(wdeg.clone())},
        "edge_value_gini": pairwise_gini(&edges.iter().map(|e| e.2).collect::<Vec<_>>()),
        "roles": role_counts(&roles),
        "gwcc": gwcc,
        "scc": scc_json,
        "against": against_json,
        "drivers": {
            "scope": "gwcc",
            "n_d": n_d,
            "fraction": frac(n_d, gn),
            "hash_share": drivers.iter().map(|&v| g_share[v]).sum::<f64>(),
            "matching_size": best_matching,
            "reachable_fraction": if non_drivers == 0 { 1.0 } else { reached as f64 / non_drivers as f64 },
        },
        "dominating": {
            "scope": "gwcc",
            "method": if gn <= 20 { "exact" } else { "greedy" },
            "size": dominating.len(),
            "fraction": frac(dominating.len(), gn),
            "hash_share": dom_opt,
            "covered_hash_share": g_share.iter().sum::<f64>(),
        },
        "threshold": {
            "scope": "all",
            "method": if n <= 20 { "exact" } else { "greedy" },
            "theta": cfg.theta,
            "size": threshold.len(),
            "hash_share": thr_opt,
            "covered": thr_cov,
        },
    })
}

/// Field-by-field comparison: identical key sets, equal strings and
/// integers, floats within `rel` relative difference.
pub fn compare(path: &str, got: &Value, want: &Value, rel: f64, out: &mut Vec<String>) {
    match (got, want) {
        (Value::Object(a), Value::Object(b)) => {
            let ka: BTreeSet<&String> = a.keys().collect();
            let kb: BTreeSet<&String> = b.keys().collect();
            for key in ka.symmetric_difference(&kb) {
                out.push(format!("{path}.{key}: present on one side only"));
            }
            for key in ka.intersection(&kb) {
                compare(&format!("{path}.{key}"), &a[*key], &b[*key], rel, out);
            }
        }
        (Value::Array(a), Value::Array(b)) => {
            if a.len() != b.len() {
                out.push(format!("{path}: length {} vs {}", a.len(), b.len()));
            }
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                compare(&format!("{path}[{i}]"), x, y, rel, out);
            }
        }
        (Value::Number(x), Value::Number(y)) => {
            let (fx, fy) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            let ok = if x.is_f64() || y.is_f64() {
                fx == fy || (fx - fy).abs() <= rel * fx.abs().max(fy.abs())
            } else {
                x == y
            };
            if !ok {
                out.push(format!("{path}: {x} vs {y}"));
            }
        }
        _ if got == want => {}
        _ => out.push(format!("{path}: {got} vs {want}")),
    }
}
