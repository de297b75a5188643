//! Seeded synthetic chains with known ground truth.
//!
//! A chain has mining pools, their members, and solo miners. Pools pay their
//! members at the end of every payout period; planted coalitions send each
//! other transfers in every direction. Transfers that touch a non-miner and
//! self-transfers are added as noise that the miner filter must drop. The
//! [`GroundTruth`] records every planted miner-to-miner relationship.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::address::Address;
use crate::concentration::Role;
use crate::ingest::{self, utc_date, BlockRecord, PricePoint, TxRecord};
use crate::netbuild::SECONDS_PER_DAY;
use crate::seeds::{rng_for, Stream};

/// Idealized block reward used to size pool payouts.
pub const BLOCK_REWARD_WEI: u128 = 3_000_000_000_000_000_000;
const MIN_PRICE_USD: f64 = 0.01;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("i/o error writing {path}: {source}")]
    Io { path: String, source: io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinerRef {
    Pool(usize),
    Member { pool: usize, index: usize },
    Solo(usize),
}

/// Miners that transfer to each other every `period_days`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coalition {
    pub members: Vec<MinerRef>,
    pub period_days: u64,
    pub transfer_wei: u128,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceWalk {
    pub start_usd: f64,
    pub daily_drift: f64,
    pub daily_vol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_pools: usize,
    pub members_per_pool: usize,
    pub n_solo_miners: usize,
    pub n_days: u64,
    pub blocks_per_day: u64,
    pub payout_period_days: u64,
    /// Relative hash weight of each pool; empty means 10.0 each.
    pub pool_hash_weights: Vec<f64>,
    pub member_hash_weight: f64,
    pub solo_hash_weight: f64,
    pub planted_coalitions: Vec<Coalition>,
    pub price_walk: PriceWalk,
    /// Transfers per day with at least one non-miner endpoint.
    pub external_txs_per_day: u64,
    /// Miner self-transfers per day.
    pub self_txs_per_day: u64,
    pub genesis_timestamp: u64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_pools: 1,
            members_per_pool: 3,
            n_solo_miners: 0,
            n_days: 30,
            blocks_per_day: 50,
            payout_period_days: 30,
            pool_hash_weights: Vec::new(),
            member_hash_weight: 0.05,
            solo_hash_weight: 0.5,
            planted_coalitions: Vec::new(),
            price_walk: PriceWalk { start_usd: 200.0, daily_drift: 0.0, daily_vol: 0.03 },
            external_txs_per_day: 0,
            self_txs_per_day: 0,
            genesis_timestamp: 1_438_214_400, // 2015-07-30T00:00:00Z
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// The reference fixture: two pools of five members and four solo
    /// miners, seed 42. One member of each pool and the first solo miner
    /// form a coalition, which joins both pools into one weak component.
    pub fn fixture() -> Self {
        SynthConfig {
            n_pools: 2,
            members_per_pool: 5,
            n_solo_miners: 4,
            n_days: 120,
            blocks_per_day: 40,
            payout_period_days: 7,
            pool_hash_weights: vec![12.0, 8.0],
            member_hash_weight: 0.1,
            solo_hash_weight: 1.0,
            planted_coalitions: vec![Coalition {
                members: vec![
                    MinerRef::Member { pool: 0, index: 0 },
                    MinerRef::Member { pool: 1, index: 0 },
                    MinerRef::Solo(0),
                ],
                period_days: 10,
                transfer_wei: 1_500_000_000_000_000_000,
            }],
            external_txs_per_day: 20,
            self_txs_per_day: 2,
            seed: 42,
            ..SynthConfig::default()
        }
    }

    /// About one million transactions over about 100,000 blocks spanning
    /// 51 thirty-day windows.
    pub fn desk_scale(seed: u64) -> Self {
        let mut coalitions = Vec::new();
        // Bridge pools so the largest weak component spans several pools.
        for p in 0..9 {
            coalitions.push(Coalition {
                members: vec![MinerRef::Pool(p), MinerRef::Pool(p + 1), MinerRef::Solo(p)],
                period_days: 15,
                transfer_wei: 10_000_000_000_000_000_000,
            });
        }
        for c in 0..40 {
            let base = 20 + c * 4;
            coalitions.push(Coalition {
                members: (base..base + 2 + c % 3).map(MinerRef::Solo).collect(),
                period_days: 5 + (c as u64 % 7),
                transfer_wei: 500_000_000_000_000_000,
            });
        }
        SynthConfig {
            n_pools: 10,
            members_per_pool: 300,
            n_solo_miners: 500,
            n_days: 1540,
            blocks_per_day: 65,
            payout_period_days: 7,
            pool_hash_weights: (0..10).map(|i| 40.0 / (i + 1) as f64).collect(),
            member_hash_weight: 0.002,
            solo_hash_weight: 0.02,
            planted_coalitions: coalitions,
            external_txs_per_day: 200,
            self_txs_per_day: 5,
            seed,
            ..SynthConfig::default()
        }
    }

    pub fn n_miners(&self) -> usize {
        self.n_pools + self.n_pools * self.members_per_pool + self.n_solo_miners
    }

    fn index_of(&self, r: MinerRef) -> Option<usize> {
        match r {
            MinerRef::Pool(p) if p < self.n_pools => Some(p),
            MinerRef::Member { pool, index } if pool < self.n_pools && index < self.members_per_pool => {
                Some(self.n_pools + pool * self.members_per_pool + index)
            }
            MinerRef::Solo(s) if s < self.n_solo_miners => Some(self.n_pools * (1 + self.members_per_pool) + s),
            _ => None,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Degenerate(m.to_string()));
        if self.n_miners() == 0 {
            return bad("no miners");
        }
        if self.n_days == 0 || self.blocks_per_day == 0 {
            return bad("chain has no blocks");
        }
        if self.payout_period_days == 0 {
            return bad("payout period must be positive");
        }
        if (self.n_days * self.blocks_per_day) < self.n_miners() as u64 {
            return bad("fewer blocks than miners");
        }
        if !self.pool_hash_weights.is_empty() && self.pool_hash_weights.len() != self.n_pools {
            return bad("pool_hash_weights must have one entry per pool");
        }
        let weights_ok = self.pool_hash_weights.iter().all(|w| *w > 0.0 && w.is_finite())
            && self.member_hash_weight > 0.0
            && self.solo_hash_weight > 0.0;
        if !weights_ok {
            return bad("hash weights must be positive");
        }
        let w = self.price_walk;
        if !(w.start_usd > 0.0 && w.daily_vol >= 0.0 && w.daily_drift.is_finite() && w.daily_vol.is_finite()) {
            return bad("invalid price walk");
        }
        for c in &self.planted_coalitions {
            if c.period_days == 0 {
                return bad("coalition period must be positive");
            }
            let mut seen = HashSet::new();
            for &m in &c.members {
                if self.index_of(m).is_none() {
                    return Err(SynthError::Degenerate(format!("coalition member {m:?} does not exist")));
                }
                if !seen.insert(m) {
                    return Err(SynthError::Degenerate(format!("coalition member {m:?} repeated")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MinerKind {
    Pool,
    Member,
    Solo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinerTruth {
    pub address: Address,
    pub kind: MinerKind,
    pub pool: Option<usize>,
    pub blocks_mined: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantedKind {
    Payout,
    Coalition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEdge {
    pub from: Address,
    pub to: Address,
    pub kind: PlantedKind,
    pub count: u64,
    /// The receiver mined strictly more blocks than the sender.
    pub against: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub miners: Vec<MinerTruth>,
    /// Sorted by `(from, to)`.
    pub planted_edges: Vec<PlantedEdge>,
    /// Expected role of every miner in the final network.
    pub roles: BTreeMap<Address, Role>,
    /// Member addresses of each coalition, sorted.
    pub coalitions: Vec<Vec<Address>>,
    /// Strongly connected groups of two or more miners formed by the
    /// planted edges, each sorted, ordered by first member.
    pub sccs: Vec<Vec<Address>>,
    pub miner_tx_count: u64,
    pub self_tx_count: u64,
    pub external_tx_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticChain {
    pub blocks: Vec<BlockRecord>,
    /// Sorted by `(block_number, tx_index)`.
    pub txs: Vec<TxRecord>,
    pub prices: Vec<PricePoint>,
    pub truth: GroundTruth,
}

fn fresh_address<R: Rng>(rng: &mut R, used: &mut HashSet<Address>) -> Address {
    loop {
        let mut bytes = [0u8; 20];
        rng.fill(&mut bytes);
        let a = Address::from_bytes(bytes);
        if used.insert(a) {
            return a;
        }
    }
}

struct TxSink {
    per_block: Vec<u64>,
    txs: Vec<TxRecord>,
}

impl TxSink {
    fn push(&mut self, block: u64, from: Address, to: Address, value_wei: u128) {
        let counter = &mut self.per_block[block as usize];
        self.txs.push(TxRecord { block_number: block, tx_index: *counter, from, to, value_wei });
        *counter += 1;
    }
}

pub fn generate_chain(config: &SynthConfig) -> Result<SyntheticChain, SynthError> {
    config.validate()?;
    let mut rng = rng_for(config.seed, Stream::Synth);
    let n = config.n_miners();
    let mut used = HashSet::new();
    let addresses: Vec<Address> = (0..n).map(|_| fresh_address(&mut rng, &mut used)).collect();
    let externals: Vec<Address> = (0..64).map(|_| fresh_address(&mut rng, &mut used)).collect();

    let mut kinds = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for p in 0..config.n_pools {
        kinds.push((MinerKind::Pool, Some(p)));
        weights.push(config.pool_hash_weights.get(p).copied().unwrap_or(10.0));
    }
    for p in 0..config.n_pools {
        for _ in 0..config.members_per_pool {
            kinds.push((MinerKind::Member, Some(p)));
            weights.push(config.member_hash_weight);
        }
    }
    for _ in 0..config.n_solo_miners {
        kinds.push((MinerKind::Solo, None));
        weights.push(config.solo_hash_weight);
    }

    // Blocks: every miner mines once up front, the rest follow hash weights.
    let total_blocks = config.n_days * config.blocks_per_day;
    let pick = WeightedIndex::new(&weights).expect("weights validated");
    let mut block_miner = Vec::with_capacity(total_blocks as usize);
    for i in 0..total_blocks {
        let m = if (i as usize) < n { i as usize } else { pick.sample(&mut rng) };
        block_miner.push(m);
    }
    let timestamp = |i: u64| config.genesis_timestamp + i * SECONDS_PER_DAY / config.blocks_per_day;
    let blocks: Vec<BlockRecord> = block_miner
        .iter()
        .enumerate()
        .map(|(i, &m)| BlockRecord { block_number: i as u64, timestamp: timestamp(i as u64), miner: addresses[m] })
        .collect();
    let mut blocks_mined = vec![0u64; n];
    for &m in &block_miner {
        blocks_mined[m] += 1;
    }

    let mut sink = TxSink { per_block: vec![0; total_blocks as usize], txs: Vec::new() };
    let mut planted: BTreeMap<(usize, usize), (PlantedKind, u64)> = BTreeMap::new();
    let mut self_count = 0u64;
    let mut external_count = 0u64;
    let coalition_members: Vec<Vec<usize>> = config
        .planted_coalitions
        .iter()
        .map(|c| c.members.iter().map(|&m| config.index_of(m).expect("validated")).collect())
        .collect();
    let mut period_blocks = vec![0u64; config.n_pools];

    for day in 0..config.n_days {
        let first = day * config.blocks_per_day;
        let last = first + config.blocks_per_day - 1;
        for &m in &block_miner[first as usize..=last as usize] {
            if m < config.n_pools {
                period_blocks[m] += 1;
            }
        }
        let random_block = |rng: &mut rand_chacha::ChaCha8Rng| first + rng.gen_range(0..config.blocks_per_day);

        if (day + 1) % config.payout_period_days == 0 && config.members_per_pool > 0 {
            for pool in 0..config.n_pools {
                let reward = BLOCK_REWARD_WEI * period_blocks[pool] as u128;
                let share = reward / config.members_per_pool as u128;
                for idx in 0..config.members_per_pool {
                    let member = config.n_pools + pool * config.members_per_pool + idx;
                    sink.push(last, addresses[pool], addresses[member], share);
                    planted.entry((pool, member)).or_insert((PlantedKind::Payout, 0)).1 += 1;
                }
                period_blocks[pool] = 0;
            }
        }

        for (c, members) in config.planted_coalitions.iter().zip(&coalition_members) {
            if day % c.period_days != c.period_days - 1 {
                continue;
            }
            for &a in members {
                for &b in members {
                    if a != b {
                        let block = random_block(&mut rng);
                        sink.push(block, addresses[a], addresses[b], c.transfer_wei);
                        planted.entry((a, b)).or_insert((PlantedKind::Coalition, 0)).1 += 1;
                    }
                }
            }
        }

        for _ in 0..config.external_txs_per_day {
            let block = random_block(&mut rng);
            let ext = externals[rng.gen_range(0..externals.len())];
            let miner = addresses[rng.gen_range(0..n)];
            let (from, to) = match rng.gen_range(0..3) {
                0 => (miner, ext),
                1 => (ext, miner),
                _ => (ext, externals[rng.gen_range(0..externals.len())]),
            };
            let value = rng.gen_range(0..5_000_000_000_000_000_000u128);
            sink.push(block, from, to, value);
            external_count += 1;
        }
        for _ in 0..config.self_txs_per_day {
            let block = random_block(&mut rng);
            let miner = addresses[rng.gen_range(0..n)];
            sink.push(block, miner, miner, rng.gen_range(0..1_000_000_000_000_000_000u128));
            self_count += 1;
        }
    }

    let mut txs = sink.txs;
    txs.sort_by_key(|t| (t.block_number, t.tx_index));

    let walk = config.price_walk;
    let mut price = walk.start_usd;
    let mut prices = Vec::with_capacity(config.n_days as usize + 1);
    let last_ts = timestamp(total_blocks - 1);
    let mut day_ts = config.genesis_timestamp;
    while utc_date(day_ts) <= utc_date(last_ts) {
        prices.push(PricePoint { date: utc_date(day_ts), usd_per_eth: price });
        let z: f64 = StandardNormal.sample(&mut rng);
        price = (price * (walk.daily_drift + walk.daily_vol * z).exp()).max(MIN_PRICE_USD);
        day_ts += SECONDS_PER_DAY;
    }

    let mut degree = vec![(0usize, 0usize); n];
    for &(a, b) in planted.keys() {
        degree[a].1 += 1;
        degree[b].0 += 1;
    }
    let truth = GroundTruth {
        miners: (0..n)
            .map(|i| MinerTruth { address: addresses[i], kind: kinds[i].0, pool: kinds[i].1, blocks_mined: blocks_mined[i] })
            .collect(),
        planted_edges: {
            let mut edges: Vec<PlantedEdge> = planted
                .iter()
                .map(|(&(a, b), &(kind, count))| PlantedEdge {
                    from: addresses[a],
                    to: addresses[b],
                    kind,
                    count,
                    against: blocks_mined[b] > blocks_mined[a],
                })
                .collect();
            edges.sort_by_key(|e| (e.from, e.to));
            edges
        },
        roles: (0..n).map(|i| (addresses[i], Role::from_degrees(degree[i].0, degree[i].1))).collect(),
        coalitions: coalition_members
            .iter()
            .map(|ms| ms.iter().map(|&m| addresses[m]).collect::<BTreeSet<_>>().into_iter().collect())
            .collect(),
        sccs: mutual_groups(n, planted.keys().copied(), &addresses),
        miner_tx_count: planted.values().map(|v| v.1).sum(),
        self_tx_count: self_count,
        external_tx_count: external_count,
    };
    Ok(SyntheticChain { blocks, txs, prices, truth })
}

/// Groups of miners that reach each other along planted edges, found by a
/// forward search from every node.
fn mutual_groups(n: usize, edges: impl Iterator<Item = (usize, usize)>, addresses: &[Address]) -> Vec<Vec<Address>> {
    let mut succ = vec![Vec::new(); n];
    for (a, b) in edges {
        succ[a].push(b);
    }
    let words = n.div_ceil(64);
    let mut reach = vec![0u64; n * words];
    let mut stack = Vec::new();
    for s in 0..n {
        let row = &mut reach[s * words..(s + 1) * words];
        row[s / 64] |= 1 << (s % 64);
        stack.push(s);
        while let Some(u) = stack.pop() {
            for &v in &succ[u] {
                if row[v / 64] & (1 << (v % 64)) == 0 {
                    row[v / 64] |= 1 << (v % 64);
                    stack.push(v);
                }
            }
        }
    }
    let reaches = |a: usize, b: usize| reach[a * words + b / 64] & (1 << (b % 64)) != 0;
    let mut assigned = vec![false; n];
    let mut groups = Vec::new();
    for a in 0..n {
        if assigned[a] {
            continue;
        }
        let members: Vec<usize> = (a..n).filter(|&b| reaches(a, b) && reaches(b, a)).collect();
        for &m in &members {
            assigned[m] = true;
        }
        if members.len() >= 2 {
            let mut group: Vec<Address> = members.iter().map(|&m| addresses[m]).collect();
            group.sort();
            groups.push(group);
        }
    }
    groups.sort();
    groups
}

/// Writes `blocks.csv`, `transactions.csv`, `prices.csv`,
/// `ground_truth.json` and `synth_config.json` into `dir`.
pub fn write_chain(dir: &Path, chain: &SyntheticChain, config: &SynthConfig) -> Result<(), SynthError> {
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| SynthError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let create = |name: &str| {
        let path = dir.join(name);
        File::create(&path).map(BufWriter::new).map_err(io_err(&path))
    };
    ingest::write_blocks(create("blocks.csv")?, &chain.blocks).map_err(io_err(&dir.join("blocks.csv")))?;
    ingest::write_transactions(create("transactions.csv")?, &chain.txs).map_err(io_err(&dir.join("transactions.csv")))?;
    ingest::write_prices(create("prices.csv")?, &chain.prices).map_err(io_err(&dir.join("prices.csv")))?;
    write_json(&dir.join("ground_truth.json"), &chain.truth)?;
    write_json(&dir.join("synth_config.json"), config)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), SynthError> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    fs::write(path, text + "\n").map_err(|source| SynthError::Io { path: path.display().to_string(), source })
}
