//! End-to-end analysis: load inputs, build every selected slice, compute all
//! metrics and write the report files.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::address::Address;
use crate::concentration::{self, degree_profile, density, gini, hhi, top_n_share, Density, DegreeSummary, RoleCounts};
use crate::control::{
    against_hierarchy, driver_nodes, exact_min_weight_dominating_set, exact_threshold_domination,
    greedy_min_weight_dominating_set, maximum_matching, threshold_domination, EXACT_MAX_NODES,
    verify_domination, verify_threshold, ControlError, DominatingSet, DriverSet, EdgeLabel, HierarchyReport, Matching,
};
use crate::export::{self, ExportError};
use crate::ingest::{self, BlockTable, FilterOutcome, IngestError, IngestWarning, PriceTable, TxReader};
use crate::netbuild::{hash_stats, slice_boundaries, MinerNetwork, MinerStats, NetworkBuilder, NetworkError, SliceIndex};
use crate::topology::{component_flows, scc_stats, ComponentMap, FlowMatrix, SccReport};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_WINDOW_DAYS: u64 = 30;
pub const DEFAULT_RESTARTS: usize = 64;
pub const DEFAULT_THETA: f64 = 0.51;
pub const TOP_N: usize = 10;
/// Written into the output directory while a run is in progress and left
/// behind if it fails.
pub const PARTIAL_MARKER: &str = ".partial";

pub const METRICS_HEADER: &str = "k,last_block,n_miners,n_edges,total_value_usd,gini_blocks,hhi,top10_share,density_all,density_connected,mean_wdeg,median_wdeg";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Metric(#[from] concentration::MetricError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("slice {k} requested but the chain has {count} slices")]
    NoSuchSlice { k: usize, count: usize },
    #[error("{0}")]
    Config(String),
    #[error("{}: {message}", path.display())]
    Verify { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceSelection {
    All,
    Last,
    /// One slice by its 1-based index.
    K(usize),
}

impl FromStr for SliceSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(SliceSelection::All),
            "last" => Ok(SliceSelection::Last),
            _ => match s.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(SliceSelection::K(k)),
                _ => Err(format!("expected `all`, `last` or a slice number >= 1, found `{s}`")),
            },
        }
    }
}

impl fmt::Display for SliceSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SliceSelection::All => f.write_str("all"),
            SliceSelection::Last => f.write_str("last"),
            SliceSelection::K(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Format {
    Csv,
    Json,
    Graphml,
    Dot,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "graphml" => Ok(Format::Graphml),
            "dot" => Ok(Format::Dot),
            _ => Err(format!("unknown format `{s}` (expected csv, json, graphml or dot)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub window_days: u64,
    pub slices: SliceSelection,
    pub restarts: usize,
    pub seed: u64,
    pub theta: f64,
    pub formats: Vec<Format>,
    /// Worker threads for slice-level parallelism; `None` uses every core.
    pub workers: Option<usize>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            window_days: DEFAULT_WINDOW_DAYS,
            slices: SliceSelection::All,
            restarts: DEFAULT_RESTARTS,
            seed: 0,
            theta: DEFAULT_THETA,
            formats: vec![Format::Csv],
            workers: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InputPaths {
    pub blocks: PathBuf,
    pub transactions: PathBuf,
    pub prices: PathBuf,
}

/// Parsed inputs with the transaction file reduced to miner-to-miner
/// transfers.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub blocks: BlockTable,
    pub prices: PriceTable,
    pub filtered: FilterOutcome,
    pub warnings: Vec<IngestWarning>,
}

/// Reads all three inputs. Transactions are streamed through the miner
/// filter and never held in memory as a whole.
pub fn load_inputs(paths: &InputPaths) -> Result<Inputs, PipelineError> {
    // Open everything first so a missing file is reported before any work.
    let blocks_in = ingest::open_input(&paths.blocks)?;
    let prices_in = ingest::open_input(&paths.prices)?;
    let txs_in = ingest::open_input(&paths.transactions)?;
    let parsed = ingest::parse_blocks(blocks_in)?;
    let prices = ingest::parse_prices(prices_in)?;
    let blocks = parsed.value;
    info!("read {} blocks and {} price points", blocks.len(), prices.points().len());
    let miners = ingest::miner_set(&blocks, u64::MAX);
    let filtered = ingest::filter_miner_tx_stream(TxReader::new(txs_in)?, &miners, &prices, &blocks)?;
    info!(
        "kept {} miner transactions of {} ({} dropped, {} self)",
        filtered.txs.len(),
        filtered.input_count(),
        filtered.dropped,
        filtered.self_tally
    );
    Ok(Inputs { blocks, prices, filtered, warnings: parsed.warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GwccReport {
    pub size: usize,
    pub edge_count: usize,
    pub hash_share: f64,
    pub value_usd: f64,
    pub component_count: usize,
    /// SCCs of size at least 2 inside the GWCC. Their members are all mixed,
    /// so this is also the mixed-only count.
    pub scc_count: usize,
    pub roles: RoleCounts,
    pub flows: FlowMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriverReport {
    /// Network the drivers were computed on.
    pub scope: &'static str,
    pub n_d: usize,
    pub fraction: f64,
    pub hash_share: f64,
    pub matching_size: usize,
    pub reachable_fraction: f64,
}

/// How a dominating set was found: exhaustive search on small networks,
/// seeded multi-start greedy otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Greedy,
}

impl Method {
    pub fn for_size(n: usize) -> Self {
        if n <= EXACT_MAX_NODES {
            Method::Exact
        } else {
            Method::Greedy
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominatingReport {
    pub scope: &'static str,
    pub method: Method,
    pub size: usize,
    pub fraction: f64,
    pub hash_share: f64,
    pub covered_hash_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub scope: &'static str,
    pub method: Method,
    pub theta: f64,
    pub size: usize,
    pub hash_share: f64,
    /// Hash share of the members and their out-neighbors.
    pub covered: f64,
}

/// Every metric for one cumulative slice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceReport {
    pub k: usize,
    pub last_block: u64,
    pub n_miners: usize,
    pub n_edges: usize,
    pub n_transactions: u64,
    pub total_value_usd: f64,
    pub gini: f64,
    pub hhi: f64,
    pub top10_share: f64,
    pub density: Option<Density>,
    pub degree: DegreeSummary,
    /// Inequality of relationship values; `None` without valued edges.
    pub edge_value_gini: Option<f64>,
    pub roles: RoleCounts,
    pub gwcc: Option<GwccReport>,
    pub scc: SccReport,
    pub against: HierarchyReport,
    pub drivers: DriverReport,
    pub dominating: DominatingReport,
    pub threshold: ThresholdReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub window_days: u64,
    pub slices: String,
    pub restarts: usize,
    pub seed: u64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputSummary {
    pub blocks: usize,
    pub first_block: u64,
    pub last_block: u64,
    pub transactions: u64,
    pub miner_transactions: usize,
    pub dropped_transactions: u64,
    pub self_transactions: u64,
    pub zero_value_transactions: u64,
    pub timestamp_warnings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub config: ConfigEcho,
    pub input: InputSummary,
    pub slice_count: usize,
    pub slices: Vec<SliceReport>,
}

/// A fully analysed slice, keeping the sets behind the summary numbers.
#[derive(Debug, Clone)]
pub struct SliceAnalysis {
    pub report: SliceReport,
    pub network: MinerNetwork,
    pub stats: MinerStats,
    pub components: ComponentMap,
    /// GWCC node ids in the full network; the GWCC's local id `i` is
    /// `gwcc_nodes[i]`.
    pub gwcc_nodes: Vec<usize>,
    pub gwcc: MinerNetwork,
    pub hierarchy: HierarchyReport,
    /// Computed on the GWCC, local ids.
    pub drivers: DriverSet,
    /// Computed on the GWCC, local ids.
    pub dominating: DominatingSet,
    /// Computed on the full network.
    pub threshold: DominatingSet,
}

pub fn select_slices(all: &[SliceIndex], selection: SliceSelection) -> Result<Vec<SliceIndex>, PipelineError> {
    match selection {
        SliceSelection::All => Ok(all.to_vec()),
        SliceSelection::Last => Ok(all.last().copied().into_iter().collect()),
        SliceSelection::K(k) => all
            .iter()
            .find(|s| s.k == k)
            .map(|s| vec![*s])
            .ok_or(PipelineError::NoSuchSlice { k, count: all.len() }),
    }
}

fn validate(config: &AnalysisConfig) -> Result<(), PipelineError> {
    if !(config.theta > 0.0 && config.theta <= 1.0) {
        return Err(ControlError::InvalidTheta(config.theta).into());
    }
    if config.workers == Some(0) {
        return Err(PipelineError::Config("--workers must be at least 1".into()));
    }
    Ok(())
}

/// Analyses one slice with every module.
pub fn analyze_slice(
    builder: &NetworkBuilder<'_>,
    blocks: &BlockTable,
    slice: &SliceIndex,
    config: &AnalysisConfig,
) -> Result<SliceAnalysis, PipelineError> {
    let net = builder.build(slice);
    let stats = hash_stats(blocks, slice);
    let weights = stats.weights_for(&net);
    debug!("slice {}: {} miners, {} edges", slice.k, net.node_count(), net.edge_count());

    let blocks_mined: Vec<f64> = stats.entries().iter().map(|s| s.blocks_mined as f64).collect();
    let shares_pct: Vec<f64> = stats.entries().iter().map(|s| s.hash_share * 100.0).collect();
    let edge_values: Vec<f64> = net.edges().iter().map(|e| e.attr.value_usd).collect();
    let components = ComponentMap::compute(&net, &weights);
    let mask = components.gwcc_mask();
    let (gwcc, gwcc_nodes) = if mask.is_empty() { (net.induced(&[]).0, Vec::new()) } else { net.induced(&mask) };
    let gwcc_weights: Vec<f64> = gwcc_nodes.iter().map(|&v| weights[v]).collect();

    let hierarchy = against_hierarchy(&net, &stats)?;
    let drivers = driver_nodes(&gwcc);
    let dominating_method = Method::for_size(gwcc.node_count());
    let dominating = match dominating_method {
        Method::Exact => exact_min_weight_dominating_set(&gwcc, &gwcc_weights)?,
        Method::Greedy => greedy_min_weight_dominating_set(&gwcc, &gwcc_weights, config.restarts, config.seed)?,
    };
    let threshold_method = Method::for_size(net.node_count());
    let threshold = match threshold_method {
        Method::Exact => exact_threshold_domination(&net, &weights, config.theta)?,
        Method::Greedy => threshold_domination(&net, &weights, config.theta, config.restarts, config.seed)?,
    };
    let frac = |part: usize, whole: usize| if whole == 0 { 0.0 } else { part as f64 / whole as f64 };

    let gwcc_report = components.gwcc.map(|g| {
        let summary = components.wcc_summary[g];
        let roles: Vec<_> = gwcc_nodes.iter().map(|&v| components.roles[v]).collect();
        GwccReport {
            size: summary.size,
            edge_count: gwcc.edge_count(),
            hash_share: summary.hash_share,
            value_usd: summary.internal_value,
            component_count: components.wcc.count(),
            scc_count: {
                let scc = &components.scc;
                let ids: BTreeSet<usize> =
                    gwcc_nodes.iter().map(|&v| scc.ids[v]).filter(|&c| scc.sizes[c] >= 2).collect();
                ids.len()
            },
            roles: RoleCounts::tally(&roles),
            flows: component_flows(&net, &components.roles, &mask),
        }
    });

    let report = SliceReport {
        k: slice.k,
        last_block: slice.last_block,
        n_miners: net.node_count(),
        n_edges: net.edge_count(),
        n_transactions: net.edges().iter().map(|e| e.attr.count).sum(),
        total_value_usd: net.total_value(),
        gini: gini(&blocks_mined)?,
        hhi: hhi(&shares_pct)?,
        top10_share: top_n_share(&stats, TOP_N),
        density: match density(&net) {
            Ok(d) => Some(d),
            Err(concentration::MetricError::TooFewNodes(_)) => None,
            Err(e) => return Err(e.into()),
        },
        degree: degree_profile(&net).summary(),
        edge_value_gini: gini(&edge_values).ok(),
        roles: RoleCounts::tally(&components.roles),
        gwcc: gwcc_report,
        scc: scc_stats(&net, &components.scc, &weights),
        against: hierarchy.clone(),
        drivers: DriverReport {
            scope: "gwcc",
            n_d: drivers.n_d,
            fraction: frac(drivers.n_d, gwcc.node_count()),
            hash_share: crate::sum::sum(drivers.drivers.iter().map(|&v| gwcc_weights[v])),
            matching_size: drivers.matching.size(),
            reachable_fraction: drivers.reachable_fraction,
        },
        dominating: DominatingReport {
            scope: "gwcc",
            method: dominating_method,
            size: dominating.size(),
            fraction: frac(dominating.size(), gwcc.node_count()),
            hash_share: dominating.total_hash_share,
            covered_hash_share: dominating.covered_hash_share,
        },
        threshold: ThresholdReport {
            scope: "all",
            method: threshold_method,
            theta: config.theta,
            size: threshold.size(),
            hash_share: threshold.total_hash_share,
            covered: threshold.covered_hash_share,
        },
    };
    Ok(SliceAnalysis {
        report,
        network: net,
        stats,
        components,
        gwcc_nodes,
        gwcc,
        hierarchy,
        drivers,
        dominating,
        threshold,
    })
}

/// Analyses the selected slices, in parallel across slices.
pub fn analyze(inputs: &Inputs, config: &AnalysisConfig) -> Result<(usize, Vec<SliceAnalysis>), PipelineError> {
    validate(config)?;
    let all = slice_boundaries(&inputs.blocks, config.window_days)?;
    let selected = select_slices(&all, config.slices)?;
    let builder = NetworkBuilder::new(&inputs.filtered.txs, &inputs.blocks)?;
    info!("analysing {} of {} slices", selected.len(), all.len());
    let run = || -> Result<Vec<SliceAnalysis>, PipelineError> {
        selected.par_iter().map(|s| analyze_slice(&builder, &inputs.blocks, s, config)).collect()
    };
    let analyses = match config.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| PipelineError::Config(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    Ok((all.len(), analyses))
}

pub fn build_report(inputs: &Inputs, config: &AnalysisConfig, slice_count: usize, analyses: &[SliceAnalysis]) -> Report {
    let records = inputs.blocks.records();
    Report {
        schema_version: SCHEMA_VERSION,
        config: ConfigEcho {
            window_days: config.window_days,
            slices: config.slices.to_string(),
            restarts: config.restarts,
            seed: config.seed,
            theta: config.theta,
        },
        input: InputSummary {
            blocks: records.len(),
            first_block: records.first().map_or(0, |b| b.block_number),
            last_block: records.last().map_or(0, |b| b.block_number),
            transactions: inputs.filtered.input_count(),
            miner_transactions: inputs.filtered.txs.len(),
            dropped_transactions: inputs.filtered.dropped,
            self_transactions: inputs.filtered.self_tally,
            zero_value_transactions: inputs.filtered.zero_value_count(),
            timestamp_warnings: inputs.warnings.len(),
        },
        slice_count,
        slices: analyses.iter().map(|a| a.report.clone()).collect(),
    }
}

// ---------------------------------------------------------------------------
// Output

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

/// Writes `path` through a sibling temporary file and a rename, so readers
/// never observe a half-written file.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<(), PipelineError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), PipelineError>,
{
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let file = File::create(&tmp).map_err(io_err(&tmp))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    let file = w.into_inner().map_err(|e| PipelineError::Io { path: tmp.clone(), source: e.into_error() })?;
    file.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| PipelineError::Io { path: path.into(), source: e.into() })?;
        writeln!(w).map_err(io_err(path))
    })
}

fn write_csv<I, R>(path: &Path, header: &str, rows: I) -> Result<(), PipelineError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| PipelineError::Export(e.into());
        out.write_record(header.split(',')).map_err(csv_err)?;
        for row in rows {
            out.write_record(row).map_err(csv_err)?;
        }
        out.flush().map_err(io_err(path))
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn node_rows<'a>(
    net: &'a MinerNetwork,
    weights: &'a [f64],
    nodes: impl IntoIterator<Item = usize> + 'a,
) -> impl Iterator<Item = Vec<String>> + 'a {
    nodes.into_iter().map(move |v| vec![net.address(v).to_string(), weights[v].to_string()])
}

#[derive(Serialize)]
struct ControlFile<'a> {
    k: usize,
    theta: f64,
    against: &'a HierarchyReport,
    drivers: &'a DriverReport,
    dominating: &'a DominatingReport,
    threshold: &'a ThresholdReport,
}

fn slice_dir(out: &Path, k: usize) -> PathBuf {
    out.join("slices").join(format!("k{k:02}"))
}

pub fn write_slice(out: &Path, a: &SliceAnalysis, config: &AnalysisConfig) -> Result<(), PipelineError> {
    let dir = slice_dir(out, a.report.k);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let net = &a.network;
    let weights = a.stats.weights_for(net);
    let gwcc_weights: Vec<f64> = a.gwcc_nodes.iter().map(|&v| weights[v]).collect();
    let r = &a.report;
    write_json(
        &dir.join("control.json"),
        &ControlFile {
            k: r.k,
            theta: config.theta,
            against: &r.against,
            drivers: &r.drivers,
            dominating: &r.dominating,
            threshold: &r.threshold,
        },
    )?;
    let formats = &config.formats;
    if formats.contains(&Format::Csv) {
        write_atomic(&dir.join("nodes.csv"), |w| Ok(export::write_nodes_csv(w, net, &a.stats)?))?;
        write_atomic(&dir.join("edges.csv"), |w| Ok(export::write_edges_csv(w, net)?))?;
        let c = &a.components;
        write_csv(
            &dir.join("components.csv"),
            "node,wcc_id,scc_id,role",
            (0..net.node_count()).map(|v| {
                vec![net.address(v).to_string(), c.wcc.ids[v].to_string(), c.scc.ids[v].to_string(), c.roles[v].as_str().to_string()]
            }),
        )?;
        if let Some(g) = &r.gwcc {
            write_csv(
                &dir.join("flows.csv"),
                "from_role,to_role,value_usd",
                g.flows.cells().into_iter().map(|f| {
                    vec![f.from_role.as_str().to_string(), f.to_role.as_str().to_string(), f.value_usd.to_string()]
                }),
            )?;
        }
        write_csv(
            &dir.join("scc_stats.csv"),
            "scc_id,size,hash_share,internal_value",
            r.scc.components.iter().map(|s| {
                vec![s.id.to_string(), s.size.to_string(), s.hash_share.to_string(), s.internal_value.to_string()]
            }),
        )?;
        write_csv(
            &dir.join("against.csv"),
            "from,to,value_usd,label",
            net.edges().iter().zip(&a.hierarchy.labels).map(|(e, l)| {
                let label = match l {
                    EdgeLabel::Against => "against",
                    EdgeLabel::With => "with",
                    EdgeLabel::Tied => "tied",
                };
                vec![net.address(e.from).to_string(), net.address(e.to).to_string(), e.attr.value_usd.to_string(), label.into()]
            }),
        )?;
        let gwcc = &a.gwcc;
        write_csv(&dir.join("drivers.csv"), "node,hash_share", node_rows(gwcc, &gwcc_weights, a.drivers.drivers.iter().copied()))?;
        write_csv(
            &dir.join("matching.csv"),
            "from,to",
            a.drivers.matching.edges().into_iter().map(|(f, t)| vec![gwcc.address(f).to_string(), gwcc.address(t).to_string()]),
        )?;
        write_csv(&dir.join("dominating.csv"), "node,hash_share", node_rows(gwcc, &gwcc_weights, a.dominating.members.iter().copied()))?;
        write_csv(&dir.join("threshold.csv"), "node,hash_share", node_rows(net, &weights, a.threshold.members.iter().copied()))?;
    }
    if formats.contains(&Format::Json) {
        write_atomic(&dir.join("network.json"), |w| Ok(export::write_network_json(w, net, &a.stats)?))?;
    }
    if formats.contains(&Format::Graphml) {
        write_atomic(&dir.join("network.graphml"), |w| Ok(export::write_graphml(w, net, &a.stats)?))?;
    }
    if formats.contains(&Format::Dot) {
        write_atomic(&dir.join("network.dot"), |w| Ok(export::write_dot(w, net, &a.stats)?))?;
    }
    Ok(())
}

fn metrics_row(r: &SliceReport) -> Vec<String> {
    vec![
        r.k.to_string(),
        r.last_block.to_string(),
        r.n_miners.to_string(),
        r.n_edges.to_string(),
        r.total_value_usd.to_string(),
        r.gini.to_string(),
        r.hhi.to_string(),
        r.top10_share.to_string(),
        opt(r.density.map(|d| d.all)),
        opt(r.density.and_then(|d| d.connected)),
        r.degree.mean.to_string(),
        r.degree.median.to_string(),
    ]
}

pub fn write_outputs(out: &Path, report: &Report, analyses: &[SliceAnalysis], config: &AnalysisConfig) -> Result<(), PipelineError> {
    write_json(&out.join("report.json"), report)?;
    write_csv(&out.join("metrics.csv"), METRICS_HEADER, report.slices.iter().map(metrics_row))?;
    let series = out.join("series");
    fs::create_dir_all(&series).map_err(io_err(&series))?;
    write_csv(
        &series.join("top_miners.csv"),
        "k,rank,node,blocks_mined,hash_share",
        analyses.iter().flat_map(|a| {
            a.stats.by_rank().into_iter().take(TOP_N).map(move |s| {
                vec![a.report.k.to_string(), s.rank.to_string(), s.address.to_string(), s.blocks_mined.to_string(), s.hash_share.to_string()]
            })
        }),
    )?;
    write_csv(
        &series.join("components.csv"),
        "k,wcc_count,gwcc_size,gwcc_hash_share,gwcc_value_usd,scc_count,largest_scc,scc_members,scc_hash_share",
        report.slices.iter().map(|r| {
            let g = r.gwcc.as_ref();
            vec![
                r.k.to_string(),
                g.map_or(0, |g| g.component_count).to_string(),
                g.map_or(0, |g| g.size).to_string(),
                g.map_or(0.0, |g| g.hash_share).to_string(),
                g.map_or(0.0, |g| g.value_usd).to_string(),
                r.scc.components.len().to_string(),
                r.scc.largest.to_string(),
                r.scc.member_count.to_string(),
                r.scc.hash_share.to_string(),
            ]
        }),
    )?;
    write_csv(
        &series.join("control.csv"),
        "k,against_count,against_value_usd,against_fraction,n_d,driver_fraction,dominating_size,dominating_hash_share,threshold_size,threshold_hash_share",
        report.slices.iter().map(|r| {
            vec![
                r.k.to_string(),
                r.against.count.to_string(),
                r.against.value_usd.to_string(),
                r.against.fraction.to_string(),
                r.drivers.n_d.to_string(),
                r.drivers.fraction.to_string(),
                r.dominating.size.to_string(),
                r.dominating.hash_share.to_string(),
                r.threshold.size.to_string(),
                r.threshold.hash_share.to_string(),
            ]
        }),
    )?;
    analyses.par_iter().try_for_each(|a| write_slice(out, a, config))
}

/// Full run: inputs → analysis → files under `out`. A `.partial` marker
/// stays in `out` unless every step succeeds.
pub fn run_pipeline(paths: &InputPaths, out: &Path, config: &AnalysisConfig) -> Result<Report, PipelineError> {
    validate(config)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let marker = out.join(PARTIAL_MARKER);
    fs::write(&marker, "run in progress\n").map_err(io_err(&marker))?;
    let result = (|| {
        let inputs = load_inputs(paths)?;
        let (count, analyses) = analyze(&inputs, config)?;
        let report = build_report(&inputs, config, count, &analyses);
        let write = || write_outputs(out, &report, &analyses, config);
        match config.workers {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| PipelineError::Config(e.to_string()))?
                .install(write)?,
            None => write()?,
        }
        Ok(report)
    })();
    match &result {
        Ok(_) => fs::remove_file(&marker).map_err(io_err(&marker))?,
        Err(e) => {
            let _ = fs::write(&marker, format!("{e}\n"));
        }
    }
    result
}

// ---------------------------------------------------------------------------
// Verification of emitted sets

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub ok: bool,
    pub detail: String,
}

#[derive(Deserialize)]
struct ControlTheta {
    theta: f64,
}

fn read_file(path: &Path) -> Result<File, PipelineError> {
    File::open(path).map_err(io_err(path))
}

fn local_ids(net: &MinerNetwork, nodes: &[Address]) -> Result<Vec<usize>, String> {
    nodes.iter().map(|a| net.index_of(a).ok_or_else(|| format!("{a} is not in the component"))).collect()
}

/// Re-checks the sets written for one slice against its `nodes.csv` and
/// `edges.csv`: dominating-set coverage of the GWCC, threshold coverage,
/// and that the matching is valid and maximum with the drivers it implies.
pub fn verify_slice_dir(dir: &Path) -> Result<Vec<CheckResult>, PipelineError> {
    let (net, stats) = export::parse_network_csv(read_file(&dir.join("nodes.csv"))?, read_file(&dir.join("edges.csv"))?)?;
    let control_path = dir.join("control.json");
    let theta = serde_json::from_reader::<_, ControlTheta>(io::BufReader::new(read_file(&control_path)?))
        .map_err(|e| PipelineError::Verify { path: control_path.clone(), message: e.to_string() })?
        .theta;
    let weights = stats.weights_for(&net);
    let components = ComponentMap::compute(&net, &weights);
    let mask = components.gwcc_mask();
    let (gwcc, _) = if mask.is_empty() { net.induced(&[]) } else { net.induced(&mask) };
    let list = |name: &str| -> Result<Vec<Address>, PipelineError> { Ok(export::parse_node_list(read_file(&dir.join(name))?)?) };
    let mut checks = Vec::new();

    let dominating = match local_ids(&gwcc, &list("dominating.csv")?) {
        Ok(ids) => match verify_domination(&gwcc, &ids) {
            Ok(()) => (true, format!("{} members dominate all {} GWCC nodes", ids.len(), gwcc.node_count())),
            Err(e) => (false, e.to_string()),
        },
        Err(e) => (false, e),
    };
    checks.push(CheckResult { name: "dominating", ok: dominating.0, detail: dominating.1 });

    let threshold = match local_ids(&net, &list("threshold.csv")?) {
        Ok(ids) => {
            let ok = verify_threshold(&net, &weights, &ids, theta);
            (ok, format!("{} members, theta {theta}", ids.len()))
        }
        Err(e) => (false, e),
    };
    checks.push(CheckResult { name: "threshold", ok: threshold.0, detail: threshold.1 });

    let pairs = export::parse_pairs(read_file(&dir.join("matching.csv"))?)?;
    let matching: Result<Matching, String> = pairs
        .iter()
        .map(|(f, t)| Ok((local_ids(&gwcc, &[*f])?[0], local_ids(&gwcc, &[*t])?[0])))
        .collect::<Result<Vec<_>, String>>()
        .and_then(|edges| Matching::from_edges(&gwcc, &edges));
    let best = maximum_matching(&gwcc).size();
    let (ok, detail) = match &matching {
        Ok(m) if m.size() == best => (true, format!("{} edges, maximum", m.size())),
        Ok(m) => (false, format!("{} edges, maximum is {best}", m.size())),
        Err(e) => (false, e.clone()),
    };
    checks.push(CheckResult { name: "matching", ok, detail });

    let drivers = match (matching, local_ids(&gwcc, &list("drivers.csv")?)) {
        (Ok(m), Ok(mut ids)) => {
            ids.sort_unstable();
            let mut expected: Vec<usize> = (0..gwcc.node_count()).filter(|&v| m.in_from[v].is_none()).collect();
            if expected.is_empty() && gwcc.node_count() > 0 {
                expected.push(0);
            }
            if ids == expected {
                (true, format!("{} drivers", ids.len()))
            } else {
                (false, format!("{} drivers listed, matching leaves {} unmatched", ids.len(), expected.len()))
            }
        }
        (_, Err(e)) => (false, e),
        (Err(_), _) => (false, "matching invalid".into()),
    };
    checks.push(CheckResult { name: "drivers", ok: drivers.0, detail: drivers.1 });
    Ok(checks)
}
