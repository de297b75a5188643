//! Network serialization (CSV, JSON, GraphML, DOT) and the parsers that read
//! emitted node, edge, member and matching files back.

use std::collections::HashSet;
use std::io::{self, Read, Write};

use serde::Serialize;
use thiserror::Error;

use crate::address::Address;
use crate::netbuild::{EdgeAttr, MinerNetwork, MinerStats, NetworkError};

pub const NODES_HEADER: &str = "node,blocks_mined,hash_share";
pub const EDGES_HEADER: &str = "from,to,value_usd,count";

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("invalid network: {0}")]
    Network(#[from] NetworkError),
}

fn blocks_of(net: &MinerNetwork, stats: &MinerStats) -> Vec<(u64, f64)> {
    net.nodes()
        .iter()
        .map(|a| stats.get(a).map(|s| (s.blocks_mined, s.hash_share)).unwrap_or((0, 0.0)))
        .collect()
}

pub fn write_nodes_csv<W: Write>(w: W, net: &MinerNetwork, stats: &MinerStats) -> Result<(), ExportError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(NODES_HEADER.split(','))?;
    for (a, (blocks, share)) in net.nodes().iter().zip(blocks_of(net, stats)) {
        out.write_record([a.to_string(), blocks.to_string(), share.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_edges_csv<W: Write>(w: W, net: &MinerNetwork) -> Result<(), ExportError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(EDGES_HEADER.split(','))?;
    for e in net.edges() {
        out.write_record([
            net.address(e.from).to_string(),
            net.address(e.to).to_string(),
            e.attr.value_usd.to_string(),
            e.attr.count.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct JsonNode {
    address: Address,
    blocks_mined: u64,
    hash_share: f64,
}

#[derive(Serialize)]
struct JsonEdge {
    from: Address,
    to: Address,
    value_usd: f64,
    count: u64,
}

#[derive(Serialize)]
struct JsonNetwork {
    last_block: Option<u64>,
    nodes: Vec<JsonNode>,
    edges: Vec<JsonEdge>,
}

pub fn write_network_json<W: Write>(w: W, net: &MinerNetwork, stats: &MinerStats) -> Result<(), ExportError> {
    let doc = JsonNetwork {
        last_block: net.slice().map(|s| s.last_block),
        nodes: net
            .nodes()
            .iter()
            .zip(blocks_of(net, stats))
            .map(|(&address, (blocks_mined, hash_share))| JsonNode { address, blocks_mined, hash_share })
            .collect(),
        edges: net
            .edges()
            .iter()
            .map(|e| JsonEdge {
                from: net.address(e.from),
                to: net.address(e.to),
                value_usd: e.attr.value_usd,
                count: e.attr.count,
            })
            .collect(),
    };
    let mut w = w;
    serde_json::to_writer_pretty(&mut w, &doc).map_err(io::Error::from)?;
    writeln!(w)?;
    Ok(())
}

pub fn write_graphml<W: Write>(mut w: W, net: &MinerNetwork, stats: &MinerStats) -> Result<(), ExportError> {
    writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(w, r#"<graphml xmlns="http://graphml.graphdrawing.org/xmlns">"#)?;
    writeln!(w, r#"  <key id="blocks" for="node" attr.name="blocks_mined" attr.type="long"/>"#)?;
    writeln!(w, r#"  <key id="share" for="node" attr.name="hash_share" attr.type="double"/>"#)?;
    writeln!(w, r#"  <key id="value" for="edge" attr.name="value_usd" attr.type="double"/>"#)?;
    writeln!(w, r#"  <key id="count" for="edge" attr.name="count" attr.type="long"/>"#)?;
    writeln!(w, r#"  <graph id="miners" edgedefault="directed">"#)?;
    for (a, (blocks, share)) in net.nodes().iter().zip(blocks_of(net, stats)) {
        writeln!(
            w,
            r#"    <node id="{a}"><data key="blocks">{blocks}</data><data key="share">{share}</data></node>"#
        )?;
    }
    for e in net.edges() {
        writeln!(
            w,
            r#"    <edge source="{}" target="{}"><data key="value">{}</data><data key="count">{}</data></edge>"#,
            net.address(e.from),
            net.address(e.to),
            e.attr.value_usd,
            e.attr.count
        )?;
    }
    writeln!(w, "  </graph>")?;
    writeln!(w, "</graphml>")?;
    Ok(())
}

pub fn write_dot<W: Write>(mut w: W, net: &MinerNetwork, stats: &MinerStats) -> Result<(), ExportError> {
    writeln!(w, "digraph miners {{")?;
    for (a, (blocks, share)) in net.nodes().iter().zip(blocks_of(net, stats)) {
        writeln!(w, "  \"{a}\" [blocks_mined={blocks}, hash_share={share}];")?;
    }
    for e in net.edges() {
        writeln!(
            w,
            "  \"{}\" -> \"{}\" [value_usd={}, count={}];",
            net.address(e.from),
            net.address(e.to),
            e.attr.value_usd,
            e.attr.count
        )?;
    }
    writeln!(w, "}}")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Parsers

fn line_of(record: &csv::ByteRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn field(record: &csv::ByteRecord, i: usize) -> Result<&str, ExportError> {
    let raw = record.get(i).ok_or_else(|| ExportError::Malformed {
        line: line_of(record),
        message: format!("missing column {}", i + 1),
    })?;
    std::str::from_utf8(raw).map_err(|_| ExportError::Malformed { line: line_of(record), message: "not UTF-8".into() })
}

fn parse_field<T: std::str::FromStr>(record: &csv::ByteRecord, i: usize, what: &str) -> Result<T, ExportError> {
    let s = field(record, i)?;
    s.parse().map_err(|_| ExportError::Malformed { line: line_of(record), message: format!("invalid {what} `{s}`") })
}

fn address_field(record: &csv::ByteRecord, i: usize) -> Result<Address, ExportError> {
    let s = field(record, i)?;
    Address::parse(s).map_err(|e| ExportError::Malformed { line: line_of(record), message: format!("{e}: `{s}`") })
}

/// Reads a headed CSV and hands every data record to `each`. The header's
/// leading columns must equal `expected`.
fn read_table<R: Read>(
    reader: R,
    expected: &[&str],
    mut each: impl FnMut(&csv::ByteRecord) -> Result<(), ExportError>,
) -> Result<(), ExportError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut record = csv::ByteRecord::new();
    if !rdr.read_byte_record(&mut record)? {
        return Err(ExportError::Malformed { line: 1, message: "missing header".into() });
    }
    let header_ok = record.len() >= expected.len()
        && expected.iter().enumerate().all(|(i, name)| record.get(i) == Some(name.as_bytes()));
    if !header_ok {
        return Err(ExportError::Malformed {
            line: 1,
            message: format!("expected header starting `{}`", expected.join(",")),
        });
    }
    while rdr.read_byte_record(&mut record)? {
        each(&record)?;
    }
    Ok(())
}

/// Rebuilds a network and its hash statistics from `nodes.csv` and
/// `edges.csv`. Shares are recomputed from the block counts.
pub fn parse_network_csv<N: Read, E: Read>(nodes: N, edges: E) -> Result<(MinerNetwork, MinerStats), ExportError> {
    let mut counts = Vec::new();
    let mut seen = HashSet::new();
    read_table(nodes, &["node", "blocks_mined"], |r| {
        let a = address_field(r, 0)?;
        let blocks: u64 = parse_field(r, 1, "block count")?;
        if !seen.insert(a) {
            return Err(ExportError::Malformed { line: line_of(r), message: format!("duplicate node {a}") });
        }
        counts.push((a, blocks));
        Ok(())
    })?;
    let mut addresses: Vec<Address> = counts.iter().map(|c| c.0).collect();
    addresses.sort();
    let mut raw = Vec::new();
    read_table(edges, &["from", "to", "value_usd", "count"], |r| {
        let from = address_field(r, 0)?;
        let to = address_field(r, 1)?;
        let value_usd: f64 = parse_field(r, 2, "value")?;
        let count: u64 = parse_field(r, 3, "count")?;
        if !value_usd.is_finite() || value_usd < 0.0 {
            return Err(ExportError::Malformed { line: line_of(r), message: format!("invalid value {value_usd}") });
        }
        raw.push((from, to, EdgeAttr { value_usd, count }));
        Ok(())
    })?;
    let net = MinerNetwork::new(addresses, raw)?;
    Ok((net, MinerStats::from_counts(counts)))
}

/// Reads the first column of a headed node list such as `dominating.csv`
/// or `drivers.csv`.
pub fn parse_node_list<R: Read>(reader: R) -> Result<Vec<Address>, ExportError> {
    let mut out = Vec::new();
    read_table(reader, &["node"], |r| {
        out.push(address_field(r, 0)?);
        Ok(())
    })?;
    Ok(out)
}

/// Reads `from,to` pairs such as `matching.csv`.
pub fn parse_pairs<R: Read>(reader: R) -> Result<Vec<(Address, Address)>, ExportError> {
    let mut out = Vec::new();
    read_table(reader, &["from", "to"], |r| {
        out.push((address_field(r, 0)?, address_field(r, 1)?));
        Ok(())
    })?;
    Ok(out)
}
