//! Block, transaction and price ingestion.
//!
//! Inputs are UTF-8 CSV files with a mandatory header. Files ending in `.gz`
//! are decompressed on the fly. Transactions are read as a stream so that
//! only the miner-to-miner subset is ever materialized.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate};
use csv::{ByteRecord, ReaderBuilder, Trim};
use flate2::read::MultiGzDecoder;
use serde::Serialize;
use thiserror::Error;

use crate::address::Address;

pub const BLOCKS_HEADER: [&str; 3] = ["block_number", "timestamp", "miner"];
pub const TRANSACTIONS_HEADER: [&str; 5] =
    ["block_number", "tx_index", "from_address", "to_address", "value_wei"];
pub const PRICES_HEADER: [&str; 2] = ["date", "usd_per_eth"];

const WEI_PER_ETH: u128 = 1_000_000_000_000_000_000;
/// 9999-12-31T23:59:59Z; keeps every timestamp representable as a calendar date.
const MAX_TIMESTAMP: u64 = 253_402_300_799;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {}: {source}", path.display())]
    Open { path: PathBuf, source: io::Error },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: expected header `{expected}`, found `{found}`")]
    Header { line: u64, expected: String, found: String },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("duplicate block number {block_number}{}", line_suffix(*line))]
    DuplicateBlock { block_number: u64, line: Option<u64> },
    #[error("duplicate price date {date}{}", line_suffix(*line))]
    DuplicatePrice { date: NaiveDate, line: Option<u64> },
    #[error("duplicate transaction ({block_number}, {tx_index})")]
    DuplicateTx { block_number: u64, tx_index: u64 },
    #[error("transaction ({block_number}, {tx_index}) references unknown block")]
    UnknownBlock { block_number: u64, tx_index: u64 },
    #[error("price series is empty")]
    NoPrices,
}

fn line_suffix(line: Option<u64>) -> String {
    line.map(|l| format!(" at line {l}")).unwrap_or_default()
}

/// Non-fatal findings made while parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum IngestWarning {
    NonMonotoneTimestamp { block_number: u64, timestamp: u64, previous: u64 },
}

/// A parsed value together with the warnings raised while producing it.
#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub value: T,
    pub warnings: Vec<IngestWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BlockRecord {
    pub block_number: u64,
    pub timestamp: u64,
    pub miner: Address,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TxRecord {
    pub block_number: u64,
    pub tx_index: u64,
    pub from: Address,
    pub to: Address,
    pub value_wei: u128,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PricePoint {
    pub date: NaiveDate,
    pub usd_per_eth: f64,
}

/// A transaction whose sender and receiver are both miners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinerTx {
    pub block_number: u64,
    pub tx_index: u64,
    pub from: Address,
    pub to: Address,
    pub value_wei: u128,
    pub value_usd: f64,
}

impl MinerTx {
    pub fn to_tx_record(&self) -> TxRecord {
        TxRecord {
            block_number: self.block_number,
            tx_index: self.tx_index,
            from: self.from,
            to: self.to,
            value_wei: self.value_wei,
        }
    }
}

/// Blocks sorted by block number, unique.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlockTable {
    records: Vec<BlockRecord>,
}

impl BlockTable {
    /// Sorts the records and rejects duplicate block numbers.
    pub fn new(records: Vec<BlockRecord>) -> Result<Parsed<Self>, IngestError> {
        let tagged = records.into_iter().map(|r| (r, None)).collect();
        Self::from_tagged(tagged)
    }

    fn from_tagged(mut tagged: Vec<(BlockRecord, Option<u64>)>) -> Result<Parsed<Self>, IngestError> {
        tagged.sort_by_key(|(r, _)| r.block_number);
        for pair in tagged.windows(2) {
            if pair[0].0.block_number == pair[1].0.block_number {
                let line = match (pair[0].1, pair[1].1) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    (a, b) => a.or(b),
                };
                return Err(IngestError::DuplicateBlock { block_number: pair[1].0.block_number, line });
            }
        }
        let records: Vec<BlockRecord> = tagged.into_iter().map(|(r, _)| r).collect();
        let mut warnings = Vec::new();
        for pair in records.windows(2) {
            if pair[1].timestamp < pair[0].timestamp {
                let w = IngestWarning::NonMonotoneTimestamp {
                    block_number: pair[1].block_number,
                    timestamp: pair[1].timestamp,
                    previous: pair[0].timestamp,
                };
                log::warn!("{w:?}");
                warnings.push(w);
            }
        }
        Ok(Parsed { value: BlockTable { records }, warnings })
    }

    pub fn records(&self) -> &[BlockRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, block_number: u64) -> Option<&BlockRecord> {
        self.records
            .binary_search_by_key(&block_number, |r| r.block_number)
            .ok()
            .map(|i| &self.records[i])
    }

    /// Records with `block_number <= upto_block`.
    pub fn upto(&self, upto_block: u64) -> &[BlockRecord] {
        let end = self.records.partition_point(|r| r.block_number <= upto_block);
        &self.records[..end]
    }

    pub fn last_block_number(&self) -> Option<u64> {
        self.records.last().map(|r| r.block_number)
    }
}

/// Distinct miners of the blocks numbered `<= upto_block`.
pub fn miner_set(blocks: &BlockTable, upto_block: u64) -> BTreeSet<Address> {
    blocks.upto(upto_block).iter().map(|r| r.miner).collect()
}

/// Daily ETH/USD rates, sorted by date.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    points: Vec<PricePoint>,
}

impl PriceTable {
    pub fn new(points: Vec<PricePoint>) -> Result<Self, IngestError> {
        let tagged = points.into_iter().map(|p| (p, None)).collect();
        Self::from_tagged(tagged)
    }

    fn from_tagged(mut tagged: Vec<(PricePoint, Option<u64>)>) -> Result<Self, IngestError> {
        if tagged.is_empty() {
            return Err(IngestError::NoPrices);
        }
        for (p, line) in &tagged {
            if !(p.usd_per_eth > 0.0 && p.usd_per_eth.is_finite()) {
                return Err(IngestError::Malformed {
                    line: line.unwrap_or(0),
                    message: format!("usd_per_eth must be positive, found {}", p.usd_per_eth),
                });
            }
        }
        tagged.sort_by_key(|(p, _)| p.date);
        for pair in tagged.windows(2) {
            if pair[0].0.date == pair[1].0.date {
                return Err(IngestError::DuplicatePrice { date: pair[1].0.date, line: pair[1].1 });
            }
        }
        Ok(PriceTable { points: tagged.into_iter().map(|(p, _)| p).collect() })
    }

    pub fn points(&self) -> &[PricePoint] {
        &self.points
    }

    /// Rate on `date`, else the nearest earlier date, else the earliest date.
    pub fn rate_on(&self, date: NaiveDate) -> f64 {
        let idx = self.points.partition_point(|p| p.date <= date);
        if idx == 0 {
            self.points[0].usd_per_eth
        } else {
            self.points[idx - 1].usd_per_eth
        }
    }
}

/// UTC calendar day of a unix timestamp.
pub fn utc_date(timestamp: u64) -> NaiveDate {
    let secs = timestamp.min(MAX_TIMESTAMP) as i64;
    DateTime::from_timestamp(secs, 0).expect("timestamp within range").date_naive()
}

/// Exact-as-possible wei to ETH conversion: integer and fractional ether are
/// converted separately so values above 2^53 wei keep their precision.
pub fn wei_to_eth(value_wei: u128) -> f64 {
    let whole = (value_wei / WEI_PER_ETH) as f64;
    let frac = (value_wei % WEI_PER_ETH) as f64 / WEI_PER_ETH as f64;
    whole + frac
}

/// USD value of `tx` at the UTC date of `block`.
pub fn usd_value(tx: &TxRecord, block: &BlockRecord, prices: &PriceTable) -> f64 {
    wei_to_eth(tx.value_wei) * prices.rate_on(utc_date(block.timestamp))
}

/// Result of splitting a transaction stream into miner-to-miner transfers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterOutcome {
    /// Kept transactions, sorted by `(block_number, tx_index)`.
    pub txs: Vec<MinerTx>,
    /// Transactions with at least one non-miner endpoint.
    pub dropped: u64,
    /// Miner transactions sent to the sender's own address.
    pub self_tally: u64,
}

impl FilterOutcome {
    /// Kept transactions that moved no ether.
    pub fn zero_value_count(&self) -> u64 {
        self.txs.iter().filter(|t| t.value_wei == 0).count() as u64
    }

    pub fn input_count(&self) -> u64 {
        self.txs.len() as u64 + self.dropped + self.self_tally
    }
}

pub fn filter_miner_tx(
    txs: &[TxRecord],
    miners: &BTreeSet<Address>,
    prices: &PriceTable,
    blocks: &BlockTable,
) -> Result<FilterOutcome, IngestError> {
    filter_miner_tx_stream(txs.iter().copied().map(Ok), miners, prices, blocks)
}

/// Streaming form of [`filter_miner_tx`]: the input is consumed once and
/// never buffered.
pub fn filter_miner_tx_stream<I>(
    txs: I,
    miners: &BTreeSet<Address>,
    prices: &PriceTable,
    blocks: &BlockTable,
) -> Result<FilterOutcome, IngestError>
where
    I: IntoIterator<Item = Result<TxRecord, IngestError>>,
{
    let mut out = FilterOutcome::default();
    for tx in txs {
        let tx = tx?;
        let block = blocks.get(tx.block_number).ok_or(IngestError::UnknownBlock {
            block_number: tx.block_number,
            tx_index: tx.tx_index,
        })?;
        if !miners.contains(&tx.from) || !miners.contains(&tx.to) {
            out.dropped += 1;
        } else if tx.from == tx.to {
            out.self_tally += 1;
        } else {
            out.txs.push(MinerTx {
                block_number: tx.block_number,
                tx_index: tx.tx_index,
                from: tx.from,
                to: tx.to,
                value_wei: tx.value_wei,
                value_usd: usd_value(&tx, block, prices),
            });
        }
    }
    out.txs.sort_by_key(|t| (t.block_number, t.tx_index));
    if let Some(pair) = out
        .txs
        .windows(2)
        .find(|p| (p[0].block_number, p[0].tx_index) == (p[1].block_number, p[1].tx_index))
    {
        return Err(IngestError::DuplicateTx { block_number: pair[1].block_number, tx_index: pair[1].tx_index });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// CSV readers

/// Opens a file for reading, transparently gunzipping `*.gz`.
pub fn open_input(path: &Path) -> Result<Box<dyn Read + Send>, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Open { path: path.to_path_buf(), source })?;
    let reader = BufReader::with_capacity(1 << 16, file);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz")) {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(reader))))
    } else {
        Ok(Box::new(reader))
    }
}

fn csv_reader<R: Read>(reader: R, expected: &[&str]) -> Result<csv::Reader<R>, IngestError> {
    let mut rdr = ReaderBuilder::new().has_headers(true).trim(Trim::All).from_reader(reader);
    let header = rdr.byte_headers().map_err(csv_error)?.clone();
    let matches = header.len() == expected.len()
        && header.iter().zip(expected).all(|(h, e)| h.eq_ignore_ascii_case(e.as_bytes()));
    if !matches {
        let found: Vec<String> = header.iter().map(|h| String::from_utf8_lossy(h).into_owned()).collect();
        return Err(IngestError::Header { line: 1, expected: expected.join(","), found: found.join(",") });
    }
    Ok(rdr)
}

fn csv_error(err: csv::Error) -> IngestError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => IngestError::Io(e),
        kind => IngestError::Malformed { line, message: csv_kind_message(&kind) },
    }
}

fn csv_kind_message(kind: &csv::ErrorKind) -> String {
    match kind {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        csv::ErrorKind::Utf8 { .. } => "invalid UTF-8".to_string(),
        other => format!("{other:?}"),
    }
}

fn field(rec: &ByteRecord, idx: usize) -> &[u8] {
    rec.get(idx).unwrap_or_default()
}

fn parse_num<T: std::str::FromStr>(raw: &[u8], name: &str, line: u64) -> Result<T, IngestError> {
    std::str::from_utf8(raw)
        .ok()
        .and_then(|s| s.parse::<T>().ok())
        .ok_or_else(|| IngestError::Malformed {
            line,
            message: format!("invalid {name} `{}`", String::from_utf8_lossy(raw)),
        })
}

fn parse_addr(raw: &[u8], name: &str, line: u64) -> Result<Address, IngestError> {
    Address::parse_bytes(raw).map_err(|e| IngestError::Malformed {
        line,
        message: format!("invalid {name} `{}`: {e}", String::from_utf8_lossy(raw)),
    })
}

fn record_line(rec: &ByteRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

/// Parses `block_number,timestamp,miner` rows.
pub fn parse_blocks<R: Read>(reader: R) -> Result<Parsed<BlockTable>, IngestError> {
    let mut rdr = csv_reader(reader, &BLOCKS_HEADER)?;
    let mut rec = ByteRecord::new();
    let mut tagged = Vec::new();
    while rdr.read_byte_record(&mut rec).map_err(csv_error)? {
        let line = record_line(&rec);
        let block_number = parse_num(field(&rec, 0), "block_number", line)?;
        let timestamp: u64 = parse_num(field(&rec, 1), "timestamp", line)?;
        if timestamp > MAX_TIMESTAMP {
            return Err(IngestError::Malformed { line, message: format!("timestamp {timestamp} out of range") });
        }
        let miner = parse_addr(field(&rec, 2), "miner", line)?;
        tagged.push((BlockRecord { block_number, timestamp, miner }, Some(line)));
    }
    BlockTable::from_tagged(tagged)
}

/// Parses `date,usd_per_eth` rows.
pub fn parse_prices<R: Read>(reader: R) -> Result<PriceTable, IngestError> {
    let mut rdr = csv_reader(reader, &PRICES_HEADER)?;
    let mut rec = ByteRecord::new();
    let mut tagged = Vec::new();
    while rdr.read_byte_record(&mut rec).map_err(csv_error)? {
        let line = record_line(&rec);
        let raw = field(&rec, 0);
        let date = std::str::from_utf8(raw)
            .ok()
            .and_then(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok())
            .ok_or_else(|| IngestError::Malformed {
                line,
                message: format!("invalid date `{}`", String::from_utf8_lossy(raw)),
            })?;
        let usd_per_eth: f64 = parse_num(field(&rec, 1), "usd_per_eth", line)?;
        if !(usd_per_eth > 0.0 && usd_per_eth.is_finite()) {
            return Err(IngestError::Malformed { line, message: format!("usd_per_eth must be positive, found {usd_per_eth}") });
        }
        tagged.push((PricePoint { date, usd_per_eth }, Some(line)));
    }
    PriceTable::from_tagged(tagged)
}

/// Streaming reader over `block_number,tx_index,from_address,to_address,value_wei` rows.
pub struct TxReader<R: Read> {
    rdr: csv::Reader<R>,
    rec: ByteRecord,
    failed: bool,
}

impl<R: Read> TxReader<R> {
    pub fn new(reader: R) -> Result<Self, IngestError> {
        Ok(TxReader { rdr: csv_reader(reader, &TRANSACTIONS_HEADER)?, rec: ByteRecord::new(), failed: false })
    }

    fn read_one(&mut self) -> Result<Option<TxRecord>, IngestError> {
        if !self.rdr.read_byte_record(&mut self.rec).map_err(csv_error)? {
            return Ok(None);
        }
        let rec = &self.rec;
        let line = record_line(rec);
        Ok(Some(TxRecord {
            block_number: parse_num(field(rec, 0), "block_number", line)?,
            tx_index: parse_num(field(rec, 1), "tx_index", line)?,
            from: parse_addr(field(rec, 2), "from_address", line)?,
            to: parse_addr(field(rec, 3), "to_address", line)?,
            value_wei: parse_num(field(rec, 4), "value_wei", line)?,
        }))
    }
}

impl<R: Read> Iterator for TxReader<R> {
    type Item = Result<TxRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.read_one() {
            Ok(Some(tx)) => Some(Ok(tx)),
            Ok(None) => None,
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

/// Reads a whole transaction file into memory. Intended for small inputs.
pub fn parse_transactions<R: Read>(reader: R) -> Result<Vec<TxRecord>, IngestError> {
    TxReader::new(reader)?.collect()
}

// ---------------------------------------------------------------------------
// CSV writers (the normalized form of each input)

pub fn write_blocks<W: Write>(mut w: W, blocks: &[BlockRecord]) -> io::Result<()> {
    writeln!(w, "{}", BLOCKS_HEADER.join(","))?;
    for b in blocks {
        writeln!(w, "{},{},{}", b.block_number, b.timestamp, b.miner)?;
    }
    w.flush()
}

pub fn write_transactions<W: Write>(mut w: W, txs: &[TxRecord]) -> io::Result<()> {
    writeln!(w, "{}", TRANSACTIONS_HEADER.join(","))?;
    for t in txs {
        writeln!(w, "{},{},{},{},{}", t.block_number, t.tx_index, t.from, t.to, t.value_wei)?;
    }
    w.flush()
}

pub fn write_prices<W: Write>(mut w: W, prices: &[PricePoint]) -> io::Result<()> {
    writeln!(w, "{}", PRICES_HEADER.join(","))?;
    for p in prices {
        writeln!(w, "{},{}", p.date.format("%Y-%m-%d"), p.usd_per_eth)?;
    }
    w.flush()
}
