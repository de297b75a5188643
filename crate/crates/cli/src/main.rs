use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use minergraph::export;
use minergraph::ingest::{self, IngestError};
use minergraph::pipeline::{self, AnalysisConfig, Format, InputPaths, PipelineError, SliceSelection};
use minergraph::synth::{self, SynthConfig, SynthError};

/// Exit status for command-line usage errors (sysexits EX_USAGE).
const EXIT_USAGE: u8 = 64;
const EXIT_MISSING_INPUT: u8 = 2;

#[derive(Parser)]
#[command(name = "minergraph", version, about = "Transaction networks between block miners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate inputs and write normalized copies with the miner-to-miner subset.
    Ingest(IngestArgs),
    /// Run the full analysis and write report.json, metrics.csv and per-slice files.
    Analyze(AnalyzeArgs),
    /// Generate a seeded synthetic chain with ground truth.
    Synth(SynthArgs),
    /// Convert a slice's nodes.csv/edges.csv to another format.
    Export(ExportArgs),
    /// Re-check emitted dominating sets, matchings and driver sets.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct InputArgs {
    #[arg(short, long)]
    blocks: PathBuf,
    #[arg(short, long)]
    transactions: PathBuf,
    #[arg(short, long)]
    prices: PathBuf,
}

impl InputArgs {
    fn paths(&self) -> InputPaths {
        InputPaths { blocks: self.blocks.clone(), transactions: self.transactions.clone(), prices: self.prices.clone() }
    }
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = pipeline::DEFAULT_WINDOW_DAYS, value_parser = clap::value_parser!(u64).range(1..))]
    window_days: u64,
    /// `all`, `last`, or a 1-based slice number.
    #[arg(long, default_value = "all")]
    slice: SliceSelection,
    #[arg(long, default_value_t = pipeline::DEFAULT_RESTARTS)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hash-share target of the threshold dominating set.
    #[arg(long, default_value_t = pipeline::DEFAULT_THETA)]
    theta: f64,
    /// Per-slice outputs; repeat or comma-separate for several.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "csv")]
    format: Vec<FormatArg>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Graphml,
    Dot,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
            FormatArg::Graphml => Format::Graphml,
            FormatArg::Dot => Format::Dot,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Fixture,
    Desk,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "fixture")]
    preset: Preset,
    /// Overrides the preset's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON SynthConfig to use instead of a preset.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    /// Directory holding nodes.csv and edges.csv.
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: FormatArg,
    /// Output file; standard output if omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// A slice directory, or an analyze output directory to check every slice.
    dir: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

fn is_missing(e: &io::Error) -> bool {
    e.kind() == io::ErrorKind::NotFound
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::Ingest(IngestError::Open { source, .. }) if is_missing(source) => EXIT_MISSING_INPUT,
            PipelineError::Io { source, .. } if is_missing(source) => EXIT_MISSING_INPUT,
            _ => 1,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        PipelineError::from(e).into()
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        Failure::new(1, e.to_string())
    }
}

fn io_failure(path: &Path) -> impl FnOnce(io::Error) -> Failure + '_ {
    move |e| {
        let code = if is_missing(&e) { EXIT_MISSING_INPUT } else { 1 };
        Failure::new(code, format!("{}: {e}", path.display()))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(io_failure(path))
}

fn run_ingest(args: &IngestArgs) -> Result<(), Failure> {
    let inputs = pipeline::load_inputs(&args.input.paths())?;
    fs::create_dir_all(&args.out).map_err(io_failure(&args.out))?;
    let path = args.out.join("blocks.csv");
    ingest::write_blocks(create(&path)?, inputs.blocks.records()).map_err(io_failure(&path))?;
    let path = args.out.join("prices.csv");
    ingest::write_prices(create(&path)?, inputs.prices.points()).map_err(io_failure(&path))?;
    let path = args.out.join("miner_transactions.csv");
    let mut w = create(&path)?;
    let write_txs = |w: &mut BufWriter<File>| -> io::Result<()> {
        writeln!(w, "{},value_usd", ingest::TRANSACTIONS_HEADER.join(","))?;
        for t in &inputs.filtered.txs {
            writeln!(w, "{},{},{},{},{},{}", t.block_number, t.tx_index, t.from, t.to, t.value_wei, t.value_usd)?;
        }
        w.flush()
    };
    write_txs(&mut w).map_err(io_failure(&path))?;
    let summary = serde_json::json!({
        "blocks": inputs.blocks.len(),
        "price_points": inputs.prices.points().len(),
        "transactions": inputs.filtered.input_count(),
        "miner_transactions": inputs.filtered.txs.len(),
        "dropped_transactions": inputs.filtered.dropped,
        "self_transactions": inputs.filtered.self_tally,
        "zero_value_transactions": inputs.filtered.zero_value_count(),
        "warnings": inputs.warnings,
    });
    let path = args.out.join("ingest_summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary).expect("json value") + "\n").map_err(io_failure(&path))?;
    for w in &inputs.warnings {
        log::warn!("{w:?}");
    }
    println!(
        "{} blocks, {} transactions, {} between miners",
        inputs.blocks.len(),
        inputs.filtered.input_count(),
        inputs.filtered.txs.len()
    );
    Ok(())
}

fn run_analyze(args: &AnalyzeArgs) -> Result<(), Failure> {
    let mut formats: Vec<Format> = args.format.iter().copied().map(Format::from).collect();
    formats.sort();
    formats.dedup();
    let config = AnalysisConfig {
        window_days: args.window_days,
        slices: args.slice,
        restarts: args.restarts,
        seed: args.seed,
        theta: args.theta,
        formats,
        workers: args.workers.map(|w| w as usize),
    };
    let report = pipeline::run_pipeline(&args.input.paths(), &args.out, &config)?;
    info!("wrote {}", args.out.display());
    println!("analysed {} of {} slices into {}", report.slices.len(), report.slice_count, args.out.display());
    Ok(())
}

fn run_synth(args: &SynthArgs) -> Result<(), Failure> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_failure(path))?;
            serde_json::from_str::<SynthConfig>(&text).map_err(|e| Failure::new(1, format!("{}: {e}", path.display())))?
        }
        None => match args.preset {
            Preset::Fixture => SynthConfig::fixture(),
            Preset::Desk => SynthConfig::desk_scale(0),
        },
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let chain = synth::generate_chain(&config)?;
    synth::write_chain(&args.out, &chain, &config)?;
    println!("{} blocks, {} transactions, {} miners", chain.blocks.len(), chain.txs.len(), chain.truth.miners.len());
    Ok(())
}

fn run_export(args: &ExportArgs) -> Result<(), Failure> {
    let open = |name: &str| {
        let path = args.input.join(name);
        File::open(&path).map(io::BufReader::new).map_err(io_failure(&path))
    };
    let (net, stats) = export::parse_network_csv(open("nodes.csv")?, open("edges.csv")?)
        .map_err(|e| Failure::new(1, format!("{}: {e}", args.input.display())))?;
    let mut out: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(create(path)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let written = match args.format {
        FormatArg::Csv => export::write_edges_csv(&mut out, &net),
        FormatArg::Json => export::write_network_json(&mut out, &net, &stats),
        FormatArg::Graphml => export::write_graphml(&mut out, &net, &stats),
        FormatArg::Dot => export::write_dot(&mut out, &net, &stats),
    };
    written.map_err(|e| Failure::new(1, e.to_string()))?;
    out.flush().map_err(|e| Failure::new(1, e.to_string()))
}

fn run_verify(args: &VerifyArgs) -> Result<(), Failure> {
    if !args.dir.is_dir() {
        return Err(Failure::new(EXIT_MISSING_INPUT, format!("{}: not a directory", args.dir.display())));
    }
    let slices = args.dir.join("slices");
    let dirs: Vec<PathBuf> = if slices.is_dir() {
        let mut dirs: Vec<PathBuf> = fs::read_dir(&slices)
            .map_err(io_failure(&slices))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        dirs
    } else {
        vec![args.dir.clone()]
    };
    let mut failed = 0;
    for dir in &dirs {
        for check in pipeline::verify_slice_dir(dir)? {
            let status = if check.ok { "ok" } else { "FAILED" };
            println!("{}: {} {status}: {}", dir.display(), check.name, check.detail);
            if !check.ok {
                failed += 1;
            }
        }
    }
    if failed > 0 {
        return Err(Failure::new(1, format!("{failed} check(s) failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("MINERGRAPH_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Ingest(a) => run_ingest(a),
        Command::Analyze(a) => run_analyze(a),
        Command::Synth(a) => run_synth(a),
        Command::Export(a) => run_export(a),
        Command::Verify(a) => run_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("minergraph: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
