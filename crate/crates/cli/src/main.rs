//! `abhsf`: generate sparse matrices, store them as per-rank file sets and
//! load or verify them under any process count and mapping.
//!
//! Exit codes: 0 success, 1 verification mismatch, 2 usage error, 3 I/O or
//! format error.

mod report;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use abhsf::container::{self, matrix_dir, open_file_set, parse_entry_table, RankFileSet};
use abhsf::kron::{demo_seed, kronecker_enlarge, DEFAULT_MAX_NNZ};
use abhsf::mapping::{build_column_regular, build_row_balanced, Manifest, MappingFn};
use abhsf::mm::{read_matrix_market, write_matrix_market};
use abhsf::remap::{
    compare_elements, row_histogram, run_session, store_matrix, LoadConfig, OutputFormat, Session,
};
use abhsf::scheme::SchemeTag;
use abhsf::sparse::{CooMatrix, Element};
use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use report::{BenchRecord, Table};

#[derive(Parser)]
#[command(
    name = "abhsf",
    version,
    about = "Store and load distributed sparse matrices in per-rank block files"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enlarge a seed matrix by Kronecker powers and write it as Matrix Market.
    Gen(GenArgs),
    /// Partition a Matrix Market file among ranks and write one file per rank.
    Store(StoreArgs),
    /// Load a stored file set under a process count and mapping.
    Load(LoadArgs),
    /// Load a stored file set and compare it against the original matrix.
    Verify(VerifyArgs),
    /// Print the entry table and header attributes of one rank file.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MappingKind {
    #[value(name = "row_balanced")]
    RowBalanced,
    #[value(name = "column_regular")]
    ColumnRegular,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csr,
    Coo,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csr => OutputFormat::Csr,
            FormatArg::Coo => OutputFormat::Coo,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    /// Seed matrix in Matrix Market format; the built-in 8x8 demo seed when omitted.
    #[arg(long)]
    seed: Option<PathBuf>,
    /// Kronecker power applied to the seed.
    #[arg(long, default_value_t = 2)]
    power: u32,
    /// Refuse to generate more nonzeros than this.
    #[arg(long, default_value_t = DEFAULT_MAX_NNZ)]
    max_nnz: usize,
    /// Output Matrix Market file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StoreArgs {
    /// Matrix Market input.
    matrix: PathBuf,
    /// Number of storing ranks.
    #[arg(long)]
    ranks: usize,
    #[arg(long, value_enum, default_value = "row_balanced")]
    mapping: MappingKind,
    /// Block edge length s.
    #[arg(long, default_value_t = 64)]
    block_size: usize,
    /// Root directory; rank files go to <out>/matrix.
    #[arg(long)]
    out: PathBuf,
    /// Replace an existing <out>/matrix directory.
    #[arg(long)]
    force: bool,
    /// Also write the per-rank report to this CSV file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SessionArgs {
    /// Number of loading ranks.
    #[arg(long)]
    ranks: usize,
    #[arg(long, value_enum, default_value = "row_balanced")]
    mapping: MappingKind,
    /// In-memory format of each loaded rank.
    #[arg(long, value_enum, default_value = "csr")]
    format: FormatArg,
    /// Maximum number of ranks loaded concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Also write the report to this CSV file.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Scenario label written to the report.
    #[arg(long)]
    label: Option<String>,
}

#[derive(Args)]
struct LoadArgs {
    /// Root directory holding matrix/.
    dir: PathBuf,
    #[command(flatten)]
    session: SessionArgs,
    /// Write the loaded elements, sorted by global coordinates, as Matrix Market.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Original Matrix Market file.
    matrix: PathBuf,
    /// Root directory holding matrix/.
    dir: PathBuf,
    #[command(flatten)]
    session: SessionArgs,
}

#[derive(Args)]
struct InspectArgs {
    /// A rank file.
    file: PathBuf,
    /// Also list every block descriptor.
    #[arg(long)]
    blocks: bool,
}

/// Why a command failed, mapped onto the exit code.
enum Failure {
    Usage(anyhow::Error),
    Mismatch(String),
    Io(anyhow::Error),
}

impl Failure {
    fn usage(e: impl Into<anyhow::Error>) -> Self {
        Failure::Usage(e.into())
    }

    fn io(e: impl Into<anyhow::Error>) -> Self {
        Failure::Io(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Store(a) => cmd_store(a),
        Command::Load(a) => cmd_load(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Inspect(a) => cmd_inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Mismatch(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn read_matrix(path: &Path) -> Result<CooMatrix, Failure> {
    let file = File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(Failure::io)?;
    read_matrix_market(BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::io)
}

fn write_matrix(path: &Path, matrix: &CooMatrix) -> Outcome {
    let file = File::create(path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(Failure::io)?;
    let mut w = BufWriter::new(file);
    write_matrix_market(&mut w, matrix)
        .and_then(|_| w.flush())
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::io)
}

fn cmd_gen(a: GenArgs) -> Outcome {
    let seed = match &a.seed {
        Some(path) => read_matrix(path)?,
        None => demo_seed(),
    };
    let matrix = kronecker_enlarge(&seed, a.power, a.max_nnz).map_err(Failure::usage)?;
    write_matrix(&a.out, &matrix)?;
    println!(
        "wrote {}x{} matrix with {} nonzeros to {}",
        matrix.rows(),
        matrix.cols(),
        matrix.nnz(),
        a.out.display()
    );
    Ok(())
}

fn build_mapping(
    kind: MappingKind,
    ranks: usize,
    row_nnz: impl FnOnce() -> Result<Vec<u64>, Failure>,
    cols: usize,
) -> Result<MappingFn, Failure> {
    if ranks == 0 {
        return Err(Failure::usage(anyhow!("--ranks must be at least 1")));
    }
    match kind {
        MappingKind::RowBalanced => build_row_balanced(&row_nnz()?, ranks).map_err(Failure::usage),
        MappingKind::ColumnRegular => build_column_regular(cols, ranks).map_err(Failure::usage),
    }
}

fn cmd_store(a: StoreArgs) -> Outcome {
    if a.block_size == 0 {
        return Err(Failure::usage(anyhow!("--block-size must be at least 1")));
    }
    let matrix = read_matrix(&a.matrix)?;
    let mapping = build_mapping(
        a.mapping,
        a.ranks,
        || Ok(matrix.row_histogram()),
        matrix.cols(),
    )?;
    let dir = matrix_dir(&a.out);
    if a.force && dir.exists() {
        fs::remove_dir_all(&dir)
            .with_context(|| format!("removing {}", dir.display()))
            .map_err(Failure::io)?;
    }
    let stored = store_matrix(&matrix, &mapping, a.block_size, &a.out).map_err(|e| match e {
        abhsf::RemapError::Encode(_) | abhsf::RemapError::Mapping(_) => Failure::usage(e),
        abhsf::RemapError::AlreadyExists(ref p) => Failure::usage(anyhow!(
            "{} already exists; pass --force to replace it",
            p.display()
        )),
        e => Failure::io(e),
    })?;

    let mut table = Table::new(&[
        "rank",
        "z_local",
        "m_offset",
        "n_offset",
        "m_local",
        "n_local",
        "blocks",
        "file_bytes",
    ]);
    for (k, r) in stored.iter().enumerate() {
        table.row([
            k.to_string(),
            r.z_local.to_string(),
            r.extent.m_offset.to_string(),
            r.extent.n_offset.to_string(),
            r.extent.m_local.to_string(),
            r.extent.n_local.to_string(),
            r.blocks.to_string(),
            r.file_bytes.to_string(),
        ]);
    }
    table.row([
        "total".to_string(),
        stored.iter().map(|r| r.z_local).sum::<usize>().to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        stored.iter().map(|r| r.blocks).sum::<u64>().to_string(),
        stored.iter().map(|r| r.file_bytes).sum::<u64>().to_string(),
    ]);
    table.emit(a.csv.as_deref()).map_err(Failure::io)
}

fn open_set(root: &Path) -> Result<(RankFileSet, Option<Manifest>), Failure> {
    let set = open_file_set(root).map_err(Failure::io)?;
    let manifest = Manifest::read(&set.dir).map_err(Failure::io)?;
    Ok((set, manifest))
}

/// Loading mapping for a stored set. A row-balanced mapping with the stored
/// rank count is taken from the manifest; any other row-balanced mapping
/// needs the row histogram, read from the files in a planning pass that is
/// not part of the reported statistics.
fn session_mapping(
    args: &SessionArgs,
    set: &RankFileSet,
    manifest: Option<&Manifest>,
) -> Result<MappingFn, Failure> {
    if args.mapping == MappingKind::RowBalanced {
        if let Some(m) = manifest
            .filter(|m| m.ranks == args.ranks)
            .and_then(Manifest::mapping)
        {
            if matches!(m, MappingFn::RowBalanced { .. }) {
                return Ok(m);
            }
        }
    }
    let histogram = || row_histogram(set).map(|(h, _)| h).map_err(Failure::io);
    build_mapping(args.mapping, args.ranks, histogram, set.header.n)
}

fn run(args: &SessionArgs, set: &RankFileSet, mapping: MappingFn) -> Result<Session, Failure> {
    if args.jobs == 0 {
        return Err(Failure::usage(anyhow!("--jobs must be at least 1")));
    }
    let config =
        LoadConfig::new(args.ranks, mapping, args.format.into()).map_err(Failure::usage)?;
    run_session(set, &config, args.jobs).map_err(Failure::io)
}

fn records(
    scenario: &str,
    set: &RankFileSet,
    manifest: Option<&Manifest>,
    mapping: &MappingFn,
    session: &Session,
    statuses: &[&'static str],
) -> Vec<BenchRecord> {
    let stored_mapping = manifest.map_or("unknown".to_string(), |m| m.mapping.kind.clone());
    let base = |rank: String| BenchRecord {
        scenario: scenario.to_string(),
        rank,
        p: set.rank_count(),
        q: session.outputs.len(),
        stored_mapping: stored_mapping.clone(),
        load_mapping: mapping.kind().to_string(),
        path: session.path.label(),
        ..Default::default()
    };
    let mut out: Vec<BenchRecord> = (0..session.outputs.len())
        .map(|k| BenchRecord {
            seconds: session.elapsed[k].as_secs_f64(),
            stats: session.stats[k],
            nnz: session.outputs[k].nnz(),
            status: statuses[k],
            ..base(k.to_string())
        })
        .collect();
    out.push(BenchRecord {
        seconds: session
            .elapsed
            .iter()
            .map(|d| d.as_secs_f64())
            .fold(0.0, f64::max),
        stats: session.totals(),
        nnz: session.outputs.iter().map(|o| o.nnz()).sum(),
        status: statuses[session.outputs.len()],
        ..base("total".to_string())
    });
    out
}

fn cmd_load(a: LoadArgs) -> Outcome {
    let (set, manifest) = open_set(&a.dir)?;
    let mapping = session_mapping(&a.session, &set, manifest.as_ref())?;
    let session = run(&a.session, &set, mapping.clone())?;
    if let Some(path) = &a.dump {
        let union = session.union();
        let matrix = CooMatrix::new(set.header.m, set.header.n, union).map_err(Failure::io)?;
        write_matrix(path, &matrix)?;
    }
    let statuses = vec!["ok"; session.outputs.len() + 1];
    let label = a.session.label.as_deref().unwrap_or("load");
    let rows = records(
        label,
        &set,
        manifest.as_ref(),
        &mapping,
        &session,
        &statuses,
    );
    report::emit(&rows, a.session.csv.as_deref()).map_err(Failure::io)
}

fn cmd_verify(a: VerifyArgs) -> Outcome {
    let started = Instant::now();
    let original = read_matrix(&a.matrix)?;
    let (set, manifest) = open_set(&a.dir)?;
    if (set.header.m, set.header.n) != (original.rows(), original.cols()) {
        return Err(Failure::Mismatch(format!(
            "stored matrix is {}x{}, original is {}x{}",
            set.header.m,
            set.header.n,
            original.rows(),
            original.cols()
        )));
    }
    let mapping = build_mapping(
        a.session.mapping,
        a.session.ranks,
        || Ok(original.row_histogram()),
        original.cols(),
    )?;
    let session = run(&a.session, &set, mapping.clone())?;

    let mut expected: Vec<Vec<Element>> = vec![Vec::new(); session.outputs.len()];
    for e in original.elements() {
        expected[mapping.rank_of(e.row, e.col)].push(*e);
    }
    let mut statuses: Vec<&'static str> = session
        .outputs
        .iter()
        .zip(&expected)
        .map(|(out, exp)| {
            if compare_elements(exp, &out.global_elements()).is_empty() {
                "ok"
            } else {
                "mismatch"
            }
        })
        .collect();
    let discrepancies = compare_elements(original.elements(), &session.union());
    statuses.push(if discrepancies.is_empty() {
        "ok"
    } else {
        "mismatch"
    });

    let label = a.session.label.as_deref().unwrap_or("verify");
    let rows = records(
        label,
        &set,
        manifest.as_ref(),
        &mapping,
        &session,
        &statuses,
    );
    report::emit(&rows, a.session.csv.as_deref()).map_err(Failure::io)?;

    if discrepancies.is_empty() {
        eprintln!(
            "verified {} nonzeros across {} ranks in {:.3} s",
            original.nnz(),
            session.outputs.len(),
            started.elapsed().as_secs_f64()
        );
        return Ok(());
    }
    for d in discrepancies.iter().take(10) {
        eprintln!("  {d}");
    }
    let noun = if discrepancies.len() == 1 {
        "discrepancy"
    } else {
        "discrepancies"
    };
    Err(Failure::Mismatch(format!("{} {noun}", discrepancies.len())))
}

fn cmd_inspect(a: InspectArgs) -> Outcome {
    let bytes = fs::read(&a.file)
        .with_context(|| format!("reading {}", a.file.display()))
        .map_err(Failure::io)?;
    let table = parse_entry_table(&bytes)
        .with_context(|| a.file.display().to_string())
        .map_err(Failure::io)?;
    println!(
        "{}: {} bytes, {} entries",
        a.file.display(),
        bytes.len(),
        table.len()
    );
    println!(
        "{:<16} {:<9} {:<5} {:>10} {:>10}",
        "name", "kind", "dtype", "count", "offset"
    );
    for e in &table {
        println!(
            "{:<16} {:<9} {:<5} {:>10} {:>10}",
            e.name, e.kind, e.dtype, e.count, e.byte_offset
        );
    }
    let p = container::decode_file(&bytes)
        .with_context(|| a.file.display().to_string())
        .map_err(Failure::io)?;
    println!();
    for (name, v) in [
        ("m", p.m),
        ("n", p.n),
        ("z", p.z),
        ("m_local", p.m_local),
        ("n_local", p.n_local),
        ("z_local", p.z_local),
        ("m_offset", p.m_offset),
        ("n_offset", p.n_offset),
        ("block_size", p.block_size),
        ("blocks", p.blocks),
    ] {
        println!("{name:<10} = {v}");
    }
    let counts = p.scheme_counts();
    println!();
    println!("{:<7} {:>8} {:>10}", "scheme", "blocks", "nonzeros");
    for tag in SchemeTag::ALL {
        let i = tag as usize;
        println!(
            "{:<7} {:>8} {:>10}",
            tag.name(),
            counts.blocks[i],
            counts.nonzeros[i]
        );
    }
    if a.blocks {
        println!();
        println!(
            "{:>8} {:>8} {:>8} {:<7} {:>8}",
            "block", "brow", "bcol", "scheme", "zeta"
        );
        for k in 0..p.blocks as usize {
            let tag = SchemeTag::from_u8(p.schemes[k]).map_or("?", SchemeTag::name);
            println!(
                "{:>8} {:>8} {:>8} {:<7} {:>8}",
                k, p.brows[k], p.bcols[k], tag, p.zetas[k]
            );
        }
    }
    Ok(())
}
