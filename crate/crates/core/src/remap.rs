//! Storing a distributed matrix as a rank file set and loading it back,
//! either under the storing configuration (each rank reads its own file) or
//! under any other one (each rank reads every file and keeps the elements the
//! mapping assigns to it).

use std::fs;
use std::ops::{Add, AddAssign};
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::container::{self, matrix_dir, rank_file_name, ContainerError, RankFileSet};
use crate::decode::{for_each_block_row, load_rank_file, DecodeError};
use crate::encode::{encode_rank, EncodeError};
use crate::mapping::{Manifest, MappingError, MappingFn};
use crate::sparse::{
    compute_extent, coo_to_csr, CooMatrix, CsrMatrix, Element, PartitionExtent, SparseError,
};

#[derive(Debug, Error)]
pub enum RemapError {
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("rank {rank} file: {source}")]
    Decode {
        rank: usize,
        #[source]
        source: DecodeError,
    },
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} already exists")]
    AlreadyExists(std::path::PathBuf),
    #[error("mapping sent ({row}, {col}) to rank {rank}, but only {ranks} ranks load")]
    RankOutOfRange {
        row: usize,
        col: usize,
        rank: usize,
        ranks: usize,
    },
    #[error("rank {rank} is outside 0..{ranks}")]
    NoSuchRank { rank: usize, ranks: usize },
    #[error("element ({row}, {col}) is stored by more than one rank")]
    DuplicateAcrossFiles { row: usize, col: usize },
    #[error("load configuration has {q} ranks but its mapping assigns {mapped}")]
    RankCount { q: usize, mapped: usize },
    #[error("{0} worker threads requested; need at least 1")]
    Jobs(usize),
}

type Result<T> = std::result::Result<T, RemapError>;

/// In-memory layout of a loaded rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csr,
    Coo,
}

#[derive(Debug, Clone)]
pub struct LoadConfig {
    q: usize,
    mapping: MappingFn,
    format: OutputFormat,
}

impl LoadConfig {
    pub fn new(q: usize, mapping: MappingFn, format: OutputFormat) -> Result<Self> {
        if q == 0 || mapping.ranks() != q {
            return Err(RemapError::RankCount {
                q,
                mapped: mapping.ranks(),
            });
        }
        Ok(LoadConfig { q, mapping, format })
    }

    pub fn ranks(&self) -> usize {
        self.q
    }

    pub fn mapping(&self) -> &MappingFn {
        &self.mapping
    }

    pub fn format(&self) -> OutputFormat {
        self.format
    }
}

/// Per-rank I/O and filtering counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IoStats {
    pub file_opens: u64,
    pub bytes_read: u64,
    pub accepted: u64,
    pub rejected: u64,
}

impl Add for IoStats {
    type Output = IoStats;
    fn add(self, o: IoStats) -> IoStats {
        IoStats {
            file_opens: self.file_opens + o.file_opens,
            bytes_read: self.bytes_read + o.bytes_read,
            accepted: self.accepted + o.accepted,
            rejected: self.rejected + o.rejected,
        }
    }
}

impl AddAssign for IoStats {
    fn add_assign(&mut self, o: IoStats) {
        *self = *self + o;
    }
}

impl std::iter::Sum for IoStats {
    fn sum<I: Iterator<Item = IoStats>>(iter: I) -> IoStats {
        iter.fold(IoStats::default(), Add::add)
    }
}

/// A loaded rank.
#[derive(Debug, Clone, PartialEq)]
pub enum RankOutput {
    Csr(CsrMatrix),
    /// Global coordinates, sorted lexicographically.
    Coo(Vec<Element>),
}

impl RankOutput {
    pub fn nnz(&self) -> usize {
        match self {
            RankOutput::Csr(c) => c.z_local,
            RankOutput::Coo(v) => v.len(),
        }
    }

    /// Elements in global coordinates, sorted.
    pub fn global_elements(&self) -> Vec<Element> {
        match self {
            RankOutput::Csr(c) => c.global_elements().collect(),
            RankOutput::Coo(v) => v.clone(),
        }
    }
}

/// Per-rank outcome of a store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredRank {
    pub extent: PartitionExtent,
    pub z_local: usize,
    pub blocks: u64,
    pub file_bytes: u64,
}

/// Groups elements by owning rank, keeping the input order within a rank.
pub fn partition_by_mapping(
    elements: &[Element],
    mapping: &MappingFn,
) -> Result<Vec<Vec<Element>>> {
    let ranks = mapping.ranks();
    let mut parts = vec![Vec::new(); ranks];
    for e in elements {
        let rank = mapping.rank_of(e.row, e.col);
        if rank >= ranks {
            return Err(RemapError::RankOutOfRange {
                row: e.row,
                col: e.col,
                rank,
                ranks,
            });
        }
        parts[rank].push(*e);
    }
    Ok(parts)
}

/// Writes `root/matrix/matrix-<k>.h5spm` for every rank of `mapping` plus the
/// manifest. The matrix directory must not exist yet and is removed again if
/// any step fails.
pub fn store_matrix(
    matrix: &CooMatrix,
    mapping: &MappingFn,
    block_size: usize,
    root: &Path,
) -> Result<Vec<StoredRank>> {
    mapping.check_covers(matrix.rows(), matrix.cols())?;
    let dir = matrix_dir(root);
    if dir.exists() {
        return Err(RemapError::AlreadyExists(dir));
    }
    fs::create_dir_all(&dir).map_err(|source| RemapError::Io {
        path: dir.clone(),
        source,
    })?;
    let result = store_into(matrix, mapping, block_size, &dir);
    if result.is_err() {
        let _ = fs::remove_dir_all(&dir);
    }
    result
}

fn store_into(
    matrix: &CooMatrix,
    mapping: &MappingFn,
    block_size: usize,
    dir: &Path,
) -> Result<Vec<StoredRank>> {
    let header = matrix.header();
    let parts = partition_by_mapping(matrix.elements(), mapping)?;
    let mut stored = Vec::with_capacity(parts.len());
    for (rank, part) in parts.iter().enumerate() {
        let extent = compute_extent(part);
        let locals: Vec<Element> = part.iter().map(|e| extent.localize(e)).collect();
        let payload = encode_rank(&locals, extent, header, block_size)?;
        let file_bytes = container::write_rank_file(&dir.join(rank_file_name(rank)), &payload)?;
        stored.push(StoredRank {
            extent,
            z_local: part.len(),
            blocks: payload.blocks,
            file_bytes,
        });
    }
    Manifest::new(mapping)
        .write(dir)
        .map_err(|source| RemapError::Io {
            path: dir.join(crate::mapping::MANIFEST_FILE),
            source,
        })?;
    Ok(stored)
}

fn check_rank(set: &RankFileSet, rank: usize) -> Result<()> {
    if rank >= set.rank_count() {
        return Err(RemapError::NoSuchRank {
            rank,
            ranks: set.rank_count(),
        });
    }
    Ok(())
}

/// Same-configuration load: rank `k` reads only its own file.
pub fn direct_load(set: &RankFileSet, rank: usize) -> Result<(CsrMatrix, IoStats)> {
    check_rank(set, rank)?;
    let (payload, bytes) = container::read_rank_file_sized(&set.path(rank))?;
    let csr = load_rank_file(&payload).map_err(|source| RemapError::Decode { rank, source })?;
    let stats = IoStats {
        file_opens: 1,
        bytes_read: bytes,
        accepted: csr.z_local as u64,
        rejected: 0,
    };
    Ok((csr, stats))
}

/// Cross-configuration load for rank `rank` of `config`: every stored file
/// is decoded and only elements with `M(i, j) = rank` are kept.
pub fn cross_config_load(
    set: &RankFileSet,
    config: &LoadConfig,
    rank: usize,
) -> Result<(RankOutput, IoStats)> {
    let q = config.ranks();
    if rank >= q {
        return Err(RemapError::NoSuchRank { rank, ranks: q });
    }
    let mapping = config.mapping();
    mapping.check_covers(set.header.m, set.header.n)?;

    let mut stats = IoStats::default();
    let mut kept = Vec::new();
    for stored in 0..set.rank_count() {
        let (payload, bytes) = container::read_rank_file_sized(&set.path(stored))?;
        stats.file_opens += 1;
        stats.bytes_read += bytes;
        let extent = payload.extent();
        let mut out_of_range = None;
        for_each_block_row(&payload, |_, elements| {
            for e in elements {
                let g = extent.globalize(e);
                let owner = mapping.rank_of(g.row, g.col);
                if owner == rank {
                    kept.push(g);
                    stats.accepted += 1;
                } else {
                    if owner >= q && out_of_range.is_none() {
                        out_of_range = Some((g, owner));
                    }
                    stats.rejected += 1;
                }
            }
            Ok(())
        })
        .map_err(|source| RemapError::Decode {
            rank: stored,
            source,
        })?;
        if let Some((g, owner)) = out_of_range {
            return Err(RemapError::RankOutOfRange {
                row: g.row,
                col: g.col,
                rank: owner,
                ranks: q,
            });
        }
    }

    kept.sort_by_key(Element::key);
    if let Some(w) = kept.windows(2).find(|w| w[0].key() == w[1].key()) {
        return Err(RemapError::DuplicateAcrossFiles {
            row: w[0].row,
            col: w[0].col,
        });
    }
    let output = match config.format() {
        OutputFormat::Coo => RankOutput::Coo(kept),
        OutputFormat::Csr => {
            let extent = compute_extent(&kept);
            let locals: Vec<Element> = kept.iter().map(|e| extent.localize(e)).collect();
            RankOutput::Csr(coo_to_csr(&locals, extent, set.header)?)
        }
    };
    Ok((output, stats))
}

/// Which load algorithm a session ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadPath {
    /// Storing and loading configurations match; one file per rank.
    Direct,
    /// Every rank reads every file.
    AllFiles,
}

impl LoadPath {
    pub fn label(self) -> &'static str {
        match self {
            LoadPath::Direct => "direct",
            LoadPath::AllFiles => "all-files",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    pub path: LoadPath,
    pub outputs: Vec<RankOutput>,
    pub stats: Vec<IoStats>,
    /// Wall time of each rank's load.
    pub elapsed: Vec<Duration>,
}

impl Session {
    pub fn totals(&self) -> IoStats {
        self.stats.iter().copied().sum()
    }

    /// Union of all ranks' elements in global coordinates, sorted.
    pub fn union(&self) -> Vec<Element> {
        let mut all: Vec<Element> = self
            .outputs
            .iter()
            .flat_map(|o| o.global_elements())
            .collect();
        all.sort_by_key(Element::key);
        all
    }
}

/// Selects the load path from the stored manifest.
pub fn select_path(set: &RankFileSet, config: &LoadConfig) -> Result<LoadPath> {
    let manifest = Manifest::read(&set.dir)?;
    let matched =
        manifest.is_some_and(|m| m.ranks == set.rank_count() && m.matches(config.mapping()));
    Ok(if matched {
        LoadPath::Direct
    } else {
        LoadPath::AllFiles
    })
}

/// Loads every rank of `config`, running up to `jobs` ranks at a time.
pub fn run_session(set: &RankFileSet, config: &LoadConfig, jobs: usize) -> Result<Session> {
    if jobs == 0 {
        return Err(RemapError::Jobs(jobs));
    }
    let path = select_path(set, config)?;
    let load_one = |rank: usize| -> Result<(RankOutput, IoStats, Duration)> {
        let start = Instant::now();
        let (out, stats) = match path {
            LoadPath::Direct => {
                let (csr, stats) = direct_load(set, rank)?;
                let out = match config.format() {
                    OutputFormat::Csr => RankOutput::Csr(csr),
                    OutputFormat::Coo => RankOutput::Coo(csr.global_elements().collect()),
                };
                (out, stats)
            }
            LoadPath::AllFiles => cross_config_load(set, config, rank)?,
        };
        Ok((out, stats, start.elapsed()))
    };
    let results: Vec<(RankOutput, IoStats, Duration)> = if jobs == 1 {
        (0..config.ranks()).map(load_one).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool");
        pool.install(|| {
            (0..config.ranks())
                .into_par_iter()
                .map(load_one)
                .collect::<Result<_>>()
        })?
    };
    let mut session = Session {
        path,
        outputs: Vec::with_capacity(results.len()),
        stats: Vec::with_capacity(results.len()),
        elapsed: Vec::with_capacity(results.len()),
    };
    for (out, stats, elapsed) in results {
        session.outputs.push(out);
        session.stats.push(stats);
        session.elapsed.push(elapsed);
    }
    Ok(session)
}

/// Nonzeros per global row across the whole file set. Reads every file.
pub fn row_histogram(set: &RankFileSet) -> Result<(Vec<u64>, IoStats)> {
    let mut hist = vec![0u64; set.header.m];
    let mut stats = IoStats::default();
    for rank in 0..set.rank_count() {
        let (payload, bytes) = container::read_rank_file_sized(&set.path(rank))?;
        stats.file_opens += 1;
        stats.bytes_read += bytes;
        let offset = payload.m_offset as usize;
        for_each_block_row(&payload, |_, elements| {
            for e in elements {
                hist[e.row + offset] += 1;
            }
            Ok(())
        })
        .map_err(|source| RemapError::Decode { rank, source })?;
    }
    Ok((hist, stats))
}

/// One difference between an expected and a loaded element multiset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Discrepancy {
    Missing(Element),
    Unexpected(Element),
    Value {
        row: usize,
        col: usize,
        expected: f64,
        found: f64,
    },
}

impl std::fmt::Display for Discrepancy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Discrepancy::Missing(e) => write!(f, "missing ({}, {}) = {:e}", e.row, e.col, e.val),
            Discrepancy::Unexpected(e) => {
                write!(f, "unexpected ({}, {}) = {:e}", e.row, e.col, e.val)
            }
            Discrepancy::Value {
                row,
                col,
                expected,
                found,
            } => write!(f, "({row}, {col}): expected {expected:e}, found {found:e}"),
        }
    }
}

/// Compares two sorted element lists, values by bit pattern.
pub fn compare_elements(expected: &[Element], found: &[Element]) -> Vec<Discrepancy> {
    let mut out = Vec::new();
    let (mut a, mut b) = (0, 0);
    while a < expected.len() || b < found.len() {
        match (expected.get(a), found.get(b)) {
            (Some(x), Some(y)) if x.key() == y.key() => {
                if x.val.to_bits() != y.val.to_bits() {
                    out.push(Discrepancy::Value {
                        row: x.row,
                        col: x.col,
                        expected: x.val,
                        found: y.val,
                    });
                }
                a += 1;
                b += 1;
            }
            (Some(x), Some(y)) if x.key() < y.key() => {
                out.push(Discrepancy::Missing(*x));
                a += 1;
            }
            (Some(_), Some(y)) | (None, Some(y)) => {
                out.push(Discrepancy::Unexpected(*y));
                b += 1;
            }
            (Some(x), None) => {
                out.push(Discrepancy::Missing(*x));
                a += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    out
}
