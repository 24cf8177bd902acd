//! Element-to-rank mapping functions and the store-time manifest.

use std::fmt;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MappingError {
    #[error("cannot split {len} {what} among {ranks} ranks")]
    TooManyRanks {
        ranks: usize,
        len: usize,
        what: &'static str,
    },
    #[error("rank count must be at least 1")]
    NoRanks,
    #[error("row histogram holds no nonzeros")]
    EmptyHistogram,
    #[error("invalid row boundaries: {0}")]
    Boundaries(String),
    #[error("explicit table has {found} owners for a {rows}x{cols} matrix")]
    TableSize {
        rows: usize,
        cols: usize,
        found: usize,
    },
    #[error("explicit table assigns rank {rank} with only {ranks} ranks")]
    TableRank { rank: u32, ranks: usize },
    #[error("mapping covers {mapped_rows}x{mapped_cols}, matrix is {rows}x{cols}")]
    Coverage {
        mapped_rows: String,
        mapped_cols: String,
        rows: usize,
        cols: usize,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("unknown mapping {0:?}")]
    UnknownKind(String),
}

/// Assignment of global coordinates `(i, j)` to a rank in `0..ranks()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MappingFn {
    /// Contiguous row chunks; rank `r` owns rows `boundaries[r]..boundaries[r + 1]`.
    RowBalanced { boundaries: Vec<usize> },
    /// Columns split into chunks of `ceil(n / q)`, the last rank taking the rest.
    ColumnRegular { n: usize, q: usize },
    /// Row-major owner table of a `rows x cols` matrix.
    Explicit {
        rows: usize,
        cols: usize,
        ranks: usize,
        owners: Vec<u32>,
    },
}

/// Splits rows into `q` contiguous chunks of roughly equal nonzero count.
///
/// Each chunk grows until its count reaches the remaining nonzeros divided
/// by the remaining ranks, while leaving at least one row for every later
/// rank. When that leaves a spread between the heaviest and lightest chunk
/// larger than the heaviest row, the chunks are instead chosen so that all
/// loads fit one window of that width.
pub fn build_row_balanced(row_nnz: &[u64], q: usize) -> Result<MappingFn, MappingError> {
    let m = row_nnz.len();
    if q == 0 {
        return Err(MappingError::NoRanks);
    }
    if q > m {
        return Err(MappingError::TooManyRanks {
            ranks: q,
            len: m,
            what: "rows",
        });
    }
    let mut remaining: u64 = row_nnz.iter().sum();
    if remaining == 0 {
        return Err(MappingError::EmptyHistogram);
    }
    let mut boundaries = Vec::with_capacity(q + 1);
    boundaries.push(0);
    let mut row = 0;
    for rank in 0..q - 1 {
        let ranks_left = (q - rank) as u64;
        let last_allowed = m - (q - rank - 1);
        let mut acc = 0u64;
        loop {
            acc += row_nnz[row];
            row += 1;
            if row == last_allowed || acc * ranks_left >= remaining {
                break;
            }
        }
        remaining -= acc;
        boundaries.push(row);
    }
    boundaries.push(m);

    let max_row = row_nnz.iter().copied().max().unwrap_or(0);
    if load_spread(row_nnz, &boundaries) > max_row {
        if let Some(b) = windowed_partition(row_nnz, q, max_row) {
            boundaries = b;
        }
    }
    Ok(MappingFn::RowBalanced { boundaries })
}

fn load_spread(row_nnz: &[u64], boundaries: &[usize]) -> u64 {
    let loads = boundaries
        .windows(2)
        .map(|w| row_nnz[w[0]..w[1]].iter().sum::<u64>());
    let (lo, hi) = loads.fold((u64::MAX, 0), |(lo, hi), l| (lo.min(l), hi.max(l)));
    hi - lo
}

/// Finds `q` contiguous nonempty chunks whose loads all lie in
/// `[low, low + width]`, trying `low` from the average load downwards.
fn windowed_partition(row_nnz: &[u64], q: usize, width: u64) -> Option<Vec<usize>> {
    let m = row_nnz.len();
    let mut prefix = Vec::with_capacity(m + 1);
    prefix.push(0u64);
    for &x in row_nnz {
        prefix.push(prefix.last().unwrap() + x);
    }
    let total = prefix[m];
    let q64 = q as u64;
    let highest = total / q64;
    let lowest = total.div_ceil(q64).saturating_sub(width);
    (lowest..=highest)
        .rev()
        .find_map(|low| partition_in_window(&prefix, q, low, low + width))
}

fn partition_in_window(prefix: &[u64], q: usize, low: u64, high: u64) -> Option<Vec<usize>> {
    let m = prefix.len() - 1;
    // reach[r][i]: the first i rows split into r chunks with loads in range
    let mut reach = vec![vec![false; m + 1]; q + 1];
    reach[0][0] = true;
    for r in 1..=q {
        let mut counts = Vec::with_capacity(m + 2);
        counts.push(0usize);
        for &ok in &reach[r - 1] {
            counts.push(counts.last().unwrap() + ok as usize);
        }
        let (mut lo, mut hi) = (0usize, 0usize);
        for i in 1..=m {
            // predecessors j < i with prefix[i] - high <= prefix[j] <= prefix[i] - low
            while lo < i && prefix[lo] + high < prefix[i] {
                lo += 1;
            }
            while hi < i && prefix[hi] + low <= prefix[i] {
                hi += 1;
            }
            reach[r][i] = lo < hi && counts[hi] > counts[lo];
        }
    }
    if !reach[q][m] {
        return None;
    }
    let mut boundaries = vec![m];
    let mut i = m;
    for r in (0..q).rev() {
        let j = (0..i).rev().find(|&j| {
            reach[r][j] && prefix[i] - prefix[j] >= low && prefix[i] - prefix[j] <= high
        })?;
        boundaries.push(j);
        i = j;
    }
    boundaries.reverse();
    Some(boundaries)
}

pub fn build_column_regular(n: usize, q: usize) -> Result<MappingFn, MappingError> {
    if q == 0 {
        return Err(MappingError::NoRanks);
    }
    if q > n {
        return Err(MappingError::TooManyRanks {
            ranks: q,
            len: n,
            what: "columns",
        });
    }
    Ok(MappingFn::ColumnRegular { n, q })
}

impl MappingFn {
    pub fn row_balanced(boundaries: Vec<usize>) -> Result<MappingFn, MappingError> {
        if boundaries.len() < 2 || boundaries[0] != 0 {
            return Err(MappingError::Boundaries(
                "need at least two entries starting at 0".into(),
            ));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MappingError::Boundaries(
                "must be strictly increasing".into(),
            ));
        }
        Ok(MappingFn::RowBalanced { boundaries })
    }

    pub fn explicit(
        rows: usize,
        cols: usize,
        ranks: usize,
        owners: Vec<u32>,
    ) -> Result<MappingFn, MappingError> {
        if ranks == 0 {
            return Err(MappingError::NoRanks);
        }
        if rows.checked_mul(cols) != Some(owners.len()) {
            return Err(MappingError::TableSize {
                rows,
                cols,
                found: owners.len(),
            });
        }
        if let Some(&rank) = owners.iter().find(|&&r| r as usize >= ranks) {
            return Err(MappingError::TableRank { rank, ranks });
        }
        Ok(MappingFn::Explicit {
            rows,
            cols,
            ranks,
            owners,
        })
    }

    /// Explicit table filled from `f(i, j)`.
    pub fn explicit_from_fn<F>(
        rows: usize,
        cols: usize,
        ranks: usize,
        f: F,
    ) -> Result<MappingFn, MappingError>
    where
        F: Fn(usize, usize) -> u32,
    {
        let owners = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| f(i, j))
            .collect();
        MappingFn::explicit(rows, cols, ranks, owners)
    }

    pub fn ranks(&self) -> usize {
        match self {
            MappingFn::RowBalanced { boundaries } => boundaries.len() - 1,
            MappingFn::ColumnRegular { q, .. } => *q,
            MappingFn::Explicit { ranks, .. } => *ranks,
        }
    }

    /// Owner of `(i, j)`. Coordinates outside the covered region map to the
    /// nearest edge chunk; callers check [`MappingFn::check_covers`] first.
    #[inline]
    pub fn rank_of(&self, i: usize, j: usize) -> usize {
        match self {
            MappingFn::RowBalanced { boundaries } => {
                let r = boundaries.partition_point(|&b| b <= i);
                r.saturating_sub(1).min(boundaries.len() - 2)
            }
            MappingFn::ColumnRegular { n, q } => (j / n.div_ceil(*q)).min(q - 1),
            MappingFn::Explicit { cols, owners, .. } => owners[i * cols + j] as usize,
        }
    }

    /// Fails unless the mapping is total over an `m x n` matrix.
    pub fn check_covers(&self, m: usize, n: usize) -> Result<(), MappingError> {
        let fail = |rows: String, cols: String| {
            Err(MappingError::Coverage {
                mapped_rows: rows,
                mapped_cols: cols,
                rows: m,
                cols: n,
            })
        };
        match self {
            MappingFn::RowBalanced { boundaries } if *boundaries.last().unwrap() != m => {
                fail(boundaries.last().unwrap().to_string(), "any".into())
            }
            MappingFn::ColumnRegular { n: cols, .. } if *cols != n => {
                fail("any".into(), cols.to_string())
            }
            MappingFn::Explicit { rows, cols, .. } if (*rows, *cols) != (m, n) => {
                fail(rows.to_string(), cols.to_string())
            }
            _ => Ok(()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            MappingFn::RowBalanced { .. } => "row_balanced",
            MappingFn::ColumnRegular { .. } => "column_regular",
            MappingFn::Explicit { .. } => "explicit",
        }
    }

    /// Manifest lines identifying this mapping, without the rank count.
    pub fn fingerprint(&self) -> MappingFingerprint {
        let params = match self {
            MappingFn::RowBalanced { boundaries } => {
                let list: Vec<String> = boundaries.iter().map(usize::to_string).collect();
                vec![("boundaries".to_string(), list.join(","))]
            }
            MappingFn::ColumnRegular { n, q } => {
                vec![("n".into(), n.to_string()), ("q".into(), q.to_string())]
            }
            MappingFn::Explicit {
                rows,
                cols,
                ranks,
                owners,
            } => {
                let mut h = Sha256::new();
                for v in [*rows as u64, *cols as u64, *ranks as u64] {
                    h.update(v.to_le_bytes());
                }
                for o in owners {
                    h.update(o.to_le_bytes());
                }
                vec![("digest".into(), hex::encode(h.finalize()))]
            }
        };
        MappingFingerprint {
            kind: self.kind().to_string(),
            params,
        }
    }
}

impl fmt::Display for MappingFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({} ranks)", self.kind(), self.ranks())
    }
}

/// Mapping variant plus its identifying parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingFingerprint {
    pub kind: String,
    pub params: Vec<(String, String)>,
}

/// Storing configuration recorded next to the rank files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub ranks: usize,
    pub mapping: MappingFingerprint,
}

impl Manifest {
    pub fn new(mapping: &MappingFn) -> Self {
        Manifest {
            ranks: mapping.ranks(),
            mapping: mapping.fingerprint(),
        }
    }

    /// True when loading with `mapping` reproduces the storing configuration.
    pub fn matches(&self, mapping: &MappingFn) -> bool {
        self.ranks == mapping.ranks() && self.mapping == mapping.fingerprint()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("ranks={}\nmapping={}\n", self.ranks, self.mapping.kind);
        for (k, v) in &self.mapping.params {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Manifest, MappingError> {
        let bad = |m: &str| MappingError::Manifest(m.to_string());
        let mut lines = text.lines().filter(|l| !l.trim().is_empty()).map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| bad(&format!("line without '=': {l:?}")))
        });
        let (k, v) = lines.next().ok_or_else(|| bad("empty"))??;
        if k != "ranks" {
            return Err(bad("first line must be ranks=<P>"));
        }
        let ranks: usize = v.parse().map_err(|_| bad("ranks is not a number"))?;
        let (k, kind) = lines.next().ok_or_else(|| bad("missing mapping line"))??;
        if k != "mapping" {
            return Err(bad("second line must be mapping=<kind>"));
        }
        let params = lines.collect::<Result<Vec<_>, _>>()?;
        let keys: Vec<&str> = params.iter().map(|(k, _)| k.as_str()).collect();
        let expected: &[&str] = match kind.as_str() {
            "row_balanced" => &["boundaries"],
            "column_regular" => &["n", "q"],
            "explicit" => &["digest"],
            _ => return Err(MappingError::UnknownKind(kind)),
        };
        if keys != expected {
            return Err(bad(&format!(
                "{kind} expects parameters {expected:?}, found {keys:?}"
            )));
        }
        Ok(Manifest {
            ranks,
            mapping: MappingFingerprint { kind, params },
        })
    }

    pub fn write(&self, matrix_dir: &Path) -> std::io::Result<()> {
        fs::write(matrix_dir.join(MANIFEST_FILE), self.to_text())
    }

    /// Reads `manifest.txt` from a matrix directory; `Ok(None)` when absent.
    pub fn read(matrix_dir: &Path) -> Result<Option<Manifest>, MappingError> {
        match fs::read_to_string(matrix_dir.join(MANIFEST_FILE)) {
            Ok(text) => Manifest::parse(&text).map(Some),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(MappingError::Manifest(e.to_string())),
        }
    }

    /// Rebuilds the mapping when the manifest carries enough to do so.
    pub fn mapping(&self) -> Option<MappingFn> {
        let param = |key: &str| {
            self.mapping
                .params
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
        };
        match self.mapping.kind.as_str() {
            "row_balanced" => {
                let list = param("boundaries")?
                    .split(',')
                    .map(str::parse)
                    .collect::<Result<Vec<usize>, _>>()
                    .ok()?;
                MappingFn::row_balanced(list).ok()
            }
            "column_regular" => {
                let n = param("n")?.parse().ok()?;
                let q = param("q")?.parse().ok()?;
                build_column_regular(n, q).ok()
            }
            _ => None,
        }
    }
}
