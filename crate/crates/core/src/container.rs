//! Per-rank container files `matrix/matrix-<k>.h5spm`.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "SPMF"            4 bytes
//! version           u16 = 1
//! entry count       u16 = 24
//! entry table       24 records of 48 bytes:
//!                     name      32 bytes, zero padded ASCII
//!                     kind      u8  (0 attribute, 1 dataset)
//!                     dtype     u8  (0 u8, 1 u16, 2 u32, 3 u64, 4 f64)
//!                     reserved  6 zero bytes
//!                     count     u64
//! payloads          in table order, each starting on an 8-byte boundary
//!                   and zero padded to the next one
//! ```
//!
//! The ten header attributes come first, then the thirteen block datasets,
//! then a `checksum` dataset holding the SHA-256 digest of every byte that
//! precedes its payload except the data of the four value datasets
//! (`coo_vals`, `csr_vals`, `bitmap_vals`, `dense_vals`). Structure is thus
//! protected by the digest, while a damaged value still parses and shows up
//! when the loaded matrix is compared against a reference.

use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::payload::{AbhsfPayload, PayloadError};
use crate::scheme::{BLOCK_ROWPTR, IN_BLOCK_INDEX, VALUE};
use crate::sparse::GlobalHeader;

pub const MAGIC: [u8; 4] = *b"SPMF";
pub const VERSION: u16 = 1;
pub const NAME_LEN: usize = 32;
pub const RECORD_LEN: usize = 48;
pub const ENTRY_COUNT: usize = 24;
pub const FILE_HEADER_LEN: usize = 8;
pub const TABLE_END: usize = FILE_HEADER_LEN + ENTRY_COUNT * RECORD_LEN;
/// Bytes up to the end of the attribute payloads.
pub const ATTRIBUTES_END: usize = TABLE_END + 10 * 8;
pub const CHECKSUM_LEN: usize = 32;

/// Directory holding the rank files below a storage root.
pub const MATRIX_DIR: &str = "matrix";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Dtype {
    U8 = 0,
    U16 = 1,
    U32 = 2,
    U64 = 3,
    F64 = 4,
}

impl Dtype {
    pub const fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::U16 => 2,
            Dtype::U32 => 4,
            Dtype::U64 | Dtype::F64 => 8,
        }
    }

    pub const fn bits(self) -> u64 {
        self.size() as u64 * 8
    }

    pub fn from_code(code: u8) -> Option<Dtype> {
        match code {
            0 => Some(Dtype::U8),
            1 => Some(Dtype::U16),
            2 => Some(Dtype::U32),
            3 => Some(Dtype::U64),
            4 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::U8 => "u8",
            Dtype::U16 => "u16",
            Dtype::U32 => "u32",
            Dtype::U64 => "u64",
            Dtype::F64 => "f64",
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum EntryKind {
    Attribute = 0,
    Dataset = 1,
}

impl fmt::Display for EntryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            EntryKind::Attribute => "attribute",
            EntryKind::Dataset => "dataset",
        })
    }
}

use Dtype::*;
use EntryKind::*;

/// Every entry of a rank file, in file order.
pub const ENTRIES: [(&str, EntryKind, Dtype); ENTRY_COUNT] = [
    ("m", Attribute, U64),
    ("n", Attribute, U64),
    ("z", Attribute, U64),
    ("m_local", Attribute, U64),
    ("n_local", Attribute, U64),
    ("z_local", Attribute, U64),
    ("m_offset", Attribute, U64),
    ("n_offset", Attribute, U64),
    ("block_size", Attribute, U64),
    ("blocks", Attribute, U64),
    ("schemes", Dataset, U8),
    ("zetas", Dataset, U32),
    ("brows", Dataset, U32),
    ("bcols", Dataset, U32),
    ("coo_lrows", Dataset, IN_BLOCK_INDEX),
    ("coo_lcols", Dataset, IN_BLOCK_INDEX),
    ("coo_vals", Dataset, VALUE),
    ("csr_lcolinds", Dataset, IN_BLOCK_INDEX),
    ("csr_rowptrs", Dataset, BLOCK_ROWPTR),
    ("csr_vals", Dataset, VALUE),
    ("bitmap_bitmap", Dataset, U8),
    ("bitmap_vals", Dataset, VALUE),
    ("dense_vals", Dataset, VALUE),
    ("checksum", Dataset, U8),
];

/// One row of a file's entry table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContainerEntry {
    pub name: &'static str,
    pub kind: EntryKind,
    pub dtype: Dtype,
    pub count: u64,
    pub byte_offset: u64,
}

impl ContainerEntry {
    pub fn byte_len(&self) -> u64 {
        self.count * self.dtype.size() as u64
    }
}

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {0:02x?}, expected \"SPMF\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("entry table holds {0} entries, expected {ENTRY_COUNT}")]
    EntryCount(u16),
    #[error("unknown entry name {name:?} at table position {index}")]
    UnknownEntry { index: usize, name: String },
    #[error("missing entry `{expected}` (found `{found}` at table position {index})")]
    MissingEntry {
        index: usize,
        expected: &'static str,
        found: &'static str,
    },
    #[error("entry `{name}` is stored as {found}, expected {expected}")]
    KindMismatch {
        name: &'static str,
        expected: EntryKind,
        found: u8,
    },
    #[error("entry `{name}` has dtype code {found}, expected {expected}")]
    DtypeMismatch {
        name: &'static str,
        expected: Dtype,
        found: u8,
    },
    #[error("entry `{name}` has nonzero reserved bytes")]
    Reserved { name: &'static str },
    #[error("attribute `{name}` has count {count}, expected 1")]
    AttributeCount { name: &'static str, count: u64 },
    #[error("entry `{name}` runs past the end of the file")]
    Truncated { name: &'static str },
    #[error("nonzero padding after entry `{name}`")]
    Padding { name: &'static str },
    #[error("{0} unexpected bytes after the last entry")]
    TrailingBytes(u64),
    #[error("checksum entry has {0} bytes, expected {CHECKSUM_LEN}")]
    ChecksumLength(u64),
    #[error("checksum mismatch: file contents are corrupt")]
    Checksum,
    #[error("invalid payload: {0}")]
    Invalid(#[from] PayloadError),

    #[error("{0}: not a directory")]
    NotADirectory(PathBuf),
    #[error("{0}: no rank files found")]
    NoRankFiles(PathBuf),
    #[error("unexpected rank file name {0:?}")]
    RankFileName(String),
    #[error("rank file matrix-{missing}.h5spm is missing while rank {highest} exists")]
    RankGap { missing: usize, highest: usize },
    #[error("rank {rank} disagrees with rank 0 on {field}: {found} vs {expected}")]
    Inconsistent {
        rank: usize,
        field: &'static str,
        found: u64,
        expected: u64,
    },
    #[error("ranks hold {sum} nonzeros in total, header z is {z}")]
    NonzeroTotal { sum: u64, z: u64 },
}

type Result<T> = std::result::Result<T, ContainerError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ContainerError + '_ {
    move |source| ContainerError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[inline]
fn align8(v: u64) -> u64 {
    v.div_ceil(8) * 8
}

fn dataset_counts(p: &AbhsfPayload) -> [u64; 13] {
    [
        p.schemes.len() as u64,
        p.zetas.len() as u64,
        p.brows.len() as u64,
        p.bcols.len() as u64,
        p.coo_lrows.len() as u64,
        p.coo_lcols.len() as u64,
        p.coo_vals.len() as u64,
        p.csr_lcolinds.len() as u64,
        p.csr_rowptrs.len() as u64,
        p.csr_vals.len() as u64,
        p.bitmap_bitmap.len() as u64,
        p.bitmap_vals.len() as u64,
        p.dense_vals.len() as u64,
    ]
}

fn pad(buf: &mut Vec<u8>) {
    buf.resize(align8(buf.len() as u64) as usize, 0);
}

/// Serializes a payload. Invalid payloads are refused.
pub fn encode_file(payload: &AbhsfPayload) -> Result<Vec<u8>> {
    payload.validate()?;
    Ok(encode_file_unchecked(payload))
}

/// Serializes without validating the payload. Meant for producing corrupt
/// fixtures in tests.
#[doc(hidden)]
pub fn encode_file_unchecked(p: &AbhsfPayload) -> Vec<u8> {
    let mut counts = [1u64; ENTRY_COUNT];
    counts[10..23].copy_from_slice(&dataset_counts(p));
    counts[23] = CHECKSUM_LEN as u64;

    let data_len: u64 = ENTRIES
        .iter()
        .zip(&counts)
        .map(|((_, _, dt), c)| align8(c * dt.size() as u64))
        .sum();
    let mut buf = Vec::with_capacity(TABLE_END + data_len as usize);
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(ENTRY_COUNT as u16).to_le_bytes());
    for ((name, kind, dtype), count) in ENTRIES.iter().zip(&counts) {
        let mut record = [0u8; RECORD_LEN];
        record[..name.len()].copy_from_slice(name.as_bytes());
        record[NAME_LEN] = *kind as u8;
        record[NAME_LEN + 1] = *dtype as u8;
        record[40..48].copy_from_slice(&count.to_le_bytes());
        buf.extend_from_slice(&record);
    }

    for v in [
        p.m,
        p.n,
        p.z,
        p.m_local,
        p.n_local,
        p.z_local,
        p.m_offset,
        p.n_offset,
        p.block_size,
        p.blocks,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    macro_rules! put {
        ($vec:expr) => {{
            for v in $vec.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            pad(&mut buf);
        }};
    }
    put!(p.schemes);
    put!(p.zetas);
    put!(p.brows);
    put!(p.bcols);
    put!(p.coo_lrows);
    put!(p.coo_lcols);
    put!(p.coo_vals);
    put!(p.csr_lcolinds);
    put!(p.csr_rowptrs);
    put!(p.csr_vals);
    put!(p.bitmap_bitmap);
    put!(p.bitmap_vals);
    put!(p.dense_vals);
    let table = parse_entry_table(&buf).expect("freshly written entry table");
    let digest = structure_digest(&buf, &table);
    buf.extend_from_slice(&digest);
    pad(&mut buf);
    buf
}

/// Table positions of the value datasets, which the digest skips.
const VALUE_ENTRIES: [usize; 4] = [16, 19, 21, 22];

fn structure_digest(bytes: &[u8], table: &[ContainerEntry]) -> [u8; CHECKSUM_LEN] {
    let mut hasher = Sha256::new();
    let mut start = 0;
    for &i in &VALUE_ENTRIES {
        let e = &table[i];
        hasher.update(&bytes[start..e.byte_offset as usize]);
        start = (e.byte_offset + e.byte_len()) as usize;
    }
    hasher.update(&bytes[start..table[ENTRY_COUNT - 1].byte_offset as usize]);
    hasher.finalize().into()
}

/// Writes one rank file. The payload is validated before anything touches
/// the file system.
pub fn write_rank_file(path: &Path, payload: &AbhsfPayload) -> Result<u64> {
    let bytes = encode_file(payload)?;
    fs::write(path, &bytes).map_err(io_err(path))?;
    Ok(bytes.len() as u64)
}

/// Parses and checks the entry table, returning entries with their payload
/// offsets. Does not look past the table.
pub fn parse_entry_table(bytes: &[u8]) -> Result<Vec<ContainerEntry>> {
    if bytes.len() < FILE_HEADER_LEN {
        return Err(ContainerError::Truncated {
            name: "file header",
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(ContainerError::BadMagic(magic));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(ContainerError::Version(version));
    }
    let count = u16::from_le_bytes([bytes[6], bytes[7]]);
    if count as usize != ENTRY_COUNT {
        return Err(ContainerError::EntryCount(count));
    }
    if bytes.len() < TABLE_END {
        return Err(ContainerError::Truncated {
            name: "entry table",
        });
    }

    let mut entries = Vec::with_capacity(ENTRY_COUNT);
    let mut offset = TABLE_END as u64;
    for (index, (expected, kind, dtype)) in ENTRIES.iter().enumerate() {
        let rec = &bytes[FILE_HEADER_LEN + index * RECORD_LEN..][..RECORD_LEN];
        let raw_name = &rec[..NAME_LEN];
        let name_len = raw_name.iter().position(|&b| b == 0).unwrap_or(NAME_LEN);
        let name_ok = raw_name[name_len..].iter().all(|&b| b == 0);
        let name = std::str::from_utf8(&raw_name[..name_len])
            .ok()
            .filter(|_| name_ok);
        match name {
            Some(n) if n == *expected => {}
            Some(n) => {
                return Err(match ENTRIES.iter().find(|e| e.0 == n) {
                    Some(found) => ContainerError::MissingEntry {
                        index,
                        expected,
                        found: found.0,
                    },
                    None => ContainerError::UnknownEntry {
                        index,
                        name: n.to_string(),
                    },
                })
            }
            None => {
                return Err(ContainerError::UnknownEntry {
                    index,
                    name: String::from_utf8_lossy(raw_name).into_owned(),
                })
            }
        }
        if rec[NAME_LEN] != *kind as u8 {
            return Err(ContainerError::KindMismatch {
                name: expected,
                expected: *kind,
                found: rec[NAME_LEN],
            });
        }
        if rec[NAME_LEN + 1] != *dtype as u8 {
            return Err(ContainerError::DtypeMismatch {
                name: expected,
                expected: *dtype,
                found: rec[NAME_LEN + 1],
            });
        }
        if rec[34..40].iter().any(|&b| b != 0) {
            return Err(ContainerError::Reserved { name: expected });
        }
        let count = u64::from_le_bytes(rec[40..48].try_into().unwrap());
        if *kind == Attribute && count != 1 {
            return Err(ContainerError::AttributeCount {
                name: expected,
                count,
            });
        }
        if *expected == "checksum" && count != CHECKSUM_LEN as u64 {
            return Err(ContainerError::ChecksumLength(count));
        }
        let entry = ContainerEntry {
            name: expected,
            kind: *kind,
            dtype: *dtype,
            count,
            byte_offset: offset,
        };
        offset = count
            .checked_mul(dtype.size() as u64)
            .and_then(|len| offset.checked_add(len))
            .map(align8)
            .ok_or(ContainerError::Truncated { name: expected })?;
        entries.push(entry);
    }
    Ok(entries)
}

fn entry_bytes<'b>(bytes: &'b [u8], e: &ContainerEntry) -> Result<&'b [u8]> {
    let start = e.byte_offset as usize;
    let end = e
        .byte_offset
        .checked_add(e.byte_len())
        .ok_or(ContainerError::Truncated { name: e.name })?;
    if end > bytes.len() as u64 {
        return Err(ContainerError::Truncated { name: e.name });
    }
    Ok(&bytes[start..end as usize])
}

fn attribute(bytes: &[u8], e: &ContainerEntry) -> Result<u64> {
    Ok(u64::from_le_bytes(
        entry_bytes(bytes, e)?.try_into().unwrap(),
    ))
}

/// Reads only the ten header attributes.
pub fn parse_attributes(bytes: &[u8]) -> Result<AbhsfPayload> {
    let table = parse_entry_table(bytes)?;
    let a = |i: usize| attribute(bytes, &table[i]);
    Ok(AbhsfPayload {
        m: a(0)?,
        n: a(1)?,
        z: a(2)?,
        m_local: a(3)?,
        n_local: a(4)?,
        z_local: a(5)?,
        m_offset: a(6)?,
        n_offset: a(7)?,
        block_size: a(8)?,
        blocks: a(9)?,
        ..Default::default()
    })
}

macro_rules! decode_vec {
    ($raw:expr, $t:ty) => {
        $raw.chunks_exact(std::mem::size_of::<$t>())
            .map(|c| <$t>::from_le_bytes(c.try_into().unwrap()))
            .collect::<Vec<$t>>()
    };
}

/// Parses a whole file: table, bounds, padding, checksum, then every payload
/// invariant.
pub fn decode_file(bytes: &[u8]) -> Result<AbhsfPayload> {
    let table = parse_entry_table(bytes)?;
    for e in &table {
        let data = entry_bytes(bytes, e)?;
        let end = e.byte_offset as usize + data.len();
        let padded = (align8(end as u64) as usize).min(bytes.len());
        if bytes[end..padded].iter().any(|&b| b != 0) {
            return Err(ContainerError::Padding { name: e.name });
        }
    }
    let last = &table[ENTRY_COUNT - 1];
    let end = align8(last.byte_offset + last.byte_len());
    if end > bytes.len() as u64 {
        return Err(ContainerError::Truncated { name: last.name });
    }
    if end < bytes.len() as u64 {
        return Err(ContainerError::TrailingBytes(bytes.len() as u64 - end));
    }
    if structure_digest(bytes, &table).as_slice() != entry_bytes(bytes, last)? {
        return Err(ContainerError::Checksum);
    }

    let mut p = parse_attributes(bytes)?;
    let d = |i: usize| entry_bytes(bytes, &table[i]);
    p.schemes = d(10)?.to_vec();
    p.zetas = decode_vec!(d(11)?, u32);
    p.brows = decode_vec!(d(12)?, u32);
    p.bcols = decode_vec!(d(13)?, u32);
    p.coo_lrows = decode_vec!(d(14)?, u16);
    p.coo_lcols = decode_vec!(d(15)?, u16);
    p.coo_vals = decode_vec!(d(16)?, f64);
    p.csr_lcolinds = decode_vec!(d(17)?, u16);
    p.csr_rowptrs = decode_vec!(d(18)?, u32);
    p.csr_vals = decode_vec!(d(19)?, f64);
    p.bitmap_bitmap = d(20)?.to_vec();
    p.bitmap_vals = decode_vec!(d(21)?, f64);
    p.dense_vals = decode_vec!(d(22)?, f64);
    p.validate()?;
    Ok(p)
}

/// Reads and fully validates one rank file.
pub fn read_rank_file(path: &Path) -> Result<AbhsfPayload> {
    read_rank_file_sized(path).map(|(p, _)| p)
}

/// As [`read_rank_file`], also returning the number of bytes read.
pub fn read_rank_file_sized(path: &Path) -> Result<(AbhsfPayload, u64)> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let payload = decode_file(&bytes)?;
    Ok((payload, bytes.len() as u64))
}

/// Reads the header attributes of a rank file without loading its datasets.
pub fn read_rank_header(path: &Path) -> Result<AbhsfPayload> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut prefix = Vec::with_capacity(ATTRIBUTES_END);
    file.take(ATTRIBUTES_END as u64)
        .read_to_end(&mut prefix)
        .map_err(io_err(path))?;
    parse_attributes(&prefix)
}

pub fn rank_file_name(rank: usize) -> String {
    format!("matrix-{rank}.h5spm")
}

/// The matrix directory below a storage root.
pub fn matrix_dir(root: &Path) -> PathBuf {
    root.join(MATRIX_DIR)
}

/// Header attributes of one stored rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankHeader {
    pub m_local: u64,
    pub n_local: u64,
    pub z_local: u64,
    pub m_offset: u64,
    pub n_offset: u64,
    pub blocks: u64,
    pub file_bytes: u64,
}

/// The rank files of one stored matrix.
#[derive(Debug, Clone)]
pub struct RankFileSet {
    pub dir: PathBuf,
    pub header: GlobalHeader,
    pub block_size: u64,
    pub ranks: Vec<RankHeader>,
}

impl RankFileSet {
    pub fn rank_count(&self) -> usize {
        self.ranks.len()
    }

    pub fn path(&self, rank: usize) -> PathBuf {
        self.dir.join(rank_file_name(rank))
    }

    /// Sum of all file sizes.
    pub fn total_bytes(&self) -> u64 {
        self.ranks.iter().map(|r| r.file_bytes).sum()
    }
}

fn parse_rank_name(name: &str) -> Option<std::result::Result<usize, ()>> {
    let digits = name.strip_prefix("matrix-")?.strip_suffix(".h5spm")?;
    let canonical = !digits.is_empty()
        && digits.bytes().all(|b| b.is_ascii_digit())
        && (digits == "0" || !digits.starts_with('0'));
    Some(if canonical {
        digits.parse().map_err(|_| ())
    } else {
        Err(())
    })
}

/// Opens the rank files under `root/matrix`, checking numbering and
/// cross-file header consistency.
pub fn open_file_set(root: &Path) -> Result<RankFileSet> {
    let dir = matrix_dir(root);
    if !dir.is_dir() {
        return Err(ContainerError::NotADirectory(dir));
    }
    let mut found = Vec::new();
    for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
        let entry = entry.map_err(io_err(&dir))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        match parse_rank_name(&name) {
            None => continue,
            Some(Ok(rank)) => found.push(rank),
            Some(Err(())) => return Err(ContainerError::RankFileName(name)),
        }
    }
    if found.is_empty() {
        return Err(ContainerError::NoRankFiles(dir));
    }
    found.sort_unstable();
    let highest = *found.last().unwrap();
    if let Some(missing) = (0..=highest)
        .zip(&found)
        .find(|(k, f)| k != *f)
        .map(|(k, _)| k)
    {
        return Err(ContainerError::RankGap { missing, highest });
    }

    let mut ranks = Vec::with_capacity(found.len());
    let mut first: Option<AbhsfPayload> = None;
    for rank in 0..found.len() {
        let path = dir.join(rank_file_name(rank));
        let h = read_rank_header(&path)?;
        let file_bytes = fs::metadata(&path).map_err(io_err(&path))?.len();
        if let Some(f) = &first {
            for (field, found, expected) in [
                ("m", h.m, f.m),
                ("n", h.n, f.n),
                ("z", h.z, f.z),
                ("block_size", h.block_size, f.block_size),
            ] {
                if found != expected {
                    return Err(ContainerError::Inconsistent {
                        rank,
                        field,
                        found,
                        expected,
                    });
                }
            }
        }
        ranks.push(RankHeader {
            m_local: h.m_local,
            n_local: h.n_local,
            z_local: h.z_local,
            m_offset: h.m_offset,
            n_offset: h.n_offset,
            blocks: h.blocks,
            file_bytes,
        });
        first.get_or_insert(h);
    }
    let first = first.expect("at least one rank");
    let sum: u64 = ranks.iter().map(|r| r.z_local).sum();
    if sum != first.z {
        return Err(ContainerError::NonzeroTotal { sum, z: first.z });
    }
    Ok(RankFileSet {
        dir,
        header: first.header(),
        block_size: first.block_size,
        ranks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> AbhsfPayload {
        AbhsfPayload {
            m: 10,
            n: 12,
            z: 3,
            m_local: 2,
            n_local: 3,
            z_local: 3,
            m_offset: 1,
            n_offset: 4,
            block_size: 2,
            blocks: 2,
            schemes: vec![2, 3],
            zetas: vec![2, 1],
            brows: vec![0, 0],
            bcols: vec![0, 1],
            bitmap_bitmap: vec![0b1001],
            bitmap_vals: vec![1.0, -2.0],
            dense_vals: vec![0.0, 0.0, 5.0, 0.0],
            ..Default::default()
        }
    }

    #[test]
    fn table_layout_constants() {
        assert_eq!(TABLE_END, 1160);
        assert_eq!(ATTRIBUTES_END, 1240);
        assert_eq!(ENTRIES.iter().filter(|e| e.1 == Dataset).count(), 14);
    }

    #[test]
    fn round_trip_and_determinism() {
        let p = sample();
        let a = encode_file(&p).unwrap();
        let b = encode_file(&p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len() % 8, 0);
        assert_eq!(decode_file(&a).unwrap(), p);
    }

    #[test]
    fn entries_are_aligned_and_disjoint() {
        let bytes = encode_file(&sample()).unwrap();
        let table = parse_entry_table(&bytes).unwrap();
        let mut end = TABLE_END as u64;
        for e in &table {
            assert_eq!(e.byte_offset % 8, 0);
            assert!(e.byte_offset >= end);
            end = e.byte_offset + e.byte_len();
        }
        assert_eq!(align8(end), bytes.len() as u64);
    }

    #[test]
    fn refuses_invalid_payload() {
        let mut p = sample();
        p.zetas[0] = 3;
        assert!(matches!(encode_file(&p), Err(ContainerError::Invalid(_))));
    }

    #[test]
    fn distinct_diagnostics() {
        let good = encode_file(&sample()).unwrap();

        let mut b = good.clone();
        b[0] = b'X';
        assert!(matches!(decode_file(&b), Err(ContainerError::BadMagic(_))));

        let mut b = good.clone();
        b[4] = 2;
        assert!(matches!(decode_file(&b), Err(ContainerError::Version(2))));

        // schemes is entry 10; make its dtype u32
        let mut b = good.clone();
        b[FILE_HEADER_LEN + 10 * RECORD_LEN + NAME_LEN + 1] = Dtype::U32 as u8;
        assert!(matches!(
            decode_file(&b),
            Err(ContainerError::DtypeMismatch {
                name: "schemes",
                ..
            })
        ));

        let mut b = good.clone();
        b[FILE_HEADER_LEN + 3 * RECORD_LEN] = b'q';
        assert!(matches!(
            decode_file(&b),
            Err(ContainerError::UnknownEntry { index: 3, .. })
        ));

        let mut b = good.clone();
        let rec = FILE_HEADER_LEN + 11 * RECORD_LEN;
        b[rec..rec + NAME_LEN].fill(0);
        b[rec..rec + 5].copy_from_slice(b"brows");
        assert!(matches!(
            decode_file(&b),
            Err(ContainerError::MissingEntry {
                expected: "zetas",
                ..
            })
        ));

        let b = &good[..good.len() - 8];
        assert!(matches!(
            decode_file(b),
            Err(ContainerError::Truncated { name: "checksum" })
        ));

        let table = parse_entry_table(&good).unwrap();
        let dense = &table[22];
        let b = &good[..dense.byte_offset as usize + 8];
        assert!(matches!(
            decode_file(b),
            Err(ContainerError::Truncated { name: "dense_vals" })
        ));

        let mut b = good.clone();
        b.extend_from_slice(&[0; 8]);
        assert!(matches!(
            decode_file(&b),
            Err(ContainerError::TrailingBytes(8))
        ));

        let mut b = good.clone();
        b[table[20].byte_offset as usize] ^= 1;
        assert!(matches!(decode_file(&b), Err(ContainerError::Checksum)));

        // value bytes are outside the digest and decode to a different value
        let mut b = good.clone();
        let vals = &table[21];
        b[vals.byte_offset as usize + 7] ^= 0x80;
        let flipped = decode_file(&b).unwrap();
        assert_eq!(flipped.bitmap_vals[0], -sample().bitmap_vals[0]);

        // schemes payload is one byte followed by seven bytes of padding
        let mut b = good.clone();
        b[table[10].byte_offset as usize + 3] = 1;
        assert!(matches!(
            decode_file(&b),
            Err(ContainerError::Padding { name: "schemes" })
        ));

        // a checksum recomputed over an invalid payload still fails validation
        let mut bad = sample();
        bad.schemes[1] = 9;
        let b = encode_file_unchecked(&bad);
        assert!(matches!(
            decode_file(&b),
            Err(ContainerError::Invalid(PayloadError::SchemeTag { .. }))
        ));
    }

    #[test]
    fn header_only_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.h5spm");
        write_rank_file(&path, &sample()).unwrap();
        let h = read_rank_header(&path).unwrap();
        assert_eq!((h.m, h.n, h.blocks), (10, 12, 2));
        assert!(h.schemes.is_empty());
    }

    #[test]
    fn rank_names() {
        assert_eq!(parse_rank_name("matrix-0.h5spm"), Some(Ok(0)));
        assert_eq!(parse_rank_name("matrix-12.h5spm"), Some(Ok(12)));
        assert_eq!(parse_rank_name("matrix-012.h5spm"), Some(Err(())));
        assert_eq!(parse_rank_name("matrix-.h5spm"), Some(Err(())));
        assert_eq!(parse_rank_name("manifest.txt"), None);
    }
}
