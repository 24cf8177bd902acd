//! Load path: stream one rank's payload back into CSR.
//!
//! Every dataset is consumed front to back through a [`DecodeCursor`]. Blocks
//! are decoded into a pending buffer that is sorted and flushed whenever the
//! block row changes and once after the last block; each flush emits the row
//! pointers of every local row up to the end of that block row.

use thiserror::Error;

use crate::payload::AbhsfPayload;
use crate::scheme::{SchemeTag, MAX_BLOCK_SIZE};
use crate::sparse::{CsrMatrix, Element};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("wrong scheme tag {tag} at block {block}")]
    WrongSchemeTag { block: usize, tag: u8 },
    #[error("dataset `{stream}` is truncated")]
    Truncated { stream: &'static str },
    #[error("dataset `{stream}` has {remaining} unread entries after the last block")]
    TrailingData {
        stream: &'static str,
        remaining: usize,
    },
    #[error("sum of block nonzero counts is {sum}, header z_local is {z_local}")]
    ZetaSum { sum: u64, z_local: u64 },
    #[error("{scheme} block {block} declares {zeta} nonzeros but holds {found}")]
    ZetaMismatch {
        block: usize,
        scheme: SchemeTag,
        zeta: u32,
        found: u64,
    },
    #[error("corrupt block {block}: {reason}")]
    CorruptBlock { block: usize, reason: String },
    #[error("block {block} has block row {brow} after block row {last}")]
    BlockRowOrder { block: usize, brow: u32, last: u32 },
    #[error("element ({row}, {col}) outside the {m_local}x{n_local} local submatrix")]
    OutOfBounds {
        row: usize,
        col: usize,
        m_local: usize,
        n_local: usize,
    },
    #[error("duplicate element at ({row}, {col})")]
    Duplicate { row: usize, col: usize },
    #[error("block size {0} outside 1..={MAX_BLOCK_SIZE}")]
    BlockSize(u64),
    #[error("header field {0} does not fit in memory indexes")]
    HeaderOverflow(&'static str),
}

type Result<T> = std::result::Result<T, DecodeError>;

/// Sequential read positions, one per per-scheme dataset.
#[derive(Debug, Clone)]
pub struct DecodeCursor<'a> {
    payload: &'a AbhsfPayload,
    pub coo_lrows: usize,
    pub coo_lcols: usize,
    pub coo_vals: usize,
    pub csr_lcolinds: usize,
    pub csr_rowptrs: usize,
    pub csr_vals: usize,
    pub bitmap_bitmap: usize,
    pub bitmap_vals: usize,
    pub dense_vals: usize,
}

#[inline]
fn take<T: Copy>(stream: &[T], pos: &mut usize, name: &'static str) -> Result<T> {
    let v = *stream
        .get(*pos)
        .ok_or(DecodeError::Truncated { stream: name })?;
    *pos += 1;
    Ok(v)
}

impl<'a> DecodeCursor<'a> {
    pub fn new(payload: &'a AbhsfPayload) -> Self {
        DecodeCursor {
            payload,
            coo_lrows: 0,
            coo_lcols: 0,
            coo_vals: 0,
            csr_lcolinds: 0,
            csr_rowptrs: 0,
            csr_vals: 0,
            bitmap_bitmap: 0,
            bitmap_vals: 0,
            dense_vals: 0,
        }
    }

    /// `(name, position, stream length)` for each dataset.
    pub fn positions(&self) -> [(&'static str, usize, usize); 9] {
        let p = self.payload;
        [
            ("coo_lrows", self.coo_lrows, p.coo_lrows.len()),
            ("coo_lcols", self.coo_lcols, p.coo_lcols.len()),
            ("coo_vals", self.coo_vals, p.coo_vals.len()),
            ("csr_lcolinds", self.csr_lcolinds, p.csr_lcolinds.len()),
            ("csr_rowptrs", self.csr_rowptrs, p.csr_rowptrs.len()),
            ("csr_vals", self.csr_vals, p.csr_vals.len()),
            ("bitmap_bitmap", self.bitmap_bitmap, p.bitmap_bitmap.len()),
            ("bitmap_vals", self.bitmap_vals, p.bitmap_vals.len()),
            ("dense_vals", self.dense_vals, p.dense_vals.len()),
        ]
    }

    /// Fails unless every stream has been read to its end.
    pub fn finish(&self) -> Result<()> {
        for (stream, pos, len) in self.positions() {
            if pos != len {
                return Err(DecodeError::TrailingData {
                    stream,
                    remaining: len - pos,
                });
            }
        }
        Ok(())
    }
}

/// Position of one block in the local block grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockFrame {
    /// Index of the block among the payload's blocks, for diagnostics.
    pub index: usize,
    pub brow: u32,
    pub bcol: u32,
    pub s: usize,
    pub zeta: u32,
}

impl BlockFrame {
    #[inline]
    fn element(&self, lrow: usize, lcol: usize, val: f64) -> Element {
        Element::new(
            lrow + self.brow as usize * self.s,
            lcol + self.bcol as usize * self.s,
            val,
        )
    }

    fn corrupt(&self, reason: impl Into<String>) -> DecodeError {
        DecodeError::CorruptBlock {
            block: self.index,
            reason: reason.into(),
        }
    }

    fn mismatch(&self, scheme: SchemeTag, found: u64) -> DecodeError {
        DecodeError::ZetaMismatch {
            block: self.index,
            scheme,
            zeta: self.zeta,
            found,
        }
    }
}

/// Reads `zeta` triples from the COO streams.
pub fn decode_block_coo(
    cursor: &mut DecodeCursor<'_>,
    frame: BlockFrame,
    out: &mut Vec<Element>,
) -> Result<()> {
    let p = cursor.payload;
    for _ in 0..frame.zeta {
        let lrow = take(&p.coo_lrows, &mut cursor.coo_lrows, "coo_lrows")? as usize;
        let lcol = take(&p.coo_lcols, &mut cursor.coo_lcols, "coo_lcols")? as usize;
        let val = take(&p.coo_vals, &mut cursor.coo_vals, "coo_vals")?;
        if lrow >= frame.s || lcol >= frame.s {
            return Err(frame.corrupt(format!(
                "in-block index ({lrow}, {lcol}) exceeds block size {}",
                frame.s
            )));
        }
        out.push(frame.element(lrow, lcol, val));
    }
    Ok(())
}

/// Reads `s + 1` row pointers and the column indexes and values they span.
pub fn decode_block_csr(
    cursor: &mut DecodeCursor<'_>,
    frame: BlockFrame,
    out: &mut Vec<Element>,
) -> Result<()> {
    let p = cursor.payload;
    let mut row_start = take(&p.csr_rowptrs, &mut cursor.csr_rowptrs, "csr_rowptrs")?;
    if row_start != 0 {
        return Err(frame.corrupt("first in-block row pointer is not 0"));
    }
    for lrow in 0..frame.s {
        let row_end = take(&p.csr_rowptrs, &mut cursor.csr_rowptrs, "csr_rowptrs")?;
        if row_end < row_start {
            return Err(frame.corrupt(format!("row pointers decrease at in-block row {lrow}")));
        }
        if row_end as u64 > frame.zeta as u64 {
            return Err(frame.mismatch(SchemeTag::Csr, row_end as u64));
        }
        for _ in row_start..row_end {
            let lcol = take(&p.csr_lcolinds, &mut cursor.csr_lcolinds, "csr_lcolinds")? as usize;
            let val = take(&p.csr_vals, &mut cursor.csr_vals, "csr_vals")?;
            if lcol >= frame.s {
                return Err(frame.corrupt(format!(
                    "in-block column {lcol} exceeds block size {}",
                    frame.s
                )));
            }
            out.push(frame.element(lrow, lcol, val));
        }
        row_start = row_end;
    }
    if row_start != frame.zeta {
        return Err(frame.mismatch(SchemeTag::Csr, row_start as u64));
    }
    Ok(())
}

/// Scans `s²` cells row-major, one bit each, least significant bit first.
pub fn decode_block_bitmap(
    cursor: &mut DecodeCursor<'_>,
    frame: BlockFrame,
    out: &mut Vec<Element>,
) -> Result<()> {
    let p = cursor.payload;
    let mut bit = 8;
    let mut byte = 0u8;
    let mut found = 0u64;
    for lrow in 0..frame.s {
        for lcol in 0..frame.s {
            if bit > 7 {
                byte = take(&p.bitmap_bitmap, &mut cursor.bitmap_bitmap, "bitmap_bitmap")?;
                bit = 0;
            }
            if byte & 1 == 1 {
                found += 1;
                if found > frame.zeta as u64 {
                    return Err(frame.mismatch(SchemeTag::Bitmap, found));
                }
                let val = take(&p.bitmap_vals, &mut cursor.bitmap_vals, "bitmap_vals")?;
                out.push(frame.element(lrow, lcol, val));
            }
            byte >>= 1;
            bit += 1;
        }
    }
    if byte != 0 {
        return Err(frame.corrupt("nonzero padding bits after the last cell"));
    }
    if found != frame.zeta as u64 {
        return Err(frame.mismatch(SchemeTag::Bitmap, found));
    }
    Ok(())
}

/// Reads `s²` values row-major and keeps the nonzero ones. Empty cells must
/// hold positive zero.
pub fn decode_block_dense(
    cursor: &mut DecodeCursor<'_>,
    frame: BlockFrame,
    out: &mut Vec<Element>,
) -> Result<()> {
    let p = cursor.payload;
    let cells = frame.s * frame.s;
    let start = cursor.dense_vals;
    let vals = p
        .dense_vals
        .get(start..start + cells)
        .ok_or(DecodeError::Truncated {
            stream: "dense_vals",
        })?;
    cursor.dense_vals += cells;
    let mut found = 0u64;
    for (cell, &val) in vals.iter().enumerate() {
        if val.to_bits() == 0 {
            continue;
        }
        if val == 0.0 {
            return Err(frame.corrupt(format!("dense cell {cell} holds negative zero")));
        }
        found += 1;
        out.push(frame.element(cell / frame.s, cell % frame.s, val));
    }
    if found != frame.zeta as u64 {
        return Err(frame.mismatch(SchemeTag::Dense, found));
    }
    Ok(())
}

/// Dispatches on the scheme tag.
pub fn decode_block(
    cursor: &mut DecodeCursor<'_>,
    tag: u8,
    frame: BlockFrame,
    out: &mut Vec<Element>,
) -> Result<()> {
    match SchemeTag::from_u8(tag) {
        Some(SchemeTag::Coo) => decode_block_coo(cursor, frame, out),
        Some(SchemeTag::Csr) => decode_block_csr(cursor, frame, out),
        Some(SchemeTag::Bitmap) => decode_block_bitmap(cursor, frame, out),
        Some(SchemeTag::Dense) => decode_block_dense(cursor, frame, out),
        None => Err(DecodeError::WrongSchemeTag {
            block: frame.index,
            tag,
        }),
    }
}

fn to_usize(v: u64, field: &'static str) -> Result<usize> {
    usize::try_from(v).map_err(|_| DecodeError::HeaderOverflow(field))
}

/// Decodes every block of `payload` and hands each block row to `sink` as a
/// lexicographically sorted, duplicate-free, bounds-checked slice of local
/// elements. Block rows are delivered in increasing order; `sink` receives
/// the block row index alongside.
pub fn for_each_block_row<F>(payload: &AbhsfPayload, mut sink: F) -> Result<()>
where
    F: FnMut(u32, &[Element]) -> Result<()>,
{
    let s = payload.block_size;
    if s == 0 || s > MAX_BLOCK_SIZE as u64 {
        return Err(DecodeError::BlockSize(s));
    }
    let s = s as usize;
    let blocks = to_usize(payload.blocks, "blocks")?;
    let m_local = to_usize(payload.m_local, "m_local")?;
    let n_local = to_usize(payload.n_local, "n_local")?;

    for (stream, len) in [
        ("schemes", payload.schemes.len()),
        ("zetas", payload.zetas.len()),
        ("brows", payload.brows.len()),
        ("bcols", payload.bcols.len()),
    ] {
        if len < blocks {
            return Err(DecodeError::Truncated { stream });
        }
        if len > blocks {
            return Err(DecodeError::TrailingData {
                stream,
                remaining: len - blocks,
            });
        }
    }
    let sum: u64 = payload.zetas.iter().map(|&z| z as u64).sum();
    if sum != payload.z_local {
        return Err(DecodeError::ZetaSum {
            sum,
            z_local: payload.z_local,
        });
    }

    let mut cursor = DecodeCursor::new(payload);
    let mut pending: Vec<Element> = Vec::new();
    let mut current: Option<u32> = None;
    let mut flush = |brow: u32, pending: &mut Vec<Element>| -> Result<()> {
        pending.sort_by_key(Element::key);
        if let Some(w) = pending.windows(2).find(|w| w[0].key() == w[1].key()) {
            return Err(DecodeError::Duplicate {
                row: w[0].row,
                col: w[0].col,
            });
        }
        sink(brow, pending)?;
        pending.clear();
        Ok(())
    };

    for k in 0..blocks {
        let frame = BlockFrame {
            index: k,
            brow: payload.brows[k],
            bcol: payload.bcols[k],
            s,
            zeta: payload.zetas[k],
        };
        if frame.zeta == 0 {
            return Err(frame.corrupt("stored block without nonzeros"));
        }
        match current {
            Some(last) if frame.brow < last => {
                return Err(DecodeError::BlockRowOrder {
                    block: k,
                    brow: frame.brow,
                    last,
                })
            }
            Some(last) if frame.brow != last => flush(last, &mut pending)?,
            _ => {}
        }
        current = Some(frame.brow);

        let before = pending.len();
        decode_block(&mut cursor, payload.schemes[k], frame, &mut pending)?;
        if let Some(e) = pending[before..]
            .iter()
            .find(|e| e.row >= m_local || e.col >= n_local)
        {
            return Err(DecodeError::OutOfBounds {
                row: e.row,
                col: e.col,
                m_local,
                n_local,
            });
        }
    }
    if let Some(last) = current {
        flush(last, &mut pending)?;
    }
    cursor.finish()
}

/// Decodes one rank's payload into CSR with local indexes.
pub fn load_rank_file(payload: &AbhsfPayload) -> Result<CsrMatrix> {
    let m_local = to_usize(payload.m_local, "m_local")?;
    let z_local = to_usize(payload.z_local, "z_local")?;
    let s = payload.block_size as usize;
    let mut csr = CsrMatrix {
        m: to_usize(payload.m, "m")?,
        n: to_usize(payload.n, "n")?,
        z: to_usize(payload.z, "z")?,
        m_local,
        n_local: to_usize(payload.n_local, "n_local")?,
        z_local,
        m_offset: to_usize(payload.m_offset, "m_offset")?,
        n_offset: to_usize(payload.n_offset, "n_offset")?,
        vals: Vec::with_capacity(z_local.min(1 << 24)),
        colinds: Vec::with_capacity(z_local.min(1 << 24)),
        rowptrs: Vec::with_capacity(m_local.min(1 << 24) + 1),
    };
    csr.rowptrs.push(0);
    // Rows whose end pointer has been emitted.
    let mut row = 0usize;

    for_each_block_row(payload, |brow, elements| {
        for e in elements {
            while row < e.row {
                csr.rowptrs.push(csr.colinds.len());
                row += 1;
            }
            csr.colinds.push(e.col);
            csr.vals.push(e.val);
        }
        let block_row_end = ((brow as usize + 1) * s).min(m_local);
        while row < block_row_end {
            csr.rowptrs.push(csr.colinds.len());
            row += 1;
        }
        Ok(())
    })?;
    while row < m_local {
        csr.rowptrs.push(csr.colinds.len());
        row += 1;
    }
    debug_assert_eq!(csr.colinds.len(), z_local);
    Ok(csr)
}
