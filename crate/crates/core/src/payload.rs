//! In-memory image of one rank file.

use thiserror::Error;

use crate::scheme::{bitmap_bytes_per_block, SchemeTag, MAX_BLOCK_SIZE};
use crate::sparse::{GlobalHeader, PartitionExtent};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PayloadError {
    #[error("block size {0} outside 1..={MAX_BLOCK_SIZE}")]
    BlockSize(u64),
    #[error("dataset `{name}` has {found} entries, expected {expected}")]
    Length {
        name: &'static str,
        found: usize,
        expected: usize,
    },
    #[error("wrong scheme tag {tag} at block {block}")]
    SchemeTag { block: usize, tag: u8 },
    #[error("block {block} holds {zeta} nonzeros, outside 1..={max}")]
    Zeta { block: usize, zeta: u32, max: u64 },
    #[error("sum of block nonzero counts is {sum}, header z_local is {z_local}")]
    ZetaSum { sum: u64, z_local: u64 },
    #[error("block {block} at ({brow}, {bcol}) lies outside the {rows}x{cols} block grid")]
    BlockOutOfGrid {
        block: usize,
        brow: u32,
        bcol: u32,
        rows: u64,
        cols: u64,
    },
    #[error("block {block} at ({brow}, {bcol}) is not after its predecessor")]
    BlockOrder { block: usize, brow: u32, bcol: u32 },
    #[error("header inconsistent: {0}")]
    Header(String),
}

/// One rank's local submatrix in blocked form: ten header attributes plus
/// thirteen datasets.
///
/// The per-scheme streams concatenate the representations of all blocks of
/// that scheme in block order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AbhsfPayload {
    pub m: u64,
    pub n: u64,
    pub z: u64,
    pub m_local: u64,
    pub n_local: u64,
    pub z_local: u64,
    pub m_offset: u64,
    pub n_offset: u64,
    pub block_size: u64,
    pub blocks: u64,

    pub schemes: Vec<u8>,
    pub zetas: Vec<u32>,
    pub brows: Vec<u32>,
    pub bcols: Vec<u32>,
    pub coo_lrows: Vec<u16>,
    pub coo_lcols: Vec<u16>,
    pub coo_vals: Vec<f64>,
    pub csr_lcolinds: Vec<u16>,
    pub csr_rowptrs: Vec<u32>,
    pub csr_vals: Vec<f64>,
    pub bitmap_bitmap: Vec<u8>,
    pub bitmap_vals: Vec<f64>,
    pub dense_vals: Vec<f64>,
}

/// Per-scheme block and nonzero tallies of a payload.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SchemeCounts {
    pub blocks: [usize; 4],
    pub nonzeros: [u64; 4],
}

impl AbhsfPayload {
    /// Header-only payload with no blocks.
    pub fn empty(header: GlobalHeader, extent: PartitionExtent, block_size: usize) -> Self {
        AbhsfPayload {
            m: header.m as u64,
            n: header.n as u64,
            z: header.z as u64,
            m_local: extent.m_local as u64,
            n_local: extent.n_local as u64,
            m_offset: extent.m_offset as u64,
            n_offset: extent.n_offset as u64,
            block_size: block_size as u64,
            ..Default::default()
        }
    }

    pub fn header(&self) -> GlobalHeader {
        GlobalHeader {
            m: self.m as usize,
            n: self.n as usize,
            z: self.z as usize,
        }
    }

    pub fn extent(&self) -> PartitionExtent {
        PartitionExtent {
            m_offset: self.m_offset as usize,
            n_offset: self.n_offset as usize,
            m_local: self.m_local as usize,
            n_local: self.n_local as usize,
        }
    }

    /// Block rows and columns of the local block grid.
    pub fn block_grid(&self) -> (u64, u64) {
        let s = self.block_size.max(1);
        (self.m_local.div_ceil(s), self.n_local.div_ceil(s))
    }

    /// Tallies blocks per scheme. Unknown tags are skipped.
    pub fn scheme_counts(&self) -> SchemeCounts {
        let mut counts = SchemeCounts::default();
        for (&tag, &zeta) in self.schemes.iter().zip(&self.zetas) {
            if let Some(t) = SchemeTag::from_u8(tag) {
                counts.blocks[t as usize] += 1;
                counts.nonzeros[t as usize] += zeta as u64;
            }
        }
        counts
    }

    /// Total bytes of the nine per-scheme streams.
    pub fn block_stream_bytes(&self) -> usize {
        2 * (self.coo_lrows.len() + self.coo_lcols.len() + self.csr_lcolinds.len())
            + 4 * self.csr_rowptrs.len()
            + self.bitmap_bitmap.len()
            + 8 * (self.coo_vals.len()
                + self.csr_vals.len()
                + self.bitmap_vals.len()
                + self.dense_vals.len())
    }

    /// Checks every structural invariant: header consistency, per-block
    /// descriptors, strictly increasing block order and all dataset lengths.
    pub fn validate(&self) -> Result<(), PayloadError> {
        let s = self.block_size;
        if s == 0 || s > MAX_BLOCK_SIZE as u64 {
            return Err(PayloadError::BlockSize(s));
        }
        let header = |msg: &str| Err(PayloadError::Header(msg.to_string()));
        if self.z_local > self.z {
            return header("z_local exceeds z");
        }
        if self.z_local == 0 {
            if self.m_local != 0 || self.n_local != 0 || self.m_offset != 0 || self.n_offset != 0 {
                return header("a rank without nonzeros must have an all-zero extent");
            }
        } else {
            if self.m_local == 0 || self.n_local == 0 {
                return header("a rank with nonzeros needs a nonempty extent");
            }
            if self
                .m_offset
                .checked_add(self.m_local)
                .is_none_or(|end| end > self.m)
                || self
                    .n_offset
                    .checked_add(self.n_local)
                    .is_none_or(|end| end > self.n)
            {
                return header("local extent exceeds the global matrix");
            }
            if self.z_local > self.m_local.saturating_mul(self.n_local) {
                return header("z_local exceeds the local submatrix size");
            }
        }

        let blocks = usize::try_from(self.blocks)
            .map_err(|_| PayloadError::Header("block count too large".into()))?;
        for (name, len) in [
            ("schemes", self.schemes.len()),
            ("zetas", self.zetas.len()),
            ("brows", self.brows.len()),
            ("bcols", self.bcols.len()),
        ] {
            check_len(name, len, blocks)?;
        }

        let (grid_rows, grid_cols) = self.block_grid();
        let cells = s * s;
        let mut prev: Option<(u32, u32)> = None;
        let mut zeta_sum = 0u64;
        for k in 0..blocks {
            let tag = self.schemes[k];
            if SchemeTag::from_u8(tag).is_none() {
                return Err(PayloadError::SchemeTag { block: k, tag });
            }
            let zeta = self.zetas[k];
            if zeta == 0 || zeta as u64 > cells {
                return Err(PayloadError::Zeta {
                    block: k,
                    zeta,
                    max: cells,
                });
            }
            zeta_sum += zeta as u64;
            let (brow, bcol) = (self.brows[k], self.bcols[k]);
            if brow as u64 >= grid_rows || bcol as u64 >= grid_cols {
                return Err(PayloadError::BlockOutOfGrid {
                    block: k,
                    brow,
                    bcol,
                    rows: grid_rows,
                    cols: grid_cols,
                });
            }
            if prev.is_some_and(|p| p >= (brow, bcol)) {
                return Err(PayloadError::BlockOrder {
                    block: k,
                    brow,
                    bcol,
                });
            }
            prev = Some((brow, bcol));
        }
        if zeta_sum != self.z_local {
            return Err(PayloadError::ZetaSum {
                sum: zeta_sum,
                z_local: self.z_local,
            });
        }

        let counts = self.scheme_counts();
        let s = s as usize;
        let coo_nnz = counts.nonzeros[SchemeTag::Coo as usize] as usize;
        let csr_nnz = counts.nonzeros[SchemeTag::Csr as usize] as usize;
        let bitmap_nnz = counts.nonzeros[SchemeTag::Bitmap as usize] as usize;
        check_len("coo_lrows", self.coo_lrows.len(), coo_nnz)?;
        check_len("coo_lcols", self.coo_lcols.len(), coo_nnz)?;
        check_len("coo_vals", self.coo_vals.len(), coo_nnz)?;
        check_len("csr_lcolinds", self.csr_lcolinds.len(), csr_nnz)?;
        check_len(
            "csr_rowptrs",
            self.csr_rowptrs.len(),
            (s + 1) * counts.blocks[SchemeTag::Csr as usize],
        )?;
        check_len("csr_vals", self.csr_vals.len(), csr_nnz)?;
        check_len(
            "bitmap_bitmap",
            self.bitmap_bitmap.len(),
            bitmap_bytes_per_block(s) * counts.blocks[SchemeTag::Bitmap as usize],
        )?;
        check_len("bitmap_vals", self.bitmap_vals.len(), bitmap_nnz)?;
        check_len(
            "dense_vals",
            self.dense_vals.len(),
            s * s * counts.blocks[SchemeTag::Dense as usize],
        )?;
        Ok(())
    }
}

fn check_len(name: &'static str, found: usize, expected: usize) -> Result<(), PayloadError> {
    if found != expected {
        return Err(PayloadError::Length {
            name,
            found,
            expected,
        });
    }
    Ok(())
}
