//! Per-block storage schemes and the size model used to pick between them.
//!
//! The widths below are the ones the container writes; the cost of a scheme
//! is exactly the number of bits its block occupies in the per-scheme
//! datasets.

use std::fmt;

use thiserror::Error;

use crate::container::Dtype;

/// In-block row/column indexes (`coo_lrows`, `coo_lcols`, `csr_lcolinds`).
pub const IN_BLOCK_INDEX: Dtype = Dtype::U16;
/// In-block row pointers (`csr_rowptrs`).
pub const BLOCK_ROWPTR: Dtype = Dtype::U32;
/// Element values.
pub const VALUE: Dtype = Dtype::F64;

/// Largest block size whose in-block indexes and cell counts fit the widths
/// above.
pub const MAX_BLOCK_SIZE: usize = u16::MAX as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum SchemeTag {
    Coo = 0,
    Csr = 1,
    Bitmap = 2,
    Dense = 3,
}

impl SchemeTag {
    pub const ALL: [SchemeTag; 4] = [
        SchemeTag::Coo,
        SchemeTag::Csr,
        SchemeTag::Bitmap,
        SchemeTag::Dense,
    ];

    /// Preference on equal cost, most preferred first.
    const TIE_ORDER: [SchemeTag; 4] = [
        SchemeTag::Dense,
        SchemeTag::Bitmap,
        SchemeTag::Csr,
        SchemeTag::Coo,
    ];

    pub fn from_u8(v: u8) -> Option<SchemeTag> {
        match v {
            0 => Some(SchemeTag::Coo),
            1 => Some(SchemeTag::Csr),
            2 => Some(SchemeTag::Bitmap),
            3 => Some(SchemeTag::Dense),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            SchemeTag::Coo => "COO",
            SchemeTag::Csr => "CSR",
            SchemeTag::Bitmap => "bitmap",
            SchemeTag::Dense => "dense",
        }
    }
}

impl fmt::Display for SchemeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemeError {
    #[error("block holds {zeta} nonzeros, outside 1..={cells} for block size {s}")]
    ZetaOutOfRange { zeta: u64, s: u64, cells: u64 },
    #[error("block size {0} outside 1..={MAX_BLOCK_SIZE}")]
    BlockSize(u64),
}

/// Bytes one bitmap block occupies; each block is padded to whole bytes.
#[inline]
pub fn bitmap_bytes_per_block(s: usize) -> usize {
    (s * s).div_ceil(8)
}

/// Stored size in bits of one block with `zeta` nonzeros under `scheme`.
pub fn scheme_cost(scheme: SchemeTag, zeta: u64, s: u64) -> Result<u64, SchemeError> {
    if s == 0 || s > MAX_BLOCK_SIZE as u64 {
        return Err(SchemeError::BlockSize(s));
    }
    let cells = s * s;
    if zeta == 0 || zeta > cells {
        return Err(SchemeError::ZetaOutOfRange { zeta, s, cells });
    }
    let idx = IN_BLOCK_INDEX.bits();
    let ptr = BLOCK_ROWPTR.bits();
    let val = VALUE.bits();
    Ok(match scheme {
        SchemeTag::Coo => zeta * (2 * idx + val),
        SchemeTag::Csr => zeta * (idx + val) + (s + 1) * ptr,
        SchemeTag::Bitmap => cells + zeta * val,
        SchemeTag::Dense => cells * val,
    })
}

/// The scheme of minimal [`scheme_cost`]; ties go to the denser scheme.
pub fn select_scheme(zeta: u64, s: u64) -> Result<SchemeTag, SchemeError> {
    let mut best = None::<(u64, SchemeTag)>;
    for tag in SchemeTag::TIE_ORDER {
        let cost = scheme_cost(tag, zeta, s)?;
        if best.is_none_or(|(c, _)| cost < c) {
            best = Some((cost, tag));
        }
    }
    Ok(best.expect("four candidates").1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn costs(zeta: u64, s: u64) -> [u64; 4] {
        SchemeTag::ALL.map(|t| scheme_cost(t, zeta, s).unwrap())
    }

    #[test]
    fn full_4x4_block() {
        // COO, CSR, bitmap, dense
        assert_eq!(costs(16, 4), [1536, 1440, 1040, 1024]);
        assert_eq!(select_scheme(16, 4).unwrap(), SchemeTag::Dense);
    }

    #[test]
    fn single_element_4x4_block() {
        // With one bit per cell the bitmap undercuts COO's two 16-bit indexes.
        assert_eq!(costs(1, 4), [96, 240, 80, 1024]);
        assert_eq!(select_scheme(1, 4).unwrap(), SchemeTag::Bitmap);
    }

    #[test]
    fn single_cell_block_prefers_dense() {
        assert_eq!(costs(1, 1), [96, 144, 65, 64]);
        assert_eq!(select_scheme(1, 1).unwrap(), SchemeTag::Dense);
    }

    #[test]
    fn coo_wins_sparse_large_blocks() {
        assert_eq!(costs(1, 8), [96, 368, 128, 4096]);
        assert_eq!(select_scheme(1, 8).unwrap(), SchemeTag::Coo);
        assert_eq!(select_scheme(100, 64).unwrap(), SchemeTag::Coo);
    }

    #[test]
    fn csr_needs_blocks_above_64() {
        // CSR beats COO above 2(s+1) nonzeros and bitmap below (s²-32s-32)/16,
        // which only overlap for s >= 65.
        for s in 1..=64u64 {
            for zeta in 1..=s * s {
                assert_ne!(
                    select_scheme(zeta, s).unwrap(),
                    SchemeTag::Csr,
                    "s={s} zeta={zeta}"
                );
            }
        }
        assert_eq!(costs(300, 128), [28800, 28128, 35584, 1048576]);
        assert_eq!(select_scheme(300, 128).unwrap(), SchemeTag::Csr);
    }

    #[test]
    fn full_blocks_are_dense() {
        for s in 1..=40 {
            assert_eq!(select_scheme(s * s, s).unwrap(), SchemeTag::Dense);
        }
    }

    #[test]
    fn tie_goes_to_denser_scheme() {
        // s=2: COO(zeta=4)=384, CSR=320+96=416, bitmap=4+256=260, dense=256.
        assert_eq!(select_scheme(4, 2).unwrap(), SchemeTag::Dense);
        // Search for any exact tie and check the preferred scheme wins.
        let mut found = 0;
        for s in 1..=80u64 {
            for zeta in 1..=s * s {
                let c = costs(zeta, s);
                let min = *c.iter().min().unwrap();
                let winners: Vec<SchemeTag> = SchemeTag::ALL
                    .iter()
                    .copied()
                    .filter(|t| c[*t as usize] == min)
                    .collect();
                if winners.len() > 1 {
                    found += 1;
                    let expected = *winners.iter().max().unwrap();
                    assert_eq!(select_scheme(zeta, s).unwrap(), expected);
                }
            }
        }
        assert!(found > 0);
    }

    #[test]
    fn range_errors() {
        assert!(matches!(
            scheme_cost(SchemeTag::Coo, 0, 4),
            Err(SchemeError::ZetaOutOfRange { .. })
        ));
        assert!(matches!(
            scheme_cost(SchemeTag::Coo, 17, 4),
            Err(SchemeError::ZetaOutOfRange { .. })
        ));
        assert_eq!(select_scheme(1, 0), Err(SchemeError::BlockSize(0)));
        assert_eq!(select_scheme(1, 65536), Err(SchemeError::BlockSize(65536)));
    }

    #[test]
    fn tags_round_trip_through_bytes() {
        for t in SchemeTag::ALL {
            assert_eq!(SchemeTag::from_u8(t.as_u8()), Some(t));
        }
        assert_eq!(SchemeTag::from_u8(4), None);
    }
}
