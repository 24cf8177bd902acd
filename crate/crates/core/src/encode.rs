//! Store path: cut a rank's local submatrix into `s x s` blocks, pick a
//! scheme per block and append the block to the matching streams.

use thiserror::Error;

use crate::payload::AbhsfPayload;
use crate::scheme::{
    bitmap_bytes_per_block, select_scheme, SchemeError, SchemeTag, MAX_BLOCK_SIZE,
};
use crate::sparse::{Element, GlobalHeader, PartitionExtent, SparseError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Element(#[from] SparseError),
    #[error("block grid index {0} does not fit in 32 bits")]
    GridTooLarge(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockDescriptor {
    pub brow: u32,
    pub bcol: u32,
    pub zeta: u32,
    pub scheme: SchemeTag,
}

/// A nonzero addressed within its block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockCell {
    pub lrow: u16,
    pub lcol: u16,
    pub val: f64,
}

/// One nonempty block with its cells in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub desc: BlockDescriptor,
    pub cells: Vec<BlockCell>,
}

fn check_block_size(s: usize) -> Result<(), SchemeError> {
    if s == 0 || s > MAX_BLOCK_SIZE {
        return Err(SchemeError::BlockSize(s as u64));
    }
    Ok(())
}

/// Buckets local elements into nonempty blocks, ordered by `(brow, bcol)`,
/// each with its cells ordered by `(lrow, lcol)`, and selects the cheapest
/// scheme for each block.
pub fn partition_blocks(
    elements: &[Element],
    extent: PartitionExtent,
    s: usize,
) -> Result<Vec<Block>, EncodeError> {
    partition_blocks_with(elements, extent, s, |_, _, zeta| {
        select_scheme(zeta as u64, s as u64).expect("zeta and s already range-checked")
    })
}

/// As [`partition_blocks`], with the scheme chosen by `choose(brow, bcol, zeta)`.
pub fn partition_blocks_with<F>(
    elements: &[Element],
    extent: PartitionExtent,
    s: usize,
    choose: F,
) -> Result<Vec<Block>, EncodeError>
where
    F: Fn(u32, u32, u32) -> SchemeTag,
{
    check_block_size(s)?;
    let mut keyed = Vec::with_capacity(elements.len());
    for e in elements {
        if e.row >= extent.m_local || e.col >= extent.n_local {
            return Err(SparseError::OutOfBounds {
                row: e.row,
                col: e.col,
                rows: extent.m_local,
                cols: extent.n_local,
            }
            .into());
        }
        if e.val == 0.0 || !e.val.is_finite() {
            return Err(SparseError::BadValue {
                row: e.row,
                col: e.col,
                val: e.val,
            }
            .into());
        }
        let brow = u32::try_from(e.row / s).map_err(|_| EncodeError::GridTooLarge(e.row / s))?;
        let bcol = u32::try_from(e.col / s).map_err(|_| EncodeError::GridTooLarge(e.col / s))?;
        let cell = BlockCell {
            lrow: (e.row % s) as u16,
            lcol: (e.col % s) as u16,
            val: e.val,
        };
        keyed.push(((brow, bcol), cell));
    }
    keyed.sort_by_key(|(b, c)| (*b, c.lrow, c.lcol));

    let mut blocks: Vec<Block> = Vec::new();
    for (i, &((brow, bcol), cell)) in keyed.iter().enumerate() {
        if i > 0 {
            let ((pb, pc), prev) = keyed[i - 1];
            if (pb, pc, prev.lrow, prev.lcol) == (brow, bcol, cell.lrow, cell.lcol) {
                return Err(SparseError::Duplicate {
                    row: brow as usize * s + cell.lrow as usize,
                    col: bcol as usize * s + cell.lcol as usize,
                }
                .into());
            }
        }
        match blocks.last_mut() {
            Some(b) if (b.desc.brow, b.desc.bcol) == (brow, bcol) => b.cells.push(cell),
            _ => blocks.push(Block {
                desc: BlockDescriptor {
                    brow,
                    bcol,
                    zeta: 0,
                    scheme: SchemeTag::Coo,
                },
                cells: vec![cell],
            }),
        }
    }
    for b in &mut blocks {
        b.desc.zeta = b.cells.len() as u32;
        b.desc.scheme = choose(b.desc.brow, b.desc.bcol, b.desc.zeta);
    }
    Ok(blocks)
}

/// Appends one block's descriptor and representation to `payload`.
///
/// The block's `desc.scheme` decides the streams written; `cells` must be in
/// row-major order with `lrow, lcol < s`.
pub fn encode_block(payload: &mut AbhsfPayload, block: &Block, s: usize) {
    let d = &block.desc;
    payload.schemes.push(d.scheme.as_u8());
    payload.zetas.push(d.zeta);
    payload.brows.push(d.brow);
    payload.bcols.push(d.bcol);
    payload.blocks += 1;
    match d.scheme {
        SchemeTag::Coo => {
            for c in &block.cells {
                payload.coo_lrows.push(c.lrow);
                payload.coo_lcols.push(c.lcol);
                payload.coo_vals.push(c.val);
            }
        }
        SchemeTag::Csr => {
            let start = payload.csr_rowptrs.len();
            payload.csr_rowptrs.resize(start + s + 1, 0);
            for c in &block.cells {
                payload.csr_rowptrs[start + c.lrow as usize + 1] += 1;
                payload.csr_lcolinds.push(c.lcol);
                payload.csr_vals.push(c.val);
            }
            for r in 0..s {
                payload.csr_rowptrs[start + r + 1] += payload.csr_rowptrs[start + r];
            }
        }
        SchemeTag::Bitmap => {
            let start = payload.bitmap_bitmap.len();
            payload
                .bitmap_bitmap
                .resize(start + bitmap_bytes_per_block(s), 0);
            for c in &block.cells {
                let cell = c.lrow as usize * s + c.lcol as usize;
                payload.bitmap_bitmap[start + cell / 8] |= 1 << (cell % 8);
                payload.bitmap_vals.push(c.val);
            }
        }
        SchemeTag::Dense => {
            let start = payload.dense_vals.len();
            payload.dense_vals.resize(start + s * s, 0.0);
            for c in &block.cells {
                payload.dense_vals[start + c.lrow as usize * s + c.lcol as usize] = c.val;
            }
        }
    }
}

/// Encodes a rank's local elements with the cheapest scheme per block.
pub fn encode_rank(
    elements: &[Element],
    extent: PartitionExtent,
    header: GlobalHeader,
    s: usize,
) -> Result<AbhsfPayload, EncodeError> {
    let blocks = partition_blocks(elements, extent, s)?;
    Ok(assemble(&blocks, elements.len(), extent, header, s))
}

/// Encodes with the scheme of every block chosen by `choose(brow, bcol, zeta)`.
pub fn encode_rank_with<F>(
    elements: &[Element],
    extent: PartitionExtent,
    header: GlobalHeader,
    s: usize,
    choose: F,
) -> Result<AbhsfPayload, EncodeError>
where
    F: Fn(u32, u32, u32) -> SchemeTag,
{
    let blocks = partition_blocks_with(elements, extent, s, choose)?;
    Ok(assemble(&blocks, elements.len(), extent, header, s))
}

fn assemble(
    blocks: &[Block],
    z_local: usize,
    extent: PartitionExtent,
    header: GlobalHeader,
    s: usize,
) -> AbhsfPayload {
    let mut payload = AbhsfPayload::empty(header, extent, s);
    payload.z_local = z_local as u64;
    for block in blocks {
        encode_block(&mut payload, block, s);
    }
    payload
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::scheme_cost;
    use proptest::prelude::*;

    fn ext(m: usize, n: usize) -> PartitionExtent {
        PartitionExtent {
            m_offset: 0,
            n_offset: 0,
            m_local: m,
            n_local: n,
        }
    }

    fn header(z: usize) -> GlobalHeader {
        GlobalHeader { m: 100, n: 100, z }
    }

    #[test]
    fn buckets_by_block() {
        let elems = [
            Element::new(0, 0, 1.0),
            Element::new(1, 1, 2.0),
            Element::new(2, 0, 3.0),
        ];
        let blocks = partition_blocks(&elems, ext(3, 2), 2).unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(
            (
                blocks[0].desc.brow,
                blocks[0].desc.bcol,
                blocks[0].desc.zeta
            ),
            (0, 0, 2)
        );
        assert_eq!(
            (
                blocks[1].desc.brow,
                blocks[1].desc.bcol,
                blocks[1].desc.zeta
            ),
            (1, 0, 1)
        );
        assert_eq!(blocks[1].cells[0].lrow, 0);
    }

    #[test]
    fn large_block_holds_everything() {
        let elems = [
            Element::new(4, 1, 1.0),
            Element::new(0, 3, 2.0),
            Element::new(2, 2, 3.0),
        ];
        let blocks = partition_blocks(&elems, ext(5, 4), 5).unwrap();
        assert_eq!(blocks.len(), 1);
        let order: Vec<(u16, u16)> = blocks[0].cells.iter().map(|c| (c.lrow, c.lcol)).collect();
        assert_eq!(order, vec![(0, 3), (2, 2), (4, 1)]);
        assert!(partition_blocks(&[], ext(0, 0), 4).unwrap().is_empty());
    }

    #[test]
    fn single_element_small_block_is_bitmap() {
        // s=2: COO 96, CSR 176, bitmap 68, dense 256 bits.
        let p = encode_rank(&[Element::new(0, 0, 7.5)], ext(1, 1), header(1), 2).unwrap();
        assert_eq!(p.blocks, 1);
        assert_eq!(p.schemes, vec![SchemeTag::Bitmap.as_u8()]);
        assert_eq!(p.bitmap_bitmap, vec![0b0000_0001]);
        assert_eq!(p.bitmap_vals, vec![7.5]);
        p.validate().unwrap();
    }

    #[test]
    fn single_element_wide_block_is_coo() {
        let p = encode_rank(&[Element::new(0, 0, 7.5)], ext(1, 1), header(1), 8).unwrap();
        assert_eq!(p.schemes, vec![SchemeTag::Coo.as_u8()]);
        assert_eq!(
            (p.coo_lrows.clone(), p.coo_lcols.clone(), p.coo_vals.clone()),
            (vec![0], vec![0], vec![7.5])
        );
    }

    #[test]
    fn full_block_is_dense_row_major() {
        let elems = [
            Element::new(1, 1, 4.0),
            Element::new(0, 0, 1.0),
            Element::new(1, 0, 3.0),
            Element::new(0, 1, 2.0),
        ];
        let p = encode_rank(&elems, ext(2, 2), header(4), 2).unwrap();
        assert_eq!(p.schemes, vec![SchemeTag::Dense.as_u8()]);
        assert_eq!(p.dense_vals, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn bitmap_bit_order() {
        let elems = [Element::new(1, 0, 9.0), Element::new(0, 1, 8.0)];
        let p =
            encode_rank_with(&elems, ext(2, 2), header(2), 2, |_, _, _| SchemeTag::Bitmap).unwrap();
        assert_eq!(p.bitmap_bitmap, vec![0b0000_0110]);
        assert_eq!(p.bitmap_vals, vec![8.0, 9.0]);
    }

    #[test]
    fn csr_block_row_pointers() {
        let elems = [
            Element::new(0, 1, 1.0),
            Element::new(2, 0, 2.0),
            Element::new(2, 2, 3.0),
        ];
        let p =
            encode_rank_with(&elems, ext(3, 3), header(3), 4, |_, _, _| SchemeTag::Csr).unwrap();
        assert_eq!(p.csr_rowptrs, vec![0, 1, 1, 3, 3]);
        assert_eq!(p.csr_lcolinds, vec![1, 0, 2]);
        p.validate().unwrap();
    }

    #[test]
    fn edge_blocks_pad_full_frames() {
        // 3x3 local matrix with s=2 leaves partial edge blocks.
        let elems = [Element::new(2, 2, 5.0)];
        let dense =
            encode_rank_with(&elems, ext(3, 3), header(1), 2, |_, _, _| SchemeTag::Dense).unwrap();
        assert_eq!(
            (dense.brows.clone(), dense.bcols.clone()),
            (vec![1], vec![1])
        );
        assert_eq!(dense.dense_vals, vec![5.0, 0.0, 0.0, 0.0]);
        dense.validate().unwrap();
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            encode_rank(&[Element::new(0, 0, 0.0)], ext(1, 1), header(1), 2),
            Err(EncodeError::Element(SparseError::BadValue { .. }))
        ));
        assert!(matches!(
            encode_rank(
                &[Element::new(1, 1, 1.0), Element::new(1, 1, 2.0)],
                ext(2, 2),
                header(2),
                2
            ),
            Err(EncodeError::Element(SparseError::Duplicate {
                row: 1,
                col: 1
            }))
        ));
        assert!(matches!(
            encode_rank(&[Element::new(0, 0, 1.0)], ext(1, 1), header(1), 0),
            Err(EncodeError::Scheme(SchemeError::BlockSize(0)))
        ));
    }

    fn local_elements(max: usize) -> impl Strategy<Value = (usize, usize, Vec<Element>)> {
        (1..max, 1..max).prop_flat_map(|(m, n)| {
            proptest::collection::btree_map((0..m, 0..n), 1u32..1000, 0..(m * n).min(200)).prop_map(
                move |cells| {
                    let elems = cells
                        .into_iter()
                        .map(|((r, c), v)| Element::new(r, c, v as f64 * 0.5))
                        .collect();
                    (m, n, elems)
                },
            )
        })
    }

    proptest! {
        #[test]
        fn emitted_bytes_match_cost_model((m, n, elems) in local_elements(40), s in 1usize..20) {
            let blocks = partition_blocks(&elems, ext(m, n), s).unwrap();
            for block in &blocks {
                for scheme in SchemeTag::ALL {
                    let mut forced = block.clone();
                    forced.desc.scheme = scheme;
                    let mut p = AbhsfPayload::default();
                    encode_block(&mut p, &forced, s);
                    let bits = scheme_cost(scheme, block.desc.zeta as u64, s as u64).unwrap();
                    prop_assert_eq!(p.block_stream_bytes() as u64, bits.div_ceil(8));
                }
            }
        }

        #[test]
        fn encode_is_deterministic_and_valid((m, n, elems) in local_elements(40), s in 1usize..20) {
            let mut reversed = elems.clone();
            reversed.reverse();
            let a = encode_rank(&elems, ext(m, n), header(elems.len()), s).unwrap();
            let b = encode_rank(&reversed, ext(m, n), header(elems.len()), s).unwrap();
            prop_assert_eq!(&a, &b);
            if !elems.is_empty() {
                let tight = crate::sparse::compute_extent(&elems);
                let locals: Vec<Element> = elems.iter().map(|e| tight.localize(e)).collect();
                let p = encode_rank(&locals, tight, header(elems.len()), s).unwrap();
                p.validate().unwrap();
                prop_assert_eq!(p.zetas.iter().map(|&z| z as u64).sum::<u64>(), p.z_local);
            }
        }
    }
}
