//! In-memory sparse matrix types.
//!
//! Indices are 0-based everywhere. A [`CsrMatrix`] holds one rank's local
//! submatrix: its `colinds` and row numbering are relative to the rank's
//! [`PartitionExtent`], and `m_offset`/`n_offset` locate it in the global
//! matrix.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("element ({row}, {col}) out of bounds for {rows}x{cols} matrix")]
    OutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("duplicate element at ({row}, {col})")]
    Duplicate { row: usize, col: usize },
    #[error("element ({row}, {col}) has value {val}; only finite nonzero values can be stored")]
    BadValue { row: usize, col: usize, val: f64 },
    #[error("invalid CSR structure: {0}")]
    InvalidCsr(String),
}

/// One nonzero: `(row, col, val)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Element {
    pub row: usize,
    pub col: usize,
    pub val: f64,
}

impl Element {
    pub fn new(row: usize, col: usize, val: f64) -> Self {
        Element { row, col, val }
    }

    /// Lexicographic `(row, col)` key.
    #[inline]
    pub fn key(&self) -> (usize, usize) {
        (self.row, self.col)
    }

    /// Equality including the exact bit pattern of the value.
    #[inline]
    pub fn bitwise_eq(&self, other: &Element) -> bool {
        self.row == other.row && self.col == other.col && self.val.to_bits() == other.val.to_bits()
    }
}

/// Global shape and nonzero count shared by all ranks of a distributed matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct GlobalHeader {
    pub m: usize,
    pub n: usize,
    pub z: usize,
}

/// A whole matrix in coordinate form.
///
/// Construction through [`CooMatrix::new`] rejects out-of-bounds entries,
/// duplicates and values that cannot survive a store/load round trip (zero or
/// non-finite), and sorts the elements lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct CooMatrix {
    m: usize,
    n: usize,
    elements: Vec<Element>,
}

impl CooMatrix {
    pub fn new(m: usize, n: usize, mut elements: Vec<Element>) -> Result<Self, SparseError> {
        for e in &elements {
            check_element(e, m, n)?;
        }
        sort_and_check_duplicates(&mut elements)?;
        Ok(CooMatrix { m, n, elements })
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn into_elements(self) -> Vec<Element> {
        self.elements
    }

    pub fn header(&self) -> GlobalHeader {
        GlobalHeader {
            m: self.m,
            n: self.n,
            z: self.elements.len(),
        }
    }

    /// Number of nonzeros in each row.
    pub fn row_histogram(&self) -> Vec<u64> {
        let mut hist = vec![0u64; self.m];
        for e in &self.elements {
            hist[e.row] += 1;
        }
        hist
    }
}

fn check_element(e: &Element, rows: usize, cols: usize) -> Result<(), SparseError> {
    if e.row >= rows || e.col >= cols {
        return Err(SparseError::OutOfBounds {
            row: e.row,
            col: e.col,
            rows,
            cols,
        });
    }
    if e.val == 0.0 || !e.val.is_finite() {
        return Err(SparseError::BadValue {
            row: e.row,
            col: e.col,
            val: e.val,
        });
    }
    Ok(())
}

/// Stable lexicographic sort followed by a duplicate scan.
pub(crate) fn sort_and_check_duplicates(elements: &mut [Element]) -> Result<(), SparseError> {
    elements.sort_by_key(Element::key);
    if let Some(w) = elements.windows(2).find(|w| w[0].key() == w[1].key()) {
        return Err(SparseError::Duplicate {
            row: w[0].row,
            col: w[0].col,
        });
    }
    Ok(())
}

/// Tight bounding box of one rank's nonzeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PartitionExtent {
    pub m_offset: usize,
    pub n_offset: usize,
    pub m_local: usize,
    pub n_local: usize,
}

impl PartitionExtent {
    pub fn is_empty(&self) -> bool {
        self.m_local == 0 || self.n_local == 0
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.m_offset
            && row - self.m_offset < self.m_local
            && col >= self.n_offset
            && col - self.n_offset < self.n_local
    }

    /// Global → local coordinates. The caller guarantees containment.
    pub fn localize(&self, e: &Element) -> Element {
        Element::new(e.row - self.m_offset, e.col - self.n_offset, e.val)
    }

    pub fn globalize(&self, e: &Element) -> Element {
        Element::new(e.row + self.m_offset, e.col + self.n_offset, e.val)
    }
}

/// Bounding box `[min i, max i] x [min j, max j]` of the given elements; an
/// empty input yields the all-zero extent.
pub fn compute_extent(elements: &[Element]) -> PartitionExtent {
    let Some(first) = elements.first() else {
        return PartitionExtent::default();
    };
    let (mut r0, mut r1, mut c0, mut c1) = (first.row, first.row, first.col, first.col);
    for e in &elements[1..] {
        r0 = r0.min(e.row);
        r1 = r1.max(e.row);
        c0 = c0.min(e.col);
        c1 = c1.max(e.col);
    }
    PartitionExtent {
        m_offset: r0,
        n_offset: c0,
        m_local: r1 - r0 + 1,
        n_local: c1 - c0 + 1,
    }
}

/// Local submatrix in compressed sparse rows, with the global header fields
/// carried alongside.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsrMatrix {
    pub m: usize,
    pub n: usize,
    pub z: usize,
    pub m_local: usize,
    pub n_local: usize,
    pub z_local: usize,
    pub m_offset: usize,
    pub n_offset: usize,
    pub vals: Vec<f64>,
    pub colinds: Vec<usize>,
    pub rowptrs: Vec<usize>,
}

impl CsrMatrix {
    pub fn extent(&self) -> PartitionExtent {
        PartitionExtent {
            m_offset: self.m_offset,
            n_offset: self.n_offset,
            m_local: self.m_local,
            n_local: self.n_local,
        }
    }

    pub fn header(&self) -> GlobalHeader {
        GlobalHeader {
            m: self.m,
            n: self.n,
            z: self.z,
        }
    }

    /// Checks the structural CSR invariants.
    pub fn validate(&self) -> Result<(), SparseError> {
        let bad = |msg: String| Err(SparseError::InvalidCsr(msg));
        if self.rowptrs.len() != self.m_local + 1 {
            return bad(format!(
                "rowptrs has {} entries, expected {}",
                self.rowptrs.len(),
                self.m_local + 1
            ));
        }
        if self.rowptrs[0] != 0 || self.rowptrs[self.m_local] != self.z_local {
            return bad("rowptrs must start at 0 and end at z_local".into());
        }
        if self.vals.len() != self.z_local || self.colinds.len() != self.z_local {
            return bad("vals/colinds length differs from z_local".into());
        }
        for (row, w) in self.rowptrs.windows(2).enumerate() {
            if w[0] > w[1] {
                return bad(format!("rowptrs decrease at row {row}"));
            }
            let cols = &self.colinds[w[0]..w[1]];
            if cols.windows(2).any(|c| c[0] >= c[1]) {
                return bad(format!(
                    "column indexes not strictly increasing in row {row}"
                ));
            }
            if cols.last().is_some_and(|&c| c >= self.n_local) {
                return bad(format!("column index out of range in row {row}"));
            }
        }
        Ok(())
    }

    /// Iterates the stored elements in local coordinates, row-major.
    pub fn local_elements(&self) -> impl Iterator<Item = Element> + '_ {
        self.rowptrs
            .windows(2)
            .enumerate()
            .flat_map(move |(row, w)| {
                (w[0]..w[1]).map(move |p| Element::new(row, self.colinds[p], self.vals[p]))
            })
    }

    /// Iterates the stored elements in global coordinates, row-major.
    pub fn global_elements(&self) -> impl Iterator<Item = Element> + '_ {
        let ext = self.extent();
        self.local_elements().map(move |e| ext.globalize(&e))
    }

    /// Field-for-field equality with values compared by bit pattern.
    pub fn bitwise_eq(&self, other: &CsrMatrix) -> bool {
        self.m == other.m
            && self.n == other.n
            && self.z == other.z
            && self.extent() == other.extent()
            && self.z_local == other.z_local
            && self.colinds == other.colinds
            && self.rowptrs == other.rowptrs
            && self.vals.len() == other.vals.len()
            && self
                .vals
                .iter()
                .zip(&other.vals)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl fmt::Display for CsrMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "CSR {}x{} local at ({}, {}) of {}x{} global, {} of {} nonzeros",
            self.m_local,
            self.n_local,
            self.m_offset,
            self.n_offset,
            self.m,
            self.n,
            self.z_local,
            self.z
        )
    }
}

/// Builds canonical CSR from local-coordinate elements.
pub fn coo_to_csr(
    elements: &[Element],
    extent: PartitionExtent,
    header: GlobalHeader,
) -> Result<CsrMatrix, SparseError> {
    let mut sorted = elements.to_vec();
    for e in &sorted {
        if e.row >= extent.m_local || e.col >= extent.n_local {
            return Err(SparseError::OutOfBounds {
                row: e.row,
                col: e.col,
                rows: extent.m_local,
                cols: extent.n_local,
            });
        }
    }
    sort_and_check_duplicates(&mut sorted)?;

    let mut rowptrs = vec![0usize; extent.m_local + 1];
    for e in &sorted {
        rowptrs[e.row + 1] += 1;
    }
    for r in 0..extent.m_local {
        rowptrs[r + 1] += rowptrs[r];
    }
    Ok(CsrMatrix {
        m: header.m,
        n: header.n,
        z: header.z,
        m_local: extent.m_local,
        n_local: extent.n_local,
        z_local: sorted.len(),
        m_offset: extent.m_offset,
        n_offset: extent.n_offset,
        vals: sorted.iter().map(|e| e.val).collect(),
        colinds: sorted.iter().map(|e| e.col).collect(),
        rowptrs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn el(row: usize, col: usize) -> Element {
        Element::new(row, col, 1.0)
    }

    #[test]
    fn extent_of_two_elements() {
        let ext = compute_extent(&[el(3, 5), el(7, 2)]);
        assert_eq!(
            ext,
            PartitionExtent {
                m_offset: 3,
                n_offset: 2,
                m_local: 5,
                n_local: 4
            }
        );
    }

    #[test]
    fn extent_single_and_empty() {
        let one = compute_extent(&[el(0, 0)]);
        assert_eq!(
            (one.m_offset, one.n_offset, one.m_local, one.n_local),
            (0, 0, 1, 1)
        );
        assert_eq!(compute_extent(&[]), PartitionExtent::default());
    }

    #[test]
    fn csr_two_elements() {
        let ext = PartitionExtent {
            m_offset: 0,
            n_offset: 0,
            m_local: 2,
            n_local: 2,
        };
        let header = GlobalHeader { m: 2, n: 2, z: 2 };
        let csr = coo_to_csr(
            &[Element::new(0, 1, 1.5), Element::new(1, 0, -2.0)],
            ext,
            header,
        )
        .unwrap();
        assert_eq!(csr.rowptrs, vec![0, 1, 2]);
        assert_eq!(csr.colinds, vec![1, 0]);
        assert_eq!(csr.vals, vec![1.5, -2.0]);
        csr.validate().unwrap();
    }

    #[test]
    fn csr_empty() {
        let csr = coo_to_csr(&[], PartitionExtent::default(), GlobalHeader::default()).unwrap();
        assert_eq!(csr.rowptrs, vec![0]);
        assert!(csr.vals.is_empty() && csr.colinds.is_empty());
        csr.validate().unwrap();
    }

    #[test]
    fn csr_full_middle_row() {
        let ext = PartitionExtent {
            m_offset: 0,
            n_offset: 0,
            m_local: 3,
            n_local: 3,
        };
        let elems = [el(1, 2), el(1, 0), el(1, 1)];
        let csr = coo_to_csr(&elems, ext, GlobalHeader { m: 3, n: 3, z: 3 }).unwrap();
        assert_eq!(csr.rowptrs, vec![0, 0, 3, 3]);
        assert_eq!(csr.colinds, vec![0, 1, 2]);
    }

    #[test]
    fn csr_rejects_duplicates() {
        let ext = PartitionExtent {
            m_offset: 0,
            n_offset: 0,
            m_local: 2,
            n_local: 2,
        };
        let err = coo_to_csr(&[el(1, 1), el(1, 1)], ext, GlobalHeader::default()).unwrap_err();
        assert_eq!(err, SparseError::Duplicate { row: 1, col: 1 });
    }

    #[test]
    fn coo_rejects_zero_and_nan() {
        assert!(matches!(
            CooMatrix::new(2, 2, vec![Element::new(0, 0, 0.0)]),
            Err(SparseError::BadValue { .. })
        ));
        assert!(matches!(
            CooMatrix::new(2, 2, vec![Element::new(0, 0, -0.0)]),
            Err(SparseError::BadValue { .. })
        ));
        assert!(matches!(
            CooMatrix::new(2, 2, vec![Element::new(0, 0, f64::NAN)]),
            Err(SparseError::BadValue { .. })
        ));
        assert!(matches!(
            CooMatrix::new(2, 2, vec![el(2, 0)]),
            Err(SparseError::OutOfBounds { .. })
        ));
    }

    fn element_set() -> impl Strategy<Value = Vec<Element>> {
        proptest::collection::btree_map((0usize..40, 0usize..40), any::<f64>(), 0..60).prop_map(
            |m| {
                m.into_iter()
                    .map(|((r, c), v)| {
                        Element::new(r, c, if v == 0.0 || !v.is_finite() { 1.0 } else { v })
                    })
                    .collect()
            },
        )
    }

    proptest! {
        #[test]
        fn coo_csr_round_trip(elems in element_set(), shift in 0usize..5) {
            let mut shuffled = elems.clone();
            shuffled.reverse();
            let globals: Vec<Element> = shuffled.iter().map(|e| Element::new(e.row + shift, e.col, e.val)).collect();
            let ext = compute_extent(&globals);
            let locals: Vec<Element> = globals.iter().map(|e| ext.localize(e)).collect();
            let csr = coo_to_csr(&locals, ext, GlobalHeader { m: 50, n: 50, z: locals.len() }).unwrap();
            csr.validate().unwrap();
            let back: Vec<Element> = csr.global_elements().collect();
            let mut expected = globals;
            expected.sort_by_key(Element::key);
            prop_assert_eq!(back.len(), expected.len());
            prop_assert!(back.iter().zip(&expected).all(|(a, b)| a.bitwise_eq(b)));
        }

        #[test]
        fn extent_is_permutation_invariant(mut elems in element_set(), seed in any::<u64>()) {
            let before = compute_extent(&elems);
            let len = elems.len();
            if len > 1 {
                elems.rotate_left((seed as usize) % len);
                elems.swap(0, len - 1);
            }
            prop_assert_eq!(before, compute_extent(&elems));
            for e in &elems {
                prop_assert!(before.contains(e.row, e.col));
            }
        }
    }
}
