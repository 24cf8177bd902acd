//! Kronecker enlargement of small seed matrices into large test instances.

use thiserror::Error;

use crate::sparse::{CooMatrix, Element, SparseError};

/// Default cap on generated nonzeros.
pub const DEFAULT_MAX_NNZ: usize = 100_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum KronError {
    #[error("seed matrix has no nonzeros")]
    EmptySeed,
    #[error("power must be at least 1")]
    ZeroPower,
    #[error("result would hold {required} nonzeros, above the cap of {cap}")]
    TooLarge { required: u128, cap: usize },
    #[error("result dimensions overflow the index type")]
    DimensionOverflow,
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Kronecker product `a ⊗ b`.
pub fn kronecker(a: &CooMatrix, b: &CooMatrix, max_nnz: usize) -> Result<CooMatrix, KronError> {
    let required = a.nnz() as u128 * b.nnz() as u128;
    if required > max_nnz as u128 {
        return Err(KronError::TooLarge {
            required,
            cap: max_nnz,
        });
    }
    let m = a
        .rows()
        .checked_mul(b.rows())
        .ok_or(KronError::DimensionOverflow)?;
    let n = a
        .cols()
        .checked_mul(b.cols())
        .ok_or(KronError::DimensionOverflow)?;

    // Row-major over a's elements then b's elements keeps the output sorted
    // when both inputs are sorted, apart from interleaving within block rows;
    // the constructor re-sorts anyway.
    let mut out = Vec::with_capacity(required as usize);
    for ea in a.elements() {
        for eb in b.elements() {
            out.push(Element::new(
                ea.row * b.rows() + eb.row,
                ea.col * b.cols() + eb.col,
                ea.val * eb.val,
            ));
        }
    }
    Ok(CooMatrix::new(m, n, out)?)
}

/// `power`-fold Kronecker product `seed ⊗ seed ⊗ … ⊗ seed`.
pub fn kronecker_enlarge(
    seed: &CooMatrix,
    power: u32,
    max_nnz: usize,
) -> Result<CooMatrix, KronError> {
    if seed.nnz() == 0 {
        return Err(KronError::EmptySeed);
    }
    if power == 0 {
        return Err(KronError::ZeroPower);
    }
    let required = (seed.nnz() as u128).checked_pow(power).unwrap_or(u128::MAX);
    if required > max_nnz as u128 {
        return Err(KronError::TooLarge {
            required,
            cap: max_nnz,
        });
    }
    let mut acc = seed.clone();
    for _ in 1..power {
        acc = kronecker(&acc, seed, max_nnz)?;
    }
    Ok(acc)
}

/// Built-in 8x8 unsymmetric seed with 18 nonzeros.
pub fn demo_seed() -> CooMatrix {
    const ENTRIES: [(usize, usize, f64); 18] = [
        (0, 0, 4.0),
        (0, 3, -1.0),
        (1, 1, 3.5),
        (1, 6, 0.25),
        (2, 0, -2.0),
        (2, 2, 5.0),
        (3, 3, 1.5),
        (3, 7, -0.5),
        (4, 1, 2.0),
        (4, 4, 6.0),
        (5, 5, -3.0),
        (5, 2, 0.75),
        (6, 6, 2.5),
        (6, 4, -1.25),
        (7, 7, 7.0),
        (7, 0, 1.0),
        (2, 5, 0.5),
        (5, 7, -4.0),
    ];
    let elements = ENTRIES
        .iter()
        .map(|&(r, c, v)| Element::new(r, c, v))
        .collect();
    CooMatrix::new(8, 8, elements).expect("demo seed is well formed")
}
