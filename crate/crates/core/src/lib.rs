//! Adaptive-blocking storage of distributed sparse matrices.
//!
//! Each rank's local submatrix is cut into `s x s` blocks, every block is
//! encoded with the cheapest of four schemes (COO, CSR, bitmap, dense), and
//! the result is written to one self-describing container file per rank.
//! Loading either reads one file per rank when the storing configuration is
//! reproduced, or reads all files and filters by an arbitrary element-to-rank
//! mapping otherwise.
//!
//! Modules:
//! - [`sparse`]: element, COO and CSR types, partition extents.
//! - [`mm`]: Matrix Market reading and writing.
//! - [`kron`]: Kronecker enlargement of a seed matrix.
//! - [`scheme`]: block schemes, their storage costs and selection.
//! - [`payload`]: the in-memory form of one rank file.
//! - [`encode`] / [`decode`]: block partitioning, encoding and loading.
//! - [`container`]: the binary rank file format and file-set discovery.
//! - [`mapping`]: element-to-rank mappings and the store manifest.
//! - [`remap`]: store, same-configuration and cross-configuration loading.

pub mod container;
pub mod decode;
pub mod encode;
pub mod kron;
pub mod mapping;
pub mod mm;
pub mod payload;
pub mod remap;
pub mod scheme;
pub mod sparse;

pub use container::{
    open_file_set, read_rank_file, write_rank_file, ContainerError, Dtype, RankFileSet,
};
pub use decode::{load_rank_file, DecodeError};
pub use encode::{encode_rank, EncodeError};
pub use mapping::{build_column_regular, build_row_balanced, Manifest, MappingError, MappingFn};
pub use payload::{AbhsfPayload, PayloadError};
pub use remap::{
    cross_config_load, direct_load, run_session, store_matrix, IoStats, LoadConfig, LoadPath,
    OutputFormat, RankOutput, RemapError, Session,
};
pub use scheme::{scheme_cost, select_scheme, SchemeTag};
pub use sparse::{CooMatrix, CsrMatrix, Element, GlobalHeader, PartitionExtent, SparseError};
