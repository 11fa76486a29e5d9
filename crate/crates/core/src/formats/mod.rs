//! On-disk formats: edge lists, JSON Lines records, `.fmx` feature matrices,
//! and the corpus directory layout.

mod corpus;
mod edges;
mod fmx;
mod records;

pub use corpus::{load_sample, scan_corpus, RawSample, ScanResult, EDGES_FILE, EMBEDDINGS_FILE, RECORDS_FILE};
pub use edges::{parse_edges, read_edges, write_edges};
pub use fmx::{decode_fmx, encode_fmx, read_feature_matrix, write_feature_matrix, FMX_MAGIC};
pub use records::{parse_records, read_records, write_records};
