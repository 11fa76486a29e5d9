//! Shifted benchmark splits and synthetic corpora.

mod split;
pub mod synth;

pub use split::{
    build_split, fisher_yates, verify_disjoint, AuditReport, LabelRow, PairAudit, Split, SplitClass, SplitSpec, Variant,
};
pub use synth::{generate_synthetic_corpus, Structure, SyntheticConfig};
