//! Token-level datasets: vocabularies, statement splitting, fixed-shape
//! encoding, project-level splits, and synthetic corpora.

pub mod dataset;
pub mod encode;
pub mod split;
pub mod statements;
pub mod synthetic;
pub mod vocab;

pub use dataset::{format_dataset, parse_dataset, read_dataset, write_dataset, Sample};
pub use encode::{encode_sample, EncodeDims, EncodedSample};
pub use split::{exclude_ids, filter_by_length, split_by_project, validate_ratios, Splits};
pub use statements::{count_statements, split_statements, StatementMatrix};
pub use synthetic::{generate_synthetic_corpus, SlotValue, SyntheticSpec, Template};
pub use vocab::{Field, Vocabulary};
