//! Schema-driven CSV ingestion, one-hot / min-max encoding, and the seeded
//! 7:1:2 split.

mod encode;
mod schema;
mod split;

pub use encode::{
    encode_records, load_dataset, EncodedDataset, FeatureBlock, FeatureLayout, LoadStats,
};
pub use schema::{ColumnKind, ColumnSpec, DatasetSchema, LabelSpec, SensitiveSpec};
pub use split::{split, split_sizes, stratified_sample, SplitDataset, MIN_SPLIT_ROWS};
