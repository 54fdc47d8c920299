//! Batch extraction, cleaning, feature construction and regression-based
//! imputation for CIA World Factbook country snapshots.
//!
//! The pipeline produces five dataset versions:
//!
//! | version | stage | module |
//! |---|---|---|
//! | v1 | raw extraction from per-entity HTML | [`parser`] |
//! | v2 | size reduction | [`cleaner`] |
//! | v3 | labels, amounts and sums from text | [`constructor`] |
//! | v4 | one-hot encoding of label columns | [`encoder`] |
//! | v5 | cascaded regression imputation | [`imputer`] |
//!
//! [`pipeline`] wires the stages together and persists every version as a
//! CSV snapshot with a JSON schema sidecar.

pub mod cleaner;
pub mod constructor;
pub mod encoder;
pub mod exec;
pub mod imputer;
pub mod parser;
pub mod pipeline;
pub mod seed;
pub mod table;

pub use table::{CellValue, ColumnName, Dtype, MissingStats, Table, Version};
