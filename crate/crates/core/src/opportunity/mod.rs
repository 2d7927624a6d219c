//! Where ad opportunities come from: the seeded parametric generator or a
//! pre-generated dataset file. Both yield one `Vec<AdOpportunity>` per step.

pub mod dataset;
pub mod generator;
pub mod layout;
pub mod value_model;
pub mod volume;

use thiserror::Error;

pub use dataset::{dataset_header, load_dataset, DatasetReader, DatasetWriter};
pub use generator::{FeatureModel, Generator, GeneratorConfig, ParametricSource, VolumeShape};
pub use layout::{FeatureError, FeatureLayout, FieldDescriptor, FieldKind};
pub use value_model::{ValueModel, ValueModelConfig};
pub use volume::{build_volume_curve, VolumeCurve};

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("empty dataset: {path}")]
    Empty { path: String },
    #[error("bad dataset header: {0}")]
    Header(String),
    #[error("row {row}: expected {expected} columns, found {found}")]
    ColumnCount { row: usize, expected: usize, found: usize },
    #[error("row {row}, column {column}: cannot parse {text:?}")]
    Parse { row: usize, column: String, text: String },
    #[error("row {row}: step {step} outside [0, {num_steps})")]
    StepOutOfRange { row: usize, step: usize, num_steps: usize },
    #[error("row {row}: step {step} or its pvIndex is out of order")]
    StepOrder { row: usize, step: usize },
    #[error("row {row}: {reason}")]
    Invariant { row: usize, reason: String },
}
