//! Error type shared by every module of the crate.

use thiserror::Error;

/// Crate-wide error enum. Variants map one-to-one onto the failure modes of
/// the public operations; callers that only care about success can treat the
/// whole enum as opaque.
#[derive(Debug, Error)]
pub enum Error {
    /// A row tagged with a source domain is missing its class label, or a
    /// label is outside `[0, n_classes)`.
    #[error("invalid label at row {row}: {detail}")]
    InvalidLabel { row: usize, detail: String },

    /// A feature value, parameter, or probability is NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Dataset-level shape or count inconsistency.
    #[error("bad shape: {0}")]
    BadShape(String),

    /// An input vector does not match the width the model expects.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Embedding requested on a zero-dimensional feature vector.
    #[error("empty feature vector")]
    EmptyFeature,

    /// A sample id does not name a row of the dataset.
    #[error("bad sample id {0}")]
    BadId(usize),

    /// Fewer points than requested clusters.
    #[error("too few points: {points} points for {clusters} clusters")]
    TooFewPoints { points: usize, clusters: usize },

    /// Zero-dimensional or inconsistently sized points handed to clustering.
    #[error("degenerate dimension: {0}")]
    DegenerateDim(String),

    /// Two vectors that must share a dimension do not.
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    /// Not enough unlabeled target samples to fill the budget.
    #[error("too few targets: need {need}, have {have}")]
    TooFewTargets { need: usize, have: usize },

    /// Aggregation over an empty per-domain distance list.
    #[error("empty distance list")]
    EmptyList,

    /// No source sample statistics are available anywhere in the dataset.
    #[error("no source statistics available")]
    NoSourceStats,

    /// Training requested with no labeled rows at all.
    #[error("no labeled data")]
    NoLabeledData,

    /// Evaluation or probe requested on a domain with no usable rows.
    #[error("empty domain {0}")]
    EmptyDomain(usize),

    /// A configuration value is out of range or internally inconsistent.
    #[error("bad config: {0}")]
    BadConfig(String),

    /// Experiment budget exceeds the number of target samples.
    #[error("insufficient budgetable samples: budget {budget} exceeds {available} targets")]
    InsufficientBudgetableSamples { budget: usize, available: usize },

    /// Malformed input file (header, field count, unparsable value).
    #[error("schema error: {0}")]
    Schema(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
