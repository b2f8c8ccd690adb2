use thiserror::Error;

use crate::ingest::Group;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("column `{0}` not found")]
    Schema(String),

    #[error("value `{value}` in column `{column}` matches no mapping")]
    Mapping { column: String, value: String },

    #[error("value {0} falls in no bin")]
    Bin(f64),

    #[error("invalid recipe: {0}")]
    Recipe(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("group {0:?} has no instances")]
    EmptyGroup(Group),

    #[error("unknown stratum `{0}`")]
    UnknownStratum(String),

    #[error("every stratum lacks either favorable or unfavorable outcomes")]
    AllStrataUndefined,

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("outcome kind mismatch: {0}")]
    KindMismatch(&'static str),

    #[error("contingency table has an all-zero {0}")]
    ZeroMargin(&'static str),

    #[error("dimension mismatch: model expects {expected} features, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("training did not converge: {0}")]
    NonConvergence(String),

    #[error("no candidate reaches dp >= {required:.4} (best {best_dp:.4})")]
    Infeasible {
        required: f64,
        best_dp: f64,
        /// Closest model found, usable when the caller accepts best effort.
        closest: Box<crate::trainer::Model>,
    },

    #[error("duplicate cell for ({dataset}, {protected}, {metric})")]
    DuplicateCell {
        dataset: String,
        protected: String,
        metric: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
