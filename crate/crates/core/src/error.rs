use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("row {row}, column '{column}': cannot parse '{value}' as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column '{column}': binary column holds '{value}', expected 0 or 1")]
    NonBinary {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column '{column}': missing value")]
    Missing { row: usize, column: String },

    #[error("unknown column '{0}'")]
    UnknownColumn(String),

    #[error("row {row} has {found} cells, header has {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("causal graph contains a cycle through: {}", .0.join(" -> "))]
    Cycle(Vec<String>),

    #[error("graph node '{0}' has no matching column in the data")]
    NodeWithoutColumn(String),

    #[error(
        "feature '{feature}' descends from more than one privilege arrow ({}); \
         this would require partial warping, which is not supported",
        .arrows.join(", ")
    )]
    PartialWarping {
        feature: String,
        arrows: Vec<String>,
    },

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("gamma regression of '{column}' needs strictly positive responses (row {row} holds {value})")]
    NonPositiveGamma {
        column: String,
        row: usize,
        value: f64,
    },

    #[error("singular design matrix; collinear columns: {}", .0.join(", "))]
    SingularDesign(Vec<String>),

    #[error("exact Shapley enumeration supports at most {max} players, got {k}; use the permutation-sampling estimator instead")]
    TooManyPlayers { k: usize, max: usize },

    #[error("record lacks feature '{0}'")]
    MissingFeature(String),

    #[error("unknown row id {id}; available ids: {available}")]
    UnknownId { id: String, available: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("model fit failed: {0}")]
    Fit(String),

    #[error("unsupported model document version {0}")]
    ModelVersion(u32),
}

impl Error {
    /// Input errors (bad files, schemas, arguments) as opposed to failures
    /// while computing on valid input.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::NonPositiveGamma { .. }
                | Error::SingularDesign(_)
                | Error::Fit(_)
                | Error::TooManyPlayers { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
