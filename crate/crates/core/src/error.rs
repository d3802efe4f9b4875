use std::io;

use thiserror::Error;

/// Errors raised anywhere in the grounding pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("softmax row {row} has no finite entry")]
    DegenerateRow { row: usize },

    #[error("attention mask row {row} hides every key")]
    DegenerateMask { row: usize },

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },

    #[error("requested {requested} samples but only {available} are available")]
    Size { requested: usize, available: usize },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("token id {id} out of range for a vocabulary of {size}")]
    Vocab { id: usize, size: usize },

    #[error("text is empty after tokenization")]
    EmptyText,

    #[error("could not place object {index} after {attempts} attempts")]
    Placement { index: usize, attempts: usize },

    #[error("scene bounds have zero extent on axis {axis}")]
    DegenerateBounds { axis: usize },

    #[error("no proposal falls inside any instance box")]
    Aggregation,

    #[error("class {class} out of range for {count} classes")]
    ClassOutOfRange { class: usize, count: usize },

    #[error("missing weight tensor `{0}`")]
    MissingWeight(String),

    #[error("query {index}: {source}")]
    Query {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Shape {
        op,
        detail: detail.into(),
    }
}
