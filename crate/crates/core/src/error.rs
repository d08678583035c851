use std::path::PathBuf;

use crate::data::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{}:{line}: feature vector has length {found}, expected {expected}", path.display())]
    FeatureLength {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("unknown node id {id} in {context}")]
    UnknownNode { id: NodeId, context: String },

    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("feature value {value} at row {row}, column {col} is not binary")]
    NonBinaryFeature { row: usize, col: usize, value: u32 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("BIC is undefined for a network without edges")]
    NoEdges,

    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
