use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("XML parse error at line {line}: {message}")]
    Xml { line: usize, message: String },

    #[error("way {way_id} references missing node {node_id}")]
    MissingNode { way_id: i64, node_id: i64 },

    #[error("feature {feature}: {message}")]
    Feature { feature: String, message: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid study area: {0}")]
    StudyArea(String),

    #[error("tag analysis requires tagged OSM input")]
    UntaggedInput,

    #[error("degenerate segment: chord has zero length")]
    DegenerateSegment,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("output error: {0}")]
    Output(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
