use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// One message per violated configuration invariant.
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("invalid index set: {0}")]
    InvalidIndexSet(String),

    #[error("unknown rng stream label `{0}` (expected one of init, augment, sample, noise, fold)")]
    UnknownStream(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("acquisition error: {0}")]
    Acquisition(String),

    #[error("oracle error: {0}")]
    Oracle(String),

    #[error("statistics error: {0}")]
    Statistics(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
