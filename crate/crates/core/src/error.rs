use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("i/o error on {path}: {source}")]
    IoPath {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("zero-norm vector")]
    ZeroVector,

    #[error("embedding backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("too many clusters: k={k} exceeds n={n}")]
    TooManyClusters { k: usize, n: usize },

    #[error("missing word vector for keyword {0:?}")]
    MissingVector(String),

    #[error("no usable keyword group produced contrastive pairs")]
    NoPairs,

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("labels must contain both classes")]
    DegenerateLabels,

    #[error("class {0} has fewer than 2 members")]
    DegenerateClass(String),

    #[error("anchor bank is empty")]
    NoAnchors,

    #[error("unknown label {0:?}")]
    BadLabel(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("split {split}: {source}")]
    InSplit {
        split: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io_at(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoPath {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_split(self, split: usize) -> Self {
        Error::InSplit {
            split,
            source: Box::new(self),
        }
    }
}
