use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node {node} out of range for graph with {num_nodes} nodes")]
    InvalidNode { node: usize, num_nodes: usize },

    #[error("feature matrix has {found} rows, expected {expected}")]
    FeatureRows { expected: usize, found: usize },

    #[error("graph has no edges")]
    NoEdges,

    #[error("cannot draw {requested} samples, only {available} available")]
    Infeasible { requested: usize, available: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("architecture mismatch: expected {expected}, found {found}")]
    Architecture { expected: String, found: String },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("AUC is undefined when only one class is present")]
    UndefinedAuc,

    #[error("feature has fewer than two distinct values")]
    ConstantFeature,

    #[error("profiles do not share a bin grid")]
    GridMismatch,

    #[error("profile is already centered")]
    AlreadyCentered,

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: u64,
        message: String,
    },

    #[error("invalid document: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short stable tag used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidNode { .. } => "invalid_node",
            Error::FeatureRows { .. } => "feature_rows",
            Error::NoEdges => "no_edges",
            Error::Infeasible { .. } => "infeasible",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Dimension { .. } => "dimension",
            Error::NonFinite(_) => "non_finite",
            Error::Architecture { .. } => "architecture",
            Error::Diverged { .. } => "diverged",
            Error::UndefinedAuc => "undefined_auc",
            Error::ConstantFeature => "constant_feature",
            Error::GridMismatch => "grid_mismatch",
            Error::AlreadyCentered => "already_centered",
            Error::Version { .. } => "version",
            Error::Parse { .. } => "parse",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
