//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any fallible operation in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shape and length disagree, or an operation received
    /// incompatible shapes.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A graph node rejected its input; the node id is always included so the
    /// failure can be traced to a specific layer.
    #[error("node {node} ({kind}): {message}")]
    Node {
        node: usize,
        kind: &'static str,
        message: String,
    },

    /// Graph-level validation failure (no output node, dangling refs, ...).
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    /// A class index outside `0..num_classes`.
    #[error("class index {index} out of range for {num_classes} classes")]
    ClassIndex { index: usize, num_classes: usize },

    /// A node kind an operation cannot handle (e.g. DeepLIFT on max-pooling).
    #[error("unsupported node kind {kind} in {operation}")]
    UnsupportedNode {
        kind: &'static str,
        operation: &'static str,
    },

    /// Label-space failure: unknown name, bad hierarchy file, too many labels.
    #[error("label error: {0}")]
    Label(String),

    /// A label set violating the hierarchy where consistency is mandatory
    /// (e.g. NoFinding combined with a pathology at target construction).
    #[error("inconsistent labels: {0}")]
    Inconsistent(String),

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Training diverged (non-finite loss).
    #[error("training diverged: {0}")]
    Divergence(String),

    /// Malformed input file (manifest, image, model container, ...).
    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Stable machine-readable kind, used by the CLI's single-line error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch(_) => "shape-mismatch",
            Error::Node { .. } => "node",
            Error::InvalidGraph(_) => "invalid-graph",
            Error::ClassIndex { .. } => "class-index",
            Error::UnsupportedNode { .. } => "unsupported-node",
            Error::Label(_) => "label",
            Error::Inconsistent(_) => "inconsistent-labels",
            Error::Config(_) => "config",
            Error::Divergence(_) => "divergence",
            Error::Parse(_) => "parse",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
