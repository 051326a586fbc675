use thiserror::Error;

pub type Result<T, E = AcnnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AcnnError {
    #[error("structure contains no atom records")]
    EmptyStructure,

    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("unknown element symbol {0:?}")]
    UnknownElement(String),

    #[error("invalid molecular system: {0}")]
    InvalidSystem(String),

    #[error("invalid bond graph: {0}")]
    InvalidGraph(String),

    #[error("atoms {atom} and {neighbor} are coincident (distance {distance:e} A)")]
    CoincidentAtoms {
        atom: usize,
        neighbor: usize,
        distance: f64,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("need at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },

    #[error("record {0} has no ligand bond graph")]
    MissingGraph(String),

    #[error("record {0} has no deposition year")]
    MissingYear(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("record {id}: {source}")]
    Record {
        id: String,
        #[source]
        source: Box<AcnnError>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl AcnnError {
    pub(crate) fn malformed(line: usize, reason: impl Into<String>) -> Self {
        AcnnError::MalformedRecord {
            line,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        AcnnError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn with_record(self, id: &str) -> Self {
        AcnnError::Record {
            id: id.to_string(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping record-id wrappers.
    pub fn root(&self) -> &AcnnError {
        match self {
            AcnnError::Record { source, .. } => source.root(),
            other => other,
        }
    }
}
