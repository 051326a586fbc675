use acnn::AcnnError;

/// Parse, config and I/O failures.
pub const EXIT_INPUT: i32 = 2;
/// Split preconditions (missing years, graphs, too few records).
pub const EXIT_SPLIT: i32 = 3;
/// Non-finite loss or degenerate numerics.
pub const EXIT_NUMERIC: i32 = 4;
/// Checkpoint and configuration disagree on vocabulary or shapes.
pub const EXIT_SHAPE: i32 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_INPUT, message)
    }

    /// Prefix the message with the file it concerns.
    pub fn context(self, path: &std::path::Path) -> Self {
        Self::new(self.code, format!("{}: {}", path.display(), self.message))
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::new(EXIT_INPUT, format!("{}: {e}", path.display()))
    }
}

impl From<AcnnError> for CliError {
    fn from(e: AcnnError) -> Self {
        let code = match e.root() {
            AcnnError::MissingYear(_) | AcnnError::MissingGraph(_) | AcnnError::TooFewRecords { .. } => EXIT_SPLIT,
            AcnnError::NonFiniteLoss { .. } | AcnnError::DegenerateInput(_) => EXIT_NUMERIC,
            AcnnError::ShapeMismatch(_) => EXIT_SHAPE,
            _ => EXIT_INPUT,
        };
        Self::new(code, e.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}
