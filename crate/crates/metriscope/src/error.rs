use std::io;
use std::path::{Path, PathBuf};

use metriscope_core::Error as CoreError;
use serde_json::json;

/// Everything a command can fail with, mapped onto process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("{metric}: numeric failure: {reason}")]
    Numeric { metric: String, reason: String },
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        if source.kind() == io::ErrorKind::NotFound {
            return CliError::MissingInput(format!("{} does not exist", path.display()));
        }
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, reason: impl Into<String>) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }

    /// 2 configuration, 3 missing input, 4 numeric failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Format { .. } => 2,
            CliError::MissingInput(_) => 3,
            CliError::Numeric { .. } => 4,
            CliError::Io { .. } => 1,
            CliError::Core(e) => match e {
                CoreError::Numeric { .. } => 4,
                CoreError::MissingInput { .. } => 3,
                _ => 2,
            },
        }
    }

    fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "config",
            3 => "missing-input",
            4 => "numeric",
            _ => "io",
        }
    }

    fn metric(&self) -> Option<&str> {
        match self {
            CliError::Numeric { metric, .. } => Some(metric),
            CliError::Core(CoreError::Numeric { metric, .. } | CoreError::MissingInput { metric, .. }) => Some(metric),
            _ => None,
        }
    }

    /// The single-line JSON object written to stderr.
    pub fn to_json(&self) -> String {
        let mut v = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let Some(m) = self.metric() {
            v["metric"] = json!(m);
        }
        v.to_string()
    }
}
