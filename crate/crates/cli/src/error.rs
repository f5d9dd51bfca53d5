use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}", config_message(*.line, .message))]
    Config { line: Option<usize>, message: String },

    #[error("{0}")]
    Dataset(#[source] fairot_core::Error),

    #[error("{0}")]
    Compute(#[source] fairot_core::Error),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("target ratio {target} is not bracketed: achieved ratios span [{low}, {high}]")]
    Budget { target: f64, low: f64, high: f64 },

    #[error("{0}")]
    Usage(String),
}

fn config_message(line: Option<usize>, message: &str) -> String {
    match line {
        Some(l) => format!("line {l}: {message}"),
        None => message.to_string(),
    }
}

impl CliError {
    /// Stable machine-readable category, printed as `error[<category>]`.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Dataset(_) => "dataset",
            CliError::Compute(_) => "compute",
            CliError::Io { .. } => "io",
            CliError::Budget { .. } => "budget",
            CliError::Usage(_) => "usage",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 2,
            CliError::Dataset(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Compute(_) => 5,
            CliError::Budget { .. } => 6,
        }
    }

    /// One line: `error[category]: message`.
    pub fn render(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {}", self.category(), msg.trim())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(message: impl Into<String>) -> Self {
        CliError::Config {
            line: None,
            message: message.into(),
        }
    }
}
