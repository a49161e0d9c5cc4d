//! Experiment runner behind the `perm` binary: resolves a [`RunConfig`],
//! runs one command and renders its record and tables.

pub mod commands;
pub mod config;

use serde::{Deserialize, Serialize};

pub use commands::run;
pub use config::{CommandKind, Format, GridAxis, Params, RunConfig, SCHEMA_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] permcac::Error),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "cli_runner.invalid_config",
            CliError::Io(_) => "cli_runner.io",
            CliError::Core(e) => e.code(),
        }
    }

    /// 2 for anything the caller got wrong, 3 when the computation itself failed.
    pub fn exit_code(&self) -> i32 {
        use permcac::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Core(e) => match e {
                E::InvalidConfig(_)
                | E::InvalidMatrix(_)
                | E::DimensionTooLarge { .. }
                | E::EpsilonOutOfRange(_)
                | E::ParameterViolation(_) => 2,
                _ => 3,
            },
        }
    }
}

/// Envelope for every JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record<T> {
    pub schema_version: String,
    pub config: RunConfig,
    pub result: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorRecord {
    pub schema_version: String,
    pub config: Option<RunConfig>,
    pub error: ErrorBody,
}

impl ErrorRecord {
    pub fn new(config: Option<RunConfig>, err: &CliError) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            config,
            error: ErrorBody { code: err.code().into(), message: err.to_string() },
        }
    }
}

/// What one run produces: the JSON record plus an optional table.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub record: String,
    pub table: Option<String>,
    /// Nonzero when the run completed but reports failure (verify).
    pub exit_code: i32,
}

/// Reads a config file holding either a bare [`RunConfig`] or a full record
/// that embeds one; unknown keys are rejected.
pub fn load_config(text: &str) -> Result<RunConfig, CliError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config is not JSON: {e}")))?;
    let inner = match value.get("config") {
        Some(c) if value.get("schema_version").is_some() => c.clone(),
        _ => value,
    };
    serde_json::from_value(inner).map_err(|e| CliError::Config(e.to_string()))
}
