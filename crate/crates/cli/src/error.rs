use std::path::PathBuf;

use middleway::rds::RdsIoError;
use middleway::simulation::log::LogError;
use middleway::simulation::ScenarioError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Rds(#[from] RdsIoError),
    #[error("cannot read log `{path}`: {source}")]
    ReadLog { path: PathBuf, source: LogError },
    #[error("cannot write `{path}`: {source}")]
    Write { path: PathBuf, source: WriteError },
}

#[derive(Debug, Error)]
pub enum WriteError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Rds(#[from] RdsIoError),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}
