//! Command-line pipeline for age-group fairness RLHF runs: dataset
//! construction, the three training stages, evaluation and the planted-bias
//! synthetic experiment.

pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod synthetic;

use std::path::{Path, PathBuf};

use thiserror::Error;

use agr_core::datasets::{DatasetError, JsonlError};
use agr_core::eval::EvalError;
use agr_core::models::ModelError;
use agr_core::training::TrainingError;

use synthetic::SyntheticError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),
    #[error("{skipped} source records skipped, limit is {limit}")]
    TooManySkipped { skipped: usize, limit: usize },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_)
            | CliError::Training(TrainingError::InvalidConfig(_))
            | CliError::Synthetic(
                SyntheticError::TooFewLambdas(_) | SyntheticError::TooFewSeeds(_) | SyntheticError::InvalidTask(_),
            ) => 2,
            CliError::MissingPrerequisite(_) => 3,
            CliError::TooManySkipped { .. } => 4,
            _ => 1,
        }
    }
}
