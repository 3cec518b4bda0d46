//! Error-to-exit-code mapping: 0 success, 1 usage, 2 validation, 3 i/o.

use celt_core::data::DataError;
use celt_core::evaluation::EvalError;
use celt_core::model::ModelError;
use celt_core::tokenizer::TokenizerError;
use celt_core::training::TrainError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
}

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_IO: i32 = 3;

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => EXIT_USAGE,
            AppError::Validation(_) => EXIT_VALIDATION,
            AppError::Io(_) => EXIT_IO,
        }
    }
}

impl From<DataError> for AppError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(_) => AppError::Io(e.to_string()),
            _ => AppError::Validation(e.to_string()),
        }
    }
}

impl From<TokenizerError> for AppError {
    fn from(e: TokenizerError) -> Self {
        match e {
            TokenizerError::Io(_) => AppError::Io(e.to_string()),
            _ => AppError::Validation(e.to_string()),
        }
    }
}

impl From<TrainError> for AppError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Data(DataError::Io(_)) => AppError::Io(e.to_string()),
            _ => AppError::Validation(e.to_string()),
        }
    }
}

impl From<ModelError> for AppError {
    fn from(e: ModelError) -> Self {
        AppError::Validation(e.to_string())
    }
}

impl From<EvalError> for AppError {
    fn from(e: EvalError) -> Self {
        AppError::Validation(e.to_string())
    }
}

impl From<crate::checkpoint::CheckpointError> for AppError {
    fn from(e: crate::checkpoint::CheckpointError) -> Self {
        match e {
            crate::checkpoint::CheckpointError::Io(_) => AppError::Io(e.to_string()),
            _ => AppError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Io(e.to_string())
    }
}
