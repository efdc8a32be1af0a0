//! Command implementations behind the `hesplit` binary.

pub mod attack;
pub mod bench;
pub mod commands;
pub mod config;
pub mod dump;
pub mod report;

pub use config::RunConfig;

use crate::channel::ChannelError;
use crate::data::DataError;
use crate::split::SplitError;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_PROTOCOL: u8 = 3;
pub const EXIT_DETECTION: u8 = 4;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("protocol aborted: {0}")]
    Protocol(String),
    #[error("undetected manipulation: {0}")]
    Detection(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl AppError {
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => EXIT_CONFIG,
            AppError::Protocol(_) | AppError::Io(_) => EXIT_PROTOCOL,
            AppError::Detection(_) => EXIT_DETECTION,
        }
    }
}

impl From<SplitError> for AppError {
    fn from(e: SplitError) -> Self {
        if e.is_config() {
            AppError::Config(e.to_string())
        } else {
            AppError::Protocol(e.to_string())
        }
    }
}

impl From<ChannelError> for AppError {
    fn from(e: ChannelError) -> Self {
        match e {
            ChannelError::Key(m) => AppError::Config(m),
            e => AppError::Protocol(e.to_string()),
        }
    }
}

impl From<DataError> for AppError {
    fn from(e: DataError) -> Self {
        AppError::Config(e.to_string())
    }
}
