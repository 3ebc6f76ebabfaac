use thiserror::Error;

use crate::crypto::CryptoError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),
    #[error("script error: {0}")]
    Script(String),
    #[error("unknown attack id {0}")]
    NotFound(u32),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}
