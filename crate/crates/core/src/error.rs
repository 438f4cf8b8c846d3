use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum PixieError {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("unsupported padding: reflect pad {padding} needs spatial dims > {padding}, got {height}x{width}")]
    UnsupportedPad {
        padding: usize,
        height: usize,
        width: usize,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("length error: {0}")]
    Length(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("weight error: {0}")]
    Weights(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = PixieError> = std::result::Result<T, E>;

macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::error::PixieError::Shape(format!($($arg)*))
    };
}
pub(crate) use shape_err;
