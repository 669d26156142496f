use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: malformed file at byte {offset}: {msg}", file.display())]
    Format { file: PathBuf, offset: u64, msg: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("data unavailable: {0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] neurogrow_core::Error),
    #[error("report error: {0}")]
    Report(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(file: impl Into<PathBuf>, offset: u64, msg: impl Into<String>) -> Self {
        Error::Format { file: file.into(), offset, msg: msg.into() }
    }

    /// 1 for configuration problems, 2 for everything that fails at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
