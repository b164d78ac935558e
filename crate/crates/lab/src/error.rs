use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error(transparent)]
    Core(#[from] dit_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("load error: {0}")]
    Load(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("artifact mismatch: {0}")]
    Artifact(String),
    #[error("{0}")]
    Runtime(String),
}

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 success, 1 runtime error, 2 config error, 3 artifact mismatch.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 2,
            LabError::Artifact(_) => 3,
            _ => 1,
        }
    }
}
