use std::path::PathBuf;

/// Errors raised across the library. `exit_code` maps them onto the CLI contract.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("integration failed at t={t}: {reason}")]
    Integration {
        t: f64,
        reason: String,
        /// Last state that satisfied the tolerances.
        last_state: Vec<f64>,
    },

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("io error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("run failure: {0}")]
    Run(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// 2 for anything the user can fix in their inputs, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension(_) | Error::Config(_) | Error::Parse { .. } => 2,
            Error::Integration { .. } | Error::Io { .. } | Error::Run(_) => 1,
        }
    }
}
