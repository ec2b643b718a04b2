use std::io;
use std::path::PathBuf;

/// Exit codes of the command line.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("integrity error in {path}: {detail}")]
    Integrity { path: PathBuf, detail: String },
    #[error("unsupported format version {found} in {path} (expected {expected})")]
    Version { path: PathBuf, found: u32, expected: u32 },
    #[error(transparent)]
    Core(#[from] corenet_core::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn exit_code(&self) -> i32 {
        use corenet_core::Error as C;
        match self {
            Error::Config(_) => exit::CONFIG,
            Error::Core(C::Parameter(_) | C::Recipe(_)) => exit::CONFIG,
            Error::Core(C::NonFinite(_)) => exit::NUMERIC,
            _ => exit::DATA,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }
}
