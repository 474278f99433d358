use std::io;

/// Errors of the command-line layer, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

impl AppError {
    /// 2 usage, 3 data (including unreadable files), 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 2,
            AppError::Data(_) | AppError::Io { .. } => 3,
            AppError::Numerical(_) => 4,
        }
    }

    pub fn io(context: impl Into<String>) -> impl FnOnce(io::Error) -> AppError {
        let context = context.into();
        move |source| AppError::Io { context, source }
    }

    /// Reclassifies a core error raised while sampling as numerical.
    pub fn numerical(e: bptd_core::Error) -> AppError {
        AppError::Numerical(e.to_string())
    }
}

impl From<io::Error> for AppError {
    fn from(source: io::Error) -> Self {
        AppError::Io {
            context: "i/o".into(),
            source,
        }
    }
}

impl From<bptd_core::Error> for AppError {
    fn from(e: bptd_core::Error) -> Self {
        use bptd_core::Error as E;
        match e {
            E::InvalidParameter(_) => AppError::Usage(e.to_string()),
            E::OutOfBounds { .. } | E::DimensionMismatch(_) | E::Empty(_) => AppError::Data(e.to_string()),
            E::ZeroNormalizer | E::NonFinite(_) => AppError::Numerical(e.to_string()),
        }
    }
}

pub type Result<T, E = AppError> = std::result::Result<T, E>;
