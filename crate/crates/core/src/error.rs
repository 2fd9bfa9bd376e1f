use std::path::PathBuf;

/// Errors raised across the animation pipeline.
///
/// Every variant maps onto one coarse class (see [`Error::class`]) which the
/// command-line front end turns into an exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Inputs violate an operation's precondition (shape mismatch, non-binary mask, ...).
    #[error("contract violation: {0}")]
    Contract(String),
    /// A file does not follow its documented layout.
    #[error("format error: {0}")]
    Format(String),
    /// Dataset or clip content is missing or inconsistent.
    #[error("data error: {0}")]
    Data(String),
    /// A scene description cannot be rendered.
    #[error("scene error: {0}")]
    Scene(String),
    /// A metric has no pixels or windows to evaluate.
    #[error("evaluation error: {0}")]
    Eval(String),
    /// A non-finite value showed up during optimization or inference.
    #[error("numeric abort: {0}")]
    Numeric(String),
    /// Bad configuration key, value or command-line flag.
    #[error("usage error: {0}")]
    Usage(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image codec error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

/// Coarse error classes used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Usage => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numeric => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Usage => "usage",
            ErrorClass::Data => "data",
            ErrorClass::Numeric => "numeric",
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Usage(_) => ErrorClass::Usage,
            Error::Numeric(_) => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::$variant(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
