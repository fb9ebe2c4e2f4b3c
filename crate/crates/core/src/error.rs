use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the engine core.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Structurally invalid encoded data (bad magic, bad header, schema violation).
    Format(String),
    /// Feature tensor format version other than the one this build understands.
    UnsupportedVersion(u32),
    /// Non-finite value in a tensor payload, at this flat index.
    Data { index: usize },
    /// The input ended before `needed` bytes were available.
    Truncated { needed: usize, available: usize },
    /// Shapes or image geometries that must agree do not.
    Geometry(String),
    /// Parameter outside its valid range.
    Param(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Format(msg) => write!(f, "FormatError: {msg}"),
            Error::UnsupportedVersion(v) => write!(f, "UnsupportedVersion: {v}"),
            Error::Data { index } => {
                write!(f, "DataError: non-finite value at flat index {index}")
            }
            Error::Truncated { needed, available } => write!(
                f,
                "truncated input: needed {needed} bytes, {available} available"
            ),
            Error::Geometry(msg) => write!(f, "GeometryError: {msg}"),
            Error::Param(msg) => write!(f, "ParamError: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
