//! Crate-wide error type.
//!
//! Every fallible operation returns [`Error`]. Variants are grouped by what
//! the caller can do about them: shape and argument problems are programming
//! or usage errors, `Io`/`Format`/`NonBinaryMask` are data errors, and
//! `EmptyMask`/`InsufficientImages` are model-level failures (the math or the
//! episodic protocol cannot proceed).

use std::fmt;

#[derive(Debug)]
pub enum Error {
    /// Operand shapes do not line up. `context` names the operation.
    DimensionMismatch {
        context: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    /// A mask with no foreground where at least one pixel is required.
    /// The right inverse of an all-zero mask row does not exist.
    EmptyMask,
    /// An aggregate over an empty collection. The payload names the input.
    EmptyList(&'static str),
    /// A class does not hold enough distinct images for a k-shot episode.
    InsufficientImages {
        class: String,
        have: usize,
        need: usize,
    },
    /// Split index out of range for the split table or dataset.
    InvalidSplit(usize),
    /// A configuration value violates its documented bounds.
    InvalidConfig(String),
    /// A function argument violates its documented bounds.
    InvalidArgument(String),
    Io(std::io::Error),
    /// Malformed file contents (netpbm headers, tensor containers, datasets).
    Format(String),
    /// Mask pixel outside {0, 255} when loading in strict mode.
    NonBinaryMask { value: u8 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                context,
                expected,
                got,
            } => write!(
                f,
                "{context}: dimension mismatch, expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
            Error::EmptyMask => write!(f, "mask has no foreground pixels"),
            Error::EmptyList(what) => write!(f, "{what} is empty"),
            Error::InsufficientImages { class, have, need } => write!(
                f,
                "class {class:?} has {have} usable images, episode needs {need}"
            ),
            Error::InvalidSplit(i) => write!(f, "split index {i} out of range"),
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::NonBinaryMask { value } => {
                write!(f, "mask pixel {value} is not 0 or 255 (strict mode)")
            }
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
