use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("too many instances: {0} exceeds the 16-bit id space")]
    TooManyInstances(usize),

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("malformed image {}: {reason}", .path.display())]
    MalformedImage { path: PathBuf, reason: String },

    #[error("unsupported pixel format in {}: expected {expected}, found {found}", .path.display())]
    BitDepth {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },

    #[error("degenerate histogram: a single occupied bin ({0})")]
    DegenerateHistogram(u8),

    #[error("hole covers the whole image; nothing to propagate from")]
    NoKnownPixels,

    #[error("{0}")]
    Domain(String),

    #[error("{0}")]
    Validation(String),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: u64,
        reason: String,
    },

    #[error("unpaired file: {0}")]
    Unpaired(String),

    #[error("{file}: {source}")]
    InFile {
        file: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dims(a: (usize, usize), b: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            left_w: a.0,
            left_h: a.1,
            right_w: b.0,
            right_h: b.1,
        }
    }

    pub(crate) fn in_file(self, file: impl Into<String>) -> Self {
        Error::InFile {
            file: file.into(),
            source: Box::new(self),
        }
    }
}
