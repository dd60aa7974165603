use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed PNG {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("unsupported color type in {path}: {kind}")]
    UnsupportedColor { path: PathBuf, kind: String },
    #[error("failed to encode PNG {path}: {message}")]
    Encode { path: PathBuf, message: String },

    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("tile {tile_h}x{tile_w} does not fit in {height}x{width} image")]
    TileTooLarge {
        tile_h: usize,
        tile_w: usize,
        height: usize,
        width: usize,
    },
    #[error("invalid tile size {0}x{1}")]
    InvalidTileSize(usize, usize),
    #[error("export incomplete: {written} of {total} tiles written: {source}")]
    PartialExport {
        written: usize,
        total: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("class {0} has no tiles")]
    EmptyClass(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("class {class} has {count} item(s), at least 2 needed to split")]
    ClassTooSmall { class: usize, count: usize },
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty dataset")]
    EmptyDataset,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("batch normalization needs at least 2 values per channel in train mode, got {0}")]
    BatchTooSmall(usize),
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("not a model file")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("model file CRC32 mismatch (file is corrupted): stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("model file truncated: {0}")]
    Truncated(String),

    #[error("class index {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound(path)
        } else {
            Error::Io { path, source }
        }
    }
}
