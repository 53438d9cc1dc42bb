use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HistairError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("unsupported bit depth: {0}")]
    UnsupportedBitDepth(String),
    #[error("image has a zero dimension ({width}x{height})")]
    ZeroDimension { width: usize, height: usize },
    #[error("pixel buffer length {len} does not match {width}x{height}")]
    BufferSize {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("histogram is empty (all counts are zero)")]
    EmptyHistogram,
    #[error("non-finite or non-positive feature value: {0}")]
    InvalidFeature(String),
    #[error("segmentation produced no usable objects ({0})")]
    NoObjects(String),
    #[error("matching produced no candidates")]
    NoCandidates,
    #[error("{stage} estimation failed: {found} usable votes, {needed} required")]
    Estimation {
        stage: &'static str,
        found: usize,
        needed: usize,
    },
}

pub type Result<T> = std::result::Result<T, HistairError>;
