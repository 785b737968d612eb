use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("no lesion pixels")]
    NoLesion,
    #[error("mask is {mask_w}x{mask_h} but image is {image_w}x{image_h}")]
    MaskSize { image_w: usize, image_h: usize, mask_w: usize, mask_h: usize },
    #[error("class {0} has no samples")]
    MissingClass(u8),
    #[error("class {label} has {have} samples, {need} requested")]
    InsufficientClass { label: u8, have: usize, need: usize },
    #[error("invalid augmentation policy: {0}")]
    Policy(String),
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: image::ImageError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;
