//! Data preparation: lesion crops, augmentation, balanced pools, manifests
//! and a synthetic two-class dataset.

pub mod augment;
pub mod error;
pub mod geometry;
pub mod image;
pub mod pool;
pub mod synth;

pub use augment::{augment, augment_sample, AugmentationPolicy, Elastic};
pub use error::{DataError, Result};
pub use geometry::{crop_lesion, resize_bilinear, resize_sample};
pub use image::{from_batch, to_batch, to_model_range, Image, Label, Mask, MaskedSample};
pub use pool::{
    build_pool, prepare_source, render_pool, select_labeled_subset, write_pool, DatasetManifest, ManifestEntry,
    Resolution,
};
pub use synth::synth_dataset;
