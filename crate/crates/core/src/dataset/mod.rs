//! Image ingestion, manifests, splitting, augmentation and synthetic data.

use std::path::PathBuf;

mod augment;
mod image;
mod manifest;
pub mod synth;

pub use self::augment::{augment, augment_with, AugmentParams, MAX_SHIFT};
pub use self::image::{image_to_input, load_sample, load_sample_bytes, Image};
pub use self::manifest::{parse_suffix, split, DatasetManifest, Hand, ManifestEntry, Split, MANIFEST_FILE};
pub use self::synth::{synth_generate, SilhouetteSpec};

use crate::tensor::Tensor;

/// Finger counts 0 through 5.
pub const NUM_LABELS: usize = 6;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("image has zero width or height")]
    EmptyImage,
    #[error("label {0} is outside 0..=5")]
    Label(i64),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("no samples found")]
    EmptyManifest,
    #[error("split fraction {0} is not in (0, 1)")]
    Fraction(f64),
    #[error("samples per class must be at least 1")]
    NoSamples,
}

pub type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSample {
    pub image: Image,
    pub label: u8,
    pub hand: Hand,
}

impl LabeledSample {
    pub fn new(image: Image, label: u8, hand: Hand) -> Result<LabeledSample> {
        if label as usize >= NUM_LABELS {
            return Err(DatasetError::Label(label as i64));
        }
        Ok(LabeledSample { image, label, hand })
    }
}

/// Loads every entry as a `(input, label)` pair, in order.
pub fn load_entries(manifest: &DatasetManifest, entries: &[ManifestEntry]) -> Result<Vec<(Tensor, usize)>> {
    entries
        .iter()
        .map(|e| Ok((load_sample(manifest.resolve(e))?, e.label as usize)))
        .collect()
}
