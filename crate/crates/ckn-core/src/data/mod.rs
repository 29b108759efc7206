//! Dataset parsers (MNIST IDX, CIFAR-10 binary), whitened patch banks,
//! PGM/PPM image I/O, filter-sheet export, and synthetic corpora for smoke
//! tests.

pub mod cifar;
pub mod export;
pub mod mnist;
pub mod pgm;
pub mod synthetic;
pub mod whitening;

pub use cifar::read_cifar10_bin;
pub use export::export_filters;
pub use mnist::read_mnist_idx;
pub use pgm::{read_image, read_pgm, read_ppm, write_pgm, write_ppm};
pub use whitening::{sample_whitened_patches, PatchBank};

use crate::error::{CknError, Result};
use crate::feature_map::FeatureMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// A labeled image collection with pixel values in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<FeatureMap>,
    pub labels: Vec<usize>,
    pub name: String,
    pub split: Split,
}

impl Dataset {
    pub fn new(
        images: Vec<FeatureMap>,
        labels: Vec<usize>,
        name: impl Into<String>,
        split: Split,
    ) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(CknError::CountMismatch(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        Ok(Dataset {
            images,
            labels,
            name: name.into(),
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            name: self.name.clone(),
            split: self.split,
        }
    }
}

/// Converts to a single luminance channel (BT.601 weights); grayscale inputs
/// pass through.
pub fn grayscale(map: &FeatureMap) -> Result<FeatureMap> {
    match map.channels() {
        1 => Ok(map.clone()),
        3 => {
            let (h, w) = (map.height(), map.width());
            let mut data = Vec::with_capacity(h * w);
            for r in 0..h {
                for c in 0..w {
                    let px = map.cell(r, c);
                    data.push(0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]);
                }
            }
            FeatureMap::from_vec(h, w, 1, data)
        }
        other => Err(CknError::invalid(format!(
            "cannot convert {other}-channel map to grayscale"
        ))),
    }
}

/// Reads a whole file, transparently decompressing `.gz` paths.
pub(crate) fn read_file_maybe_gz(path: &std::path::Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        use std::io::Read;
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| CknError::Decode(format!("gzip: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}
