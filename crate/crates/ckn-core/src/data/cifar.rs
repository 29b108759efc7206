//! CIFAR-10 binary reader: records of 3073 bytes (1 label byte + 3072 pixel
//! bytes, channel-planar RGB, 32x32 row-major per plane).

use std::path::Path;

use crate::error::{CknError, Result};
use crate::feature_map::FeatureMap;

use super::{read_file_maybe_gz, Dataset, Split};

pub const RECORD_BYTES: usize = 3073;
const SIDE: usize = 32;
const PLANE: usize = SIDE * SIDE;

pub fn read_cifar10_bin(paths: &[impl AsRef<Path>], split: Split) -> Result<Dataset> {
    if paths.is_empty() {
        return Err(CknError::invalid("no CIFAR batch files given"));
    }
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let bytes = read_file_maybe_gz(path)?;
        if bytes.len() % RECORD_BYTES != 0 {
            return Err(CknError::Truncated {
                what: format!("CIFAR batch {}", path.display()),
                expected: bytes.len().div_ceil(RECORD_BYTES) * RECORD_BYTES,
                found: bytes.len(),
            });
        }
        for record in bytes.chunks_exact(RECORD_BYTES) {
            let label = record[0] as usize;
            if label > 9 {
                return Err(CknError::Decode(format!(
                    "label {label} out of range 0..9 in {}",
                    path.display()
                )));
            }
            let mut data = vec![0.0; PLANE * 3];
            for ch in 0..3 {
                let plane = &record[1 + ch * PLANE..1 + (ch + 1) * PLANE];
                for r in 0..SIDE {
                    for c in 0..SIDE {
                        data[(r * SIDE + c) * 3 + ch] = plane[r * SIDE + c] as f64 / 255.0;
                    }
                }
            }
            images.push(FeatureMap::from_vec(SIDE, SIDE, 3, data)?);
            labels.push(label);
        }
    }
    Dataset::new(images, labels, "cifar10", split)
}
