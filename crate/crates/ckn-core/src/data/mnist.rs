//! MNIST IDX parser (big-endian magics 0x00000803 for images, 0x00000801 for
//! labels). Accepts plain or gzip-compressed files; pixel bytes are scaled to
//! `[0, 1]`.

use std::path::Path;

use crate::error::{CknError, Result};
use crate::feature_map::FeatureMap;

use super::{read_file_maybe_gz, Dataset, Split};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], pos: usize, what: &str) -> Result<u32> {
    bytes
        .get(pos..pos + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| CknError::Truncated {
            what: what.to_string(),
            expected: pos + 4,
            found: bytes.len(),
        })
}

pub fn read_mnist_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    split: Split,
) -> Result<Dataset> {
    let img_bytes = read_file_maybe_gz(images_path.as_ref())?;
    let magic = be_u32(&img_bytes, 0, "image magic")?;
    if magic != IMAGES_MAGIC {
        return Err(CknError::BadMagic {
            expected: format!("{IMAGES_MAGIC:#010x}"),
            found: format!("{magic:#010x}"),
        });
    }
    let n = be_u32(&img_bytes, 4, "image count")? as usize;
    let rows = be_u32(&img_bytes, 8, "row count")? as usize;
    let cols = be_u32(&img_bytes, 12, "column count")? as usize;
    let expected = 16 + n * rows * cols;
    if img_bytes.len() != expected {
        return Err(CknError::Truncated {
            what: "image payload".into(),
            expected,
            found: img_bytes.len(),
        });
    }

    let lbl_bytes = read_file_maybe_gz(labels_path.as_ref())?;
    let magic = be_u32(&lbl_bytes, 0, "label magic")?;
    if magic != LABELS_MAGIC {
        return Err(CknError::BadMagic {
            expected: format!("{LABELS_MAGIC:#010x}"),
            found: format!("{magic:#010x}"),
        });
    }
    let n_labels = be_u32(&lbl_bytes, 4, "label count")? as usize;
    if n_labels != n {
        return Err(CknError::CountMismatch(format!(
            "{n} images but {n_labels} labels"
        )));
    }
    let expected = 8 + n;
    if lbl_bytes.len() != expected {
        return Err(CknError::Truncated {
            what: "label payload".into(),
            expected,
            found: lbl_bytes.len(),
        });
    }

    let mut images = Vec::with_capacity(n);
    let px = rows * cols;
    for i in 0..n {
        let start = 16 + i * px;
        let data: Vec<f64> = img_bytes[start..start + px]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        images.push(FeatureMap::from_vec(rows, cols, 1, data)?);
    }
    let labels: Vec<usize> = lbl_bytes[8..8 + n].iter().map(|&b| b as usize).collect();
    if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
        return Err(CknError::Decode(format!("label {bad} out of range 0..9")));
    }
    Dataset::new(images, labels, "mnist", split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_idx(
        dir: &std::path::Path,
        n: usize,
        rows: usize,
        cols: usize,
        truncate_images: usize,
    ) -> (std::path::PathBuf, std::path::PathBuf) {
        let img_path = dir.join("images-idx3-ubyte");
        let lbl_path = dir.join("labels-idx1-ubyte");
        let mut img = Vec::new();
        img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        img.extend_from_slice(&(n as u32).to_be_bytes());
        img.extend_from_slice(&(rows as u32).to_be_bytes());
        img.extend_from_slice(&(cols as u32).to_be_bytes());
        for i in 0..n * rows * cols {
            img.push((i % 256) as u8);
        }
        img.truncate(img.len() - truncate_images);
        std::fs::File::create(&img_path)
            .unwrap()
            .write_all(&img)
            .unwrap();
        let mut lbl = Vec::new();
        lbl.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        lbl.extend_from_slice(&(n as u32).to_be_bytes());
        for i in 0..n {
            lbl.push((i % 10) as u8);
        }
        std::fs::File::create(&lbl_path)
            .unwrap()
            .write_all(&lbl)
            .unwrap();
        (img_path, lbl_path)
    }

    #[test]
    fn parses_valid_idx() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = write_idx(dir.path(), 7, 4, 5, 0);
        let ds = read_mnist_idx(&img, &lbl, Split::Train).unwrap();
        assert_eq!(ds.len(), 7);
        assert_eq!(ds.images[0].height(), 4);
        assert_eq!(ds.images[0].width(), 5);
        assert!(ds.labels.iter().all(|&l| l <= 9));
        // first pixel of second image: byte 20 -> 20/255
        assert!((ds.images[1].cell(0, 0)[0] - 20.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_images_error_names_counts() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = write_idx(dir.path(), 7, 4, 5, 3);
        match read_mnist_idx(&img, &lbl, Split::Train) {
            Err(CknError::Truncated {
                expected, found, ..
            }) => {
                assert_eq!(expected, 16 + 7 * 20);
                assert_eq!(found, 16 + 7 * 20 - 3);
            }
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn wrong_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = write_idx(dir.path(), 2, 2, 2, 0);
        // labels file used as images: wrong magic
        assert!(matches!(
            read_mnist_idx(&lbl, &img, Split::Train),
            Err(CknError::BadMagic { .. })
        ));
    }
}
