//! Binary feature-matrix files: header `n, d` as `u32` little-endian, then
//! `n*d` 32-bit floats row-major. Labels live in a plain-text sidecar, one
//! integer per line.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ndarray::Array2;

pub fn write_features(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != d) {
        bail!("ragged feature rows");
    }
    let mut bytes = Vec::with_capacity(8 + n * d * 4);
    bytes.extend_from_slice(&(n as u32).to_le_bytes());
    bytes.extend_from_slice(&(d as u32).to_le_bytes());
    for row in rows {
        for &v in row {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<Array2<f64>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.len() < 8 {
        bail!("{}: missing feature header", path.display());
    }
    let n = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let expected = 8 + n * d * 4;
    if bytes.len() != expected {
        bail!(
            "{}: expected {expected} bytes for {n}x{d} features, found {}",
            path.display(),
            bytes.len()
        );
    }
    let mut data = Vec::with_capacity(n * d);
    for chunk in bytes[8..].chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    Ok(Array2::from_shape_vec((n, d), data)?)
}

/// `foo.feat` -> `foo.labels`.
pub fn labels_path(features_path: &Path) -> PathBuf {
    features_path.with_extension("labels")
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<usize>()
                .with_context(|| format!("{}: bad label line '{l}'", path.display()))
        })
        .collect()
}
