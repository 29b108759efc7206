//! Whitened patch banks: sample raw grayscale patches, center them, and apply
//! ZCA whitening (rotate, rescale eigenvalues with a small floor, rotate
//! back). ZCA keeps the spatial structure of the patches, which is what
//! filter visualizations display.

use ndarray::{s, Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{CknError, Result};
use crate::feature_map::{copy_patch_into, FeatureMap, PatchShape};

const EIG_FLOOR: f64 = 1e-5;

/// A bank of whitened patches plus the fitted whitening transform.
#[derive(Debug, Clone)]
pub struct PatchBank {
    /// n x d whitened patches.
    pub patches: Array2<f64>,
    /// Mean raw patch subtracted before whitening.
    pub mean: Array1<f64>,
    /// The d x d ZCA transform (applied on the right of row vectors).
    pub transform: Array2<f64>,
    pub patch_side: usize,
}

/// Samples `n` raw patches uniformly over (image, anchor), centers the bank,
/// and ZCA-whitens it. Images must be grayscale and at least `patch_side` on
/// each dimension.
pub fn sample_whitened_patches(
    images: &[FeatureMap],
    patch_side: usize,
    n: usize,
    rng_seed: u64,
) -> Result<PatchBank> {
    if images.is_empty() {
        return Err(CknError::EmptyCorpus("no images".into()));
    }
    if images.iter().any(|m| m.channels() != 1) {
        return Err(CknError::invalid("whitening expects grayscale images"));
    }
    let shape = PatchShape::new(patch_side)?;
    let mut cumulative = Vec::with_capacity(images.len());
    let mut anchor_cols = Vec::with_capacity(images.len());
    let mut total = 0usize;
    for img in images {
        let count = match (
            shape.anchor_count(img.height()),
            shape.anchor_count(img.width()),
        ) {
            (Some(r), Some(c)) => {
                anchor_cols.push(c);
                r * c
            }
            _ => {
                anchor_cols.push(0);
                0
            }
        };
        total += count;
        cumulative.push(total);
    }
    if total == 0 {
        return Err(CknError::EmptyCorpus(format!(
            "no image admits a {patch_side}x{patch_side} patch"
        )));
    }
    let d = patch_side * patch_side;
    let start = shape.anchor_start();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut patches = Array2::zeros((n, d));
    for i in 0..n {
        let g = rng.gen_range(0..total);
        let img_idx = cumulative.partition_point(|&c| c <= g);
        let local = g - if img_idx == 0 { 0 } else { cumulative[img_idx - 1] };
        let cols = anchor_cols[img_idx];
        let (ar, ac) = (local / cols, local % cols);
        copy_patch_into(
            &images[img_idx],
            shape,
            start + ar,
            start + ac,
            patches.row_mut(i).as_slice_mut().expect("contiguous"),
        );
    }

    // center
    let mean = patches.sum_axis(ndarray::Axis(0)) / n as f64;
    for mut row in patches.rows_mut() {
        row.zip_mut_with(&mean.view(), |v, m| *v -= m);
    }

    // covariance and its eigendecomposition
    let cov = patches.t().dot(&patches) / n as f64;
    let cov_na = nalgebra::DMatrix::from_fn(d, d, |i, j| 0.5 * (cov[(i, j)] + cov[(j, i)]));
    let eig = cov_na.symmetric_eigen();
    let mut transform = Array2::zeros((d, d));
    // U diag((lambda + floor)^(-1/2)) U^T
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                let lam = eig.eigenvalues[k].max(0.0);
                acc += eig.eigenvectors[(i, k)] * eig.eigenvectors[(j, k)]
                    / (lam + EIG_FLOOR).sqrt();
            }
            transform[(i, j)] = acc;
        }
    }

    // whiten in place, block by block
    const BLOCK: usize = 8192;
    let mut i0 = 0;
    while i0 < n {
        let i1 = (i0 + BLOCK).min(n);
        let out = patches.slice(s![i0..i1, ..]).dot(&transform);
        patches.slice_mut(s![i0..i1, ..]).assign(&out);
        i0 = i1;
    }

    Ok(PatchBank {
        patches,
        mean,
        transform,
        patch_side,
    })
}
