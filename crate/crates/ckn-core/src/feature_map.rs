//! Grid-indexed vector maps, patch extraction, normalization and grid
//! subsampling — the substrate every other module operates on.
//!
//! A [`FeatureMap`] is a `height x width` grid holding one `channels`-long
//! real vector per grid cell, stored row-major by grid then channel. Grid
//! coordinates are integer pixel indices with unit spacing.

use ndarray::{Array3, ArrayView3};

use crate::error::{CknError, Result};

/// A finite 2-D grid of fixed-length feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    data: Array3<f64>,
}

impl FeatureMap {
    /// Wraps a `(height, width, channels)` array. All dimensions must be
    /// positive and every entry finite.
    pub fn new(data: Array3<f64>) -> Result<Self> {
        let (h, w, c) = data.dim();
        if h == 0 || w == 0 || c == 0 {
            return Err(CknError::invalid(format!(
                "feature map dimensions must be positive, got {h}x{w}x{c}"
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(CknError::invalid("feature map contains non-finite values"));
        }
        Ok(FeatureMap { data })
    }

    /// Builds a map from a flat row-major (grid then channel) buffer.
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(CknError::invalid(format!(
                "data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        let arr = Array3::from_shape_vec((height, width, channels), data)
            .map_err(|e| CknError::invalid(e.to_string()))?;
        FeatureMap::new(arr)
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        FeatureMap {
            data: Array3::zeros((height, width, channels)),
        }
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn channels(&self) -> usize {
        self.data.dim().2
    }

    pub fn view(&self) -> ArrayView3<'_, f64> {
        self.data.view()
    }

    /// The feature vector at grid cell `(row, col)` as a contiguous slice.
    pub fn cell(&self, row: usize, col: usize) -> &[f64] {
        self.data
            .as_slice()
            .map(|s| {
                let c = self.channels();
                let base = (row * self.width() + col) * c;
                &s[base..base + c]
            })
            .expect("feature map storage is contiguous")
    }

    pub(crate) fn data_mut(&mut self) -> &mut Array3<f64> {
        &mut self.data
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice().expect("contiguous")
    }
}

/// A square `side x side` patch shape. Offsets are centered on the anchor:
/// for side `m` they span `-floor(m/2) ..= ceil(m/2)-1` in both dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchShape {
    side: usize,
}

impl PatchShape {
    pub fn new(side: usize) -> Result<Self> {
        if side == 0 {
            return Err(CknError::invalid("patch side must be >= 1"));
        }
        Ok(PatchShape { side })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Offset range as signed deltas: `-floor(m/2) ..= ceil(m/2)-1`.
    pub fn offsets(&self) -> impl Iterator<Item = isize> + Clone {
        let lo = -((self.side / 2) as isize);
        let hi = (self.side as isize + 1) / 2; // exclusive
        lo..hi
    }

    /// First valid anchor index along a dimension.
    pub fn anchor_start(&self) -> usize {
        self.side / 2
    }

    /// Number of valid anchors along a dimension of length `dim`, or `None`
    /// if the patch does not fit.
    pub fn anchor_count(&self, dim: usize) -> Option<usize> {
        (dim >= self.side).then(|| dim - self.side + 1)
    }

    /// Flattened patch length for a map with `channels` channels.
    pub fn len(&self, channels: usize) -> usize {
        self.side * self.side * channels
    }
}

/// One extracted patch: values laid out offset-major then channel, plus the
/// anchor grid coordinate it was read from.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchVector {
    pub values: Vec<f64>,
    pub anchor: (usize, usize),
}

/// Optional per-patch preprocessing applied before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PatchPreproc {
    #[default]
    None,
    /// Subtract, per channel, the mean of that channel over the patch
    /// (contrast normalization for raw pixel patches).
    SubtractChannelMean,
}

impl PatchPreproc {
    pub fn apply(&self, values: &mut [f64], channels: usize) {
        match self {
            PatchPreproc::None => {}
            PatchPreproc::SubtractChannelMean => {
                let positions = values.len() / channels;
                if positions == 0 {
                    return;
                }
                for ch in 0..channels {
                    let mut mean = 0.0;
                    for p in 0..positions {
                        mean += values[p * channels + ch];
                    }
                    mean /= positions as f64;
                    for p in 0..positions {
                        values[p * channels + ch] -= mean;
                    }
                }
            }
        }
    }
}

/// Copies the patch anchored at `(row, col)` into `out`, offset-major then
/// channel. The caller guarantees the anchor is valid and `out` has length
/// `shape.len(channels)`.
pub(crate) fn copy_patch_into(map: &FeatureMap, shape: PatchShape, row: usize, col: usize, out: &mut [f64]) {
    let c = map.channels();
    let w = map.width();
    let data = map.as_slice();
    let mut k = 0;
    for dr in shape.offsets() {
        let r = (row as isize + dr) as usize;
        for dc in shape.offsets() {
            let cc = (col as isize + dc) as usize;
            let base = (r * w + cc) * c;
            out[k..k + c].copy_from_slice(&data[base..base + c]);
            k += c;
        }
    }
}

/// Extracts one patch per valid anchor (anchors whose full patch lies inside
/// the grid), enumerated row-major.
pub fn extract_patches(map: &FeatureMap, shape: PatchShape) -> Result<Vec<PatchVector>> {
    let (h, w) = (map.height(), map.width());
    let (rows, cols) = match (shape.anchor_count(h), shape.anchor_count(w)) {
        (Some(r), Some(c)) => (r, c),
        _ => {
            return Err(CknError::EmptyResult(format!(
                "patch side {} exceeds map size {h}x{w}",
                shape.side()
            )))
        }
    };
    let start = shape.anchor_start();
    let len = shape.len(map.channels());
    let mut patches = Vec::with_capacity(rows * cols);
    for ar in 0..rows {
        for ac in 0..cols {
            let (row, col) = (start + ar, start + ac);
            let mut values = vec![0.0; len];
            copy_patch_into(map, shape, row, col, &mut values);
            patches.push(PatchVector {
                values,
                anchor: (row, col),
            });
        }
    }
    Ok(patches)
}

/// Normalizes `values` in place to `v / max(||v||, epsilon)` and returns the
/// original norm.
pub fn normalize_slice(values: &mut [f64], epsilon: f64) -> f64 {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let denom = norm.max(epsilon);
    for v in values.iter_mut() {
        *v /= denom;
    }
    norm
}

/// Returns `(psi / max(||psi||, epsilon), ||psi||)`. Total function: the zero
/// vector stays zero.
pub fn normalize_patch(patch: &PatchVector, epsilon: f64) -> (PatchVector, f64) {
    let mut out = patch.clone();
    let norm = normalize_slice(&mut out.values, epsilon);
    (out, norm)
}

/// Every `factor`-th coordinate in each dimension, starting at the centered
/// offset `floor((factor-1)/2)`, enumerated row-major.
pub fn subsample_grid(height: usize, width: usize, factor: usize) -> Result<Vec<(usize, usize)>> {
    if factor < 1 {
        return Err(CknError::invalid("subsampling factor must be >= 1"));
    }
    let offset = (factor - 1) / 2;
    let mut coords = Vec::new();
    for r in (offset..height).step_by(factor) {
        for c in (offset..width).step_by(factor) {
            coords.push((r, c));
        }
    }
    Ok(coords)
}

/// Grid dimensions produced by [`subsample_grid`].
pub fn subsampled_dims(height: usize, width: usize, factor: usize) -> (usize, usize) {
    let offset = (factor - 1) / 2;
    let count = |dim: usize| {
        if offset >= dim {
            0
        } else {
            (dim - offset).div_ceil(factor)
        }
    };
    (count(height), count(width))
}
