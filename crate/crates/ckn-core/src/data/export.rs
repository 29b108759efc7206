//! Filter-sheet export: the filters with the largest importance weights,
//! each min-max normalized, tiled into one PGM (grayscale filters) or PPM
//! (RGB filters) image.

use std::path::Path;

use crate::error::{CknError, Result};
use crate::training::LayerParams;

use super::pgm::{write_pgm, write_ppm};

const GAP: usize = 1;

/// Exports the `top_k` filters sorted by descending weight. `channels` is the
/// pixel channel count the filters were trained on (1 or 3); the filter
/// length must be `side^2 * channels` for an integer side. Returns the filter
/// indices in tile order.
pub fn export_filters(
    params: &LayerParams,
    channels: usize,
    top_k: usize,
    path: impl AsRef<Path>,
) -> Result<Vec<usize>> {
    if channels != 1 && channels != 3 {
        return Err(CknError::invalid("channels must be 1 or 3"));
    }
    let m = params.input_len();
    if m % channels != 0 {
        return Err(CknError::invalid(format!(
            "filter length {m} is not a multiple of {channels} channels"
        )));
    }
    let area = m / channels;
    let side = (area as f64).sqrt().round() as usize;
    if side * side != area {
        return Err(CknError::invalid(format!(
            "filter length {m} does not reshape to a square {channels}-channel patch"
        )));
    }
    let p = params.num_filters();
    if top_k == 0 || top_k > p {
        return Err(CknError::invalid(format!(
            "top_k must be in 1..={p}, got {top_k}"
        )));
    }

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        params.eta()[b]
            .partial_cmp(&params.eta()[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    order.truncate(top_k);

    let cols = (top_k as f64).sqrt().ceil() as usize;
    let rows = top_k.div_ceil(cols);
    let img_w = cols * side + (cols - 1) * GAP;
    let img_h = rows * side + (rows - 1) * GAP;
    let mut pixels = vec![0u8; img_w * img_h * channels];

    for (tile, &l) in order.iter().enumerate() {
        let filter = params.filters().row(l);
        let lo = filter.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = filter.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        let (tr, tc) = (tile / cols, tile % cols);
        let (r0, c0) = (tr * (side + GAP), tc * (side + GAP));
        for pr in 0..side {
            for pc in 0..side {
                for ch in 0..channels {
                    // patch layout: offset-major then channel
                    let v = filter[(pr * side + pc) * channels + ch];
                    let norm = if range > 0.0 { (v - lo) / range } else { 0.5 };
                    let byte = (norm * 255.0).round().clamp(0.0, 255.0) as u8;
                    pixels[((r0 + pr) * img_w + c0 + pc) * channels + ch] = byte;
                }
            }
        }
    }

    if channels == 1 {
        write_pgm(path, img_w, img_h, &pixels)?;
    } else {
        write_ppm(path, img_w, img_h, &pixels)?;
    }
    Ok(order)
}
