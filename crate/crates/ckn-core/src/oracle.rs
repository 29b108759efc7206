//! Brute-force evaluation of the exact convolutional kernels on tiny inputs,
//! plus quadrature verification of the Gaussian-kernel linear expansion and a
//! Gram positive-semidefiniteness check.
//!
//! These are verification oracles: exact but exponential in bookkeeping, so
//! they are intended for grids up to about 8x8 and at most a couple of
//! layers. The approximation in [`crate::network`] is validated against them.

use ndarray::Array2;

use crate::error::{CknError, Result};
use crate::feature_map::{FeatureMap, PatchShape};

/// Smoothing parameters of the two Gaussian factors of the kernel: `beta`
/// controls spatial closeness, `sigma` feature closeness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub beta: f64,
    pub sigma: f64,
}

impl KernelConfig {
    pub fn new(beta: f64, sigma: f64) -> Result<Self> {
        if !(beta > 0.0) || !(sigma > 0.0) {
            return Err(CknError::invalid(format!(
                "smoothing parameters must be positive, got beta={beta}, sigma={sigma}"
            )));
        }
        Ok(KernelConfig { beta, sigma })
    }
}

/// Per-layer patch shapes and smoothing parameters for the multilayer kernel.
///
/// For a stack of `L` entries, entries `1..L-1` build successive feature maps
/// from patches of the previous level; the last entry's config drives the
/// image-level kernel over the final coordinate set (its patch shape is not
/// used — the top-level sum runs over the whole final grid).
#[derive(Debug, Clone)]
pub struct LayerStack {
    layers: Vec<(PatchShape, KernelConfig)>,
}

impl LayerStack {
    pub fn new(layers: Vec<(PatchShape, KernelConfig)>) -> Result<Self> {
        if layers.is_empty() {
            return Err(CknError::invalid("layer stack must be nonempty"));
        }
        Ok(LayerStack { layers })
    }

    pub fn layers(&self) -> &[(PatchShape, KernelConfig)] {
        &self.layers
    }
}

/// One point of an idealized feature map: its norm and (implicitly) its
/// normalized direction, tracked through the recursion via the joint Gram
/// matrix of normalized features.
struct LevelState {
    /// Per image: anchor grid (rows, cols).
    dims: Vec<(usize, usize)>,
    /// Per image: norm of the feature at each anchor, row-major.
    norms: Vec<Vec<f64>>,
    /// Inner products of *normalized* features over all (image, anchor)
    /// points, with the zero convention (zero feature -> zero vector).
    /// Indexed by global point index.
    ngram: Array2<f64>,
    /// Start offset of each image's points in the global index.
    starts: Vec<usize>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// The one-layer convolutional kernel between two feature maps, evaluated by
/// the exact double sum over both grids. Grids may differ in size; channel
/// counts must match. Coordinates are each map's own 0-based pixel indices.
pub fn single_layer_kernel(phi: &FeatureMap, phi2: &FeatureMap, cfg: &KernelConfig) -> Result<f64> {
    if phi.channels() != phi2.channels() {
        return Err(CknError::invalid(format!(
            "channel mismatch: {} vs {}",
            phi.channels(),
            phi2.channels()
        )));
    }
    let normalized = |m: &FeatureMap| -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut norms = Vec::with_capacity(m.height() * m.width());
        let mut feats = Vec::with_capacity(m.height() * m.width());
        for r in 0..m.height() {
            for c in 0..m.width() {
                let v = m.cell(r, c);
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                let f = if n > 0.0 {
                    v.iter().map(|x| x / n).collect()
                } else {
                    vec![0.0; v.len()]
                };
                norms.push(n);
                feats.push(f);
            }
        }
        (norms, feats)
    };
    let (norms_a, feats_a) = normalized(phi);
    let (norms_b, feats_b) = normalized(phi2);

    let inv_2b2 = 1.0 / (2.0 * cfg.beta * cfg.beta);
    let inv_2s2 = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
    let mut total = 0.0;
    for ra in 0..phi.height() {
        for ca in 0..phi.width() {
            let ia = ra * phi.width() + ca;
            if norms_a[ia] == 0.0 {
                continue;
            }
            for rb in 0..phi2.height() {
                for cb in 0..phi2.width() {
                    let ib = rb * phi2.width() + cb;
                    if norms_b[ib] == 0.0 {
                        continue;
                    }
                    let dr = ra as f64 - rb as f64;
                    let dc = ca as f64 - cb as f64;
                    let spatial = (-(dr * dr + dc * dc) * inv_2b2).exp();
                    let feat = (-squared_distance(&feats_a[ia], &feats_b[ib]) * inv_2s2).exp();
                    total += norms_a[ia] * norms_b[ib] * spatial * feat;
                }
            }
        }
    }
    Ok(total)
}

fn level0_state(maps: &[FeatureMap], p0_shape: PatchShape) -> Result<LevelState> {
    let mut dims = Vec::new();
    let mut all_patches: Vec<Vec<f64>> = Vec::new();
    let mut norms = Vec::new();
    let mut starts = Vec::new();
    for map in maps {
        let (rows, cols) = match (
            p0_shape.anchor_count(map.height()),
            p0_shape.anchor_count(map.width()),
        ) {
            (Some(r), Some(c)) => (r, c),
            _ => {
                return Err(CknError::invalid(format!(
                    "zeroth patch side {} exceeds input grid {}x{}",
                    p0_shape.side(),
                    map.height(),
                    map.width()
                )))
            }
        };
        starts.push(all_patches.len());
        dims.push((rows, cols));
        let patches = crate::feature_map::extract_patches(map, p0_shape)?;
        let mut map_norms = Vec::with_capacity(patches.len());
        for p in patches {
            let n = p.values.iter().map(|x| x * x).sum::<f64>().sqrt();
            let f = if n > 0.0 {
                p.values.iter().map(|x| x / n).collect()
            } else {
                vec![0.0; p.values.len()]
            };
            map_norms.push(n);
            all_patches.push(f);
        }
        norms.push(map_norms);
    }
    let total = all_patches.len();
    let mut ngram = Array2::zeros((total, total));
    for i in 0..total {
        for j in i..total {
            let g = all_patches[i]
                .iter()
                .zip(&all_patches[j])
                .map(|(a, b)| a * b)
                .sum::<f64>();
            ngram[(i, j)] = g;
            ngram[(j, i)] = g;
        }
    }
    Ok(LevelState {
        dims,
        norms,
        ngram,
        starts,
    })
}

/// Evaluates the patch-level kernel between anchor `za` of image `ia` and
/// anchor `zb` of image `ib`, given the previous level's state.
fn patch_kernel(
    state: &LevelState,
    shape: PatchShape,
    cfg: &KernelConfig,
    ia: usize,
    za: (usize, usize),
    ib: usize,
    zb: (usize, usize),
) -> f64 {
    let (_, cols_a) = state.dims[ia];
    let (_, cols_b) = state.dims[ib];
    let inv_2b2 = 1.0 / (2.0 * cfg.beta * cfg.beta);
    let inv_2s2 = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
    let mut total = 0.0;
    for du_r in shape.offsets() {
        for du_c in shape.offsets() {
            let ra = (za.0 as isize + du_r) as usize;
            let ca = (za.1 as isize + du_c) as usize;
            let pa = state.starts[ia] + ra * cols_a + ca;
            let na = state.norms[ia][ra * cols_a + ca];
            if na == 0.0 {
                continue;
            }
            for dv_r in shape.offsets() {
                for dv_c in shape.offsets() {
                    let rb = (zb.0 as isize + dv_r) as usize;
                    let cb = (zb.1 as isize + dv_c) as usize;
                    let pb = state.starts[ib] + rb * cols_b + cb;
                    let nb = state.norms[ib][rb * cols_b + cb];
                    if nb == 0.0 {
                        continue;
                    }
                    let dr = (du_r - dv_r) as f64;
                    let dc = (du_c - dv_c) as f64;
                    let spatial = (-(dr * dr + dc * dc) * inv_2b2).exp();
                    // ||na~ - nb~||^2 = 2 - 2 <na~, nb~> for unit vectors
                    let d2 = 2.0 - 2.0 * state.ngram[(pa, pb)];
                    let feat = (-d2.max(0.0) * inv_2s2).exp();
                    total += na * nb * spatial * feat;
                }
            }
        }
    }
    total
}

fn advance_level(state: &LevelState, shape: PatchShape, cfg: &KernelConfig) -> Result<LevelState> {
    let mut dims = Vec::new();
    let mut starts = Vec::new();
    let mut anchors: Vec<(usize, (usize, usize))> = Vec::new(); // (image, anchor)
    let mut count = 0;
    for (i, &(h, w)) in state.dims.iter().enumerate() {
        let (rows, cols) = match (shape.anchor_count(h), shape.anchor_count(w)) {
            (Some(r), Some(c)) => (r, c),
            _ => {
                return Err(CknError::invalid(format!(
                    "patch side {} exceeds remaining grid {h}x{w}",
                    shape.side()
                )))
            }
        };
        starts.push(count);
        dims.push((rows, cols));
        let start = shape.anchor_start();
        for r in 0..rows {
            for c in 0..cols {
                anchors.push((i, (start + r, start + c)));
                count += 1;
            }
        }
    }
    let mut gram = Array2::zeros((count, count));
    for a in 0..count {
        for b in a..count {
            let (ia, za) = anchors[a];
            let (ib, zb) = anchors[b];
            let k = patch_kernel(state, shape, cfg, ia, za, ib, zb);
            gram[(a, b)] = k;
            gram[(b, a)] = k;
        }
    }
    // convert to norms + normalized gram
    let mut norms = vec![Vec::new(); state.dims.len()];
    let mut point_norm = vec![0.0; count];
    for a in 0..count {
        let (ia, _) = anchors[a];
        let n = gram[(a, a)].max(0.0).sqrt();
        point_norm[a] = n;
        norms[ia].push(n);
    }
    let mut ngram = Array2::zeros((count, count));
    for a in 0..count {
        for b in 0..count {
            let denom = point_norm[a] * point_norm[b];
            ngram[(a, b)] = if denom > 0.0 { gram[(a, b)] / denom } else { 0.0 };
        }
    }
    Ok(LevelState {
        dims,
        norms,
        ngram,
        starts,
    })
}

/// Joint kernel (Gram) matrix of the exact multilayer kernel over a set of
/// input maps. Entry `(i, j)` is the image-level kernel between maps `i` and
/// `j`: intermediate levels are built from patch-kernel evaluations, and the
/// top level applies the one-layer kernel over the final coordinate sets with
/// the last entry's smoothing parameters.
pub fn multilayer_gram(
    maps: &[FeatureMap],
    stack: &LayerStack,
    p0_shape: PatchShape,
) -> Result<Array2<f64>> {
    if maps.is_empty() {
        return Err(CknError::invalid("no input maps"));
    }
    let channels = maps[0].channels();
    if maps.iter().any(|m| m.channels() != channels) {
        return Err(CknError::invalid("channel mismatch across input maps"));
    }
    let mut state = level0_state(maps, p0_shape)?;
    let layers = stack.layers();
    for (shape, cfg) in &layers[..layers.len() - 1] {
        state = advance_level(&state, *shape, cfg)?;
    }
    let top = &layers[layers.len() - 1].1;
    let inv_2b2 = 1.0 / (2.0 * top.beta * top.beta);
    let inv_2s2 = 1.0 / (2.0 * top.sigma * top.sigma);
    let n_img = maps.len();
    let mut gram = Array2::zeros((n_img, n_img));
    for i in 0..n_img {
        for j in i..n_img {
            let (_, cols_i) = state.dims[i];
            let (_, cols_j) = state.dims[j];
            let mut total = 0.0;
            for (pi, &na) in state.norms[i].iter().enumerate() {
                if na == 0.0 {
                    continue;
                }
                let (ra, ca) = (pi / cols_i, pi % cols_i);
                for (pj, &nb) in state.norms[j].iter().enumerate() {
                    if nb == 0.0 {
                        continue;
                    }
                    let (rb, cb) = (pj / cols_j, pj % cols_j);
                    let dr = ra as f64 - rb as f64;
                    let dc = ca as f64 - cb as f64;
                    let spatial = (-(dr * dr + dc * dc) * inv_2b2).exp();
                    let d2 = 2.0 - 2.0 * state.ngram[(state.starts[i] + pi, state.starts[j] + pj)];
                    let feat = (-d2.max(0.0) * inv_2s2).exp();
                    total += na * nb * spatial * feat;
                }
            }
            gram[(i, j)] = total;
            gram[(j, i)] = total;
        }
    }
    Ok(gram)
}

/// The exact multilayer kernel between two input maps.
pub fn multilayer_kernel(
    xi0: &FeatureMap,
    xi0b: &FeatureMap,
    stack: &LayerStack,
    p0_shape: PatchShape,
) -> Result<f64> {
    let gram = multilayer_gram(&[xi0.clone(), xi0b.clone()], stack, p0_shape)?;
    Ok(gram[(0, 1)])
}

/// Verifies the linear expansion of the Gaussian kernel by uniform quadrature
/// in dimension `m <= 2`: returns `(closed_form, quadrature)` where the
/// quadrature approximates
/// `(2/(pi sigma^2))^(m/2) * Int exp(-||x-w||^2/sigma^2) exp(-||y-w||^2/sigma^2) dw`
/// on a uniform grid over `[-halfwidth, halfwidth]^m`.
pub fn lemma1_quadrature_check(
    x: &[f64],
    y: &[f64],
    sigma: f64,
    grid_halfwidth: f64,
    grid_points_per_dim: usize,
) -> Result<(f64, f64)> {
    let m = x.len();
    if m != y.len() {
        return Err(CknError::invalid("x and y must have the same dimension"));
    }
    if m == 0 || m > 2 {
        return Err(CknError::invalid(format!(
            "unsupported dimension {m}: uniform sampling is reserved for m <= 2"
        )));
    }
    if !(sigma > 0.0) || !(grid_halfwidth > 0.0) || grid_points_per_dim < 2 {
        return Err(CknError::invalid("sigma, halfwidth must be positive and grid >= 2 points"));
    }
    let d2 = squared_distance(x, y);
    let exact = (-d2 / (2.0 * sigma * sigma)).exp();

    let s2 = sigma * sigma;
    let delta = 2.0 * grid_halfwidth / (grid_points_per_dim - 1) as f64;
    let coord = |j: usize| -grid_halfwidth + j as f64 * delta;
    let constant = (2.0 / (std::f64::consts::PI * s2)).powf(m as f64 / 2.0);
    let mut sum = 0.0;
    match m {
        1 => {
            for j in 0..grid_points_per_dim {
                let w = coord(j);
                let dx = x[0] - w;
                let dy = y[0] - w;
                sum += (-(dx * dx) / s2).exp() * (-(dy * dy) / s2).exp();
            }
            sum *= delta;
        }
        2 => {
            for j0 in 0..grid_points_per_dim {
                let w0 = coord(j0);
                for j1 in 0..grid_points_per_dim {
                    let w1 = coord(j1);
                    let dx = (x[0] - w0).powi(2) + (x[1] - w1).powi(2);
                    let dy = (y[0] - w0).powi(2) + (y[1] - w1).powi(2);
                    sum += (-dx / s2).exp() * (-dy / s2).exp();
                }
            }
            sum *= delta * delta;
        }
        _ => unreachable!(),
    }
    Ok((exact, constant * sum))
}

/// Smallest eigenvalue of a symmetric matrix and the PSD verdict
/// `min_eig >= -1e-8 * max(1, max_eig)`.
pub fn gram_psd_check(kernel_values: &Array2<f64>) -> Result<(f64, bool)> {
    let (n, m) = kernel_values.dim();
    if n != m {
        return Err(CknError::invalid("matrix must be square"));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (kernel_values[(i, j)] - kernel_values[(j, i)]).abs() > 1e-10 {
                return Err(CknError::invalid(format!(
                    "matrix is not symmetric at ({i},{j})"
                )));
            }
        }
    }
    let mat = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        0.5 * (kernel_values[(i, j)] + kernel_values[(j, i)])
    });
    let eigs = mat.symmetric_eigenvalues();
    let min_eig = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_eig = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let is_psd = min_eig >= -1e-8 * max_eig.max(1.0);
    Ok((min_eig, is_psd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_map::FeatureMap;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn map_1x1(values: &[f64]) -> FeatureMap {
        FeatureMap::from_vec(1, 1, values.len(), values.to_vec()).unwrap()
    }

    fn random_map(h: usize, w: usize, c: usize, rng: &mut impl Rng) -> FeatureMap {
        let data: Vec<f64> = (0..h * w * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        FeatureMap::from_vec(h, w, c, data).unwrap()
    }

    #[test]
    fn identical_unit_cells() {
        let a = map_1x1(&[3.0, 4.0]);
        let cfg = KernelConfig::new(1.7, 0.4).unwrap();
        let k = single_layer_kernel(&a, &a, &cfg).unwrap();
        assert!((k - 25.0).abs() < 1e-12, "k = {k}");
    }

    #[test]
    fn orthogonal_unit_cells() {
        let a = map_1x1(&[1.0, 0.0]);
        let b = map_1x1(&[0.0, 1.0]);
        let cfg = KernelConfig::new(123.0, 1.0).unwrap();
        let k = single_layer_kernel(&a, &b, &cfg).unwrap();
        assert!((k - (-1.0f64).exp()).abs() < 1e-12, "k = {k}");
    }

    #[test]
    fn zero_cells_do_not_contribute() {
        let a = FeatureMap::from_vec(2, 1, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = FeatureMap::from_vec(2, 1, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let cfg = KernelConfig::new(1.0, 1.0).unwrap();
        let k = single_layer_kernel(&a, &b, &cfg).unwrap();
        // only the (0,0)x(0,0) term survives
        assert!((k - 1.0).abs() < 1e-12, "k = {k}");
    }

    #[test]
    fn channel_mismatch_rejected() {
        let a = map_1x1(&[1.0]);
        let b = map_1x1(&[1.0, 2.0]);
        let cfg = KernelConfig::new(1.0, 1.0).unwrap();
        assert!(single_layer_kernel(&a, &b, &cfg).is_err());
    }

    #[test]
    fn one_layer_stack_on_single_cell_reduces_to_single_layer() {
        let a = map_1x1(&[0.3, -0.8]);
        let b = map_1x1(&[0.5, 0.1]);
        let cfg = KernelConfig::new(2.0, 0.7).unwrap();
        let stack = LayerStack::new(vec![(PatchShape::new(1).unwrap(), cfg)]).unwrap();
        let km = multilayer_kernel(&a, &b, &stack, PatchShape::new(1).unwrap()).unwrap();
        let ks = single_layer_kernel(&a, &b, &cfg).unwrap();
        assert!((km - ks).abs() < 1e-12, "{km} vs {ks}");
    }

    #[test]
    fn identical_inputs_give_singular_psd_gram() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let a = random_map(4, 4, 1, &mut rng);
        let stack = LayerStack::new(vec![
            (PatchShape::new(3).unwrap(), KernelConfig::new(1.0, 0.8).unwrap()),
            (PatchShape::new(1).unwrap(), KernelConfig::new(2.0, 0.6).unwrap()),
        ])
        .unwrap();
        let gram = multilayer_gram(&[a.clone(), a.clone()], &stack, PatchShape::new(1).unwrap()).unwrap();
        assert!((gram[(0, 0)] - gram[(0, 1)]).abs() < 1e-10);
        assert!((gram[(0, 0)] - gram[(1, 1)]).abs() < 1e-10);
        let (min_eig, psd) = gram_psd_check(&gram).unwrap();
        assert!(psd, "min eig {min_eig}");
        // singular: one eigenvalue ~ 0
        assert!(min_eig.abs() <= 1e-8 * gram[(0, 0)].max(1.0));
    }

    #[test]
    fn multilayer_gram_is_psd_on_random_maps() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let maps: Vec<_> = (0..6).map(|_| random_map(4, 4, 1, &mut rng)).collect();
        let stack = LayerStack::new(vec![
            (PatchShape::new(3).unwrap(), KernelConfig::new(1.0, 0.9).unwrap()),
            (PatchShape::new(1).unwrap(), KernelConfig::new(1.5, 0.7).unwrap()),
        ])
        .unwrap();
        let gram = multilayer_gram(&maps, &stack, PatchShape::new(1).unwrap()).unwrap();
        let (min_eig, psd) = gram_psd_check(&gram).unwrap();
        assert!(psd, "min eig {min_eig}");
    }

    #[test]
    fn degenerate_stack_rejected() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a = random_map(3, 3, 1, &mut rng);
        let stack = LayerStack::new(vec![
            (PatchShape::new(5).unwrap(), KernelConfig::new(1.0, 1.0).unwrap()),
            (PatchShape::new(1).unwrap(), KernelConfig::new(1.0, 1.0).unwrap()),
        ])
        .unwrap();
        assert!(multilayer_kernel(&a, &a, &stack, PatchShape::new(1).unwrap()).is_err());
    }

    #[test]
    fn quadrature_at_zero_distance() {
        let (exact, quad) = lemma1_quadrature_check(&[0.0], &[0.0], 1.0, 8.0, 801).unwrap();
        assert_eq!(exact, 1.0);
        assert!((quad - 1.0).abs() < 1e-6, "quad = {quad}");
    }

    #[test]
    fn quadrature_at_distance_two() {
        let (exact, quad) = lemma1_quadrature_check(&[0.0], &[2.0], 1.0, 10.0, 801).unwrap();
        assert!((exact - (-2.0f64).exp()).abs() < 1e-15);
        assert!((quad - exact).abs() < 1e-6 * exact.max(1e-12), "quad = {quad}");
    }

    #[test]
    fn quadrature_rejects_high_dimension() {
        assert!(lemma1_quadrature_check(&[0.0; 3], &[0.0; 3], 1.0, 8.0, 11).is_err());
    }

    #[test]
    fn psd_check_identity() {
        let m = Array2::eye(3);
        let (min_eig, psd) = gram_psd_check(&m).unwrap();
        assert!((min_eig - 1.0).abs() < 1e-12);
        assert!(psd);
    }

    #[test]
    fn psd_check_rank_one() {
        let m = array![[1.0, 1.0], [1.0, 1.0]];
        let (min_eig, psd) = gram_psd_check(&m).unwrap();
        assert!(min_eig.abs() < 1e-12);
        assert!(psd);
    }

    #[test]
    fn psd_check_indefinite() {
        let m = array![[1.0, 2.0], [2.0, 1.0]];
        let (min_eig, psd) = gram_psd_check(&m).unwrap();
        assert!((min_eig - (-1.0)).abs() < 1e-12);
        assert!(!psd);
    }

    #[test]
    fn psd_check_rejects_asymmetric() {
        let m = array![[1.0, 0.5], [0.0, 1.0]];
        assert!(gram_psd_check(&m).is_err());
    }

    #[test]
    fn large_beta_gives_local_shift_invariance() {
        // same content embedded at two different positions: with huge beta
        // the kernel no longer sees the translation
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let block: Vec<f64> = (0..9 * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let embed = |r0: usize, c0: usize| {
            let mut data = vec![0.0; 6 * 6 * 2];
            for r in 0..3 {
                for c in 0..3 {
                    for ch in 0..2 {
                        data[((r0 + r) * 6 + c0 + c) * 2 + ch] = block[(r * 3 + c) * 2 + ch];
                    }
                }
            }
            FeatureMap::from_vec(6, 6, 2, data).unwrap()
        };
        let base = embed(0, 0);
        let shifted = embed(2, 1);
        let cfg = KernelConfig::new(1e6, 0.8).unwrap();
        let k_self = single_layer_kernel(&base, &base, &cfg).unwrap();
        let k_shift = single_layer_kernel(&base, &shifted, &cfg).unwrap();
        assert!(
            (k_self - k_shift).abs() / k_self < 1e-6,
            "self {k_self} vs shifted {k_shift}"
        );
    }

    #[test]
    fn quadrature_error_decreases_with_resolution() {
        let sigma = 0.9;
        let x = [0.3, -0.2];
        let y = [-0.5, 0.6];
        let hw = 8.0 * sigma + 1.0;
        let mut last = f64::INFINITY;
        let mut decreased = 0;
        for points in [11usize, 21, 41, 81] {
            let (exact, quad) = lemma1_quadrature_check(&x, &y, sigma, hw, points).unwrap();
            let err = (quad - exact).abs();
            if last.is_finite() {
                assert!(err < last, "error did not decrease: {err} vs {last}");
                decreased += 1;
            }
            last = err;
        }
        assert!(decreased >= 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn single_layer_kernel_is_symmetric(seed in 0u64..500) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = random_map(3, 3, 2, &mut rng);
            let b = random_map(4, 2, 2, &mut rng);
            let cfg = KernelConfig::new(
                rng.gen_range(0.3..3.0),
                rng.gen_range(0.3..3.0),
            ).unwrap();
            let kab = single_layer_kernel(&a, &b, &cfg).unwrap();
            let kba = single_layer_kernel(&b, &a, &cfg).unwrap();
            let scale = kab.abs().max(1.0);
            prop_assert!((kab - kba).abs() <= 1e-12 * scale);
        }

        #[test]
        fn single_layer_gram_is_psd(seed in 0u64..200) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let maps: Vec<_> = (0..5).map(|_| random_map(3, 3, 1, &mut rng)).collect();
            let cfg = KernelConfig::new(rng.gen_range(0.4..4.0), rng.gen_range(0.4..4.0)).unwrap();
            let n = maps.len();
            let mut gram = Array2::zeros((n, n));
            for i in 0..n {
                for j in i..n {
                    let k = single_layer_kernel(&maps[i], &maps[j], &cfg).unwrap();
                    gram[(i, j)] = k;
                    gram[(j, i)] = k;
                }
            }
            let (min_eig, psd) = gram_psd_check(&gram).unwrap();
            prop_assert!(psd, "min eig {}", min_eig);
        }
    }
}
