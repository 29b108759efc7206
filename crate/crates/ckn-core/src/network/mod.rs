//! The feed-forward network that approximates the multilayer kernel:
//! zeroth-layer input maps, per-layer activation (convolution with learned
//! filters plus the exponential non-linearity) and Gaussian pooling with grid
//! subsampling, layer-wise training, image encoding, and model (de)serialization.

mod serial;

pub use serial::{load_model, load_model_file, save_model, save_model_file};

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{CknError, Result};
use crate::feature_map::{
    copy_patch_into, normalize_slice, subsample_grid, subsampled_dims, FeatureMap, PatchPreproc,
    PatchShape,
};
use crate::training::{train_layer, InitMethod, LayerParams, LayerTrainReport, TrainLayerConfig};

/// The zeroth-layer encoding of the raw image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMapKind {
    /// Two-channel map of first-order differences; the feature norm is the
    /// gradient magnitude and its direction the orientation. First-layer
    /// patches are 1x1.
    GradientMap,
    /// Raw pixel patches of side `patch_side`, optionally contrast-normalized
    /// by subtracting the per-channel patch mean.
    PatchMap {
        patch_side: usize,
        subtract_mean_color: bool,
    },
}

impl InputMapKind {
    /// Patch preprocessing applied to first-layer patches.
    pub fn preproc(&self) -> PatchPreproc {
        match self {
            InputMapKind::PatchMap {
                subtract_mean_color: true,
                ..
            } => PatchPreproc::SubtractChannelMean,
            _ => PatchPreproc::None,
        }
    }

    /// First-layer patch shape on the zeroth map.
    pub fn layer1_patch(&self) -> Result<PatchShape> {
        match self {
            InputMapKind::GradientMap => PatchShape::new(1),
            InputMapKind::PatchMap { patch_side, .. } => PatchShape::new(*patch_side),
        }
    }
}

/// A trained network: the input-map kind, the ordered layer parameters, the
/// normalization offset and the configured side of the final map.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub input_kind: InputMapKind,
    pub layers: Vec<LayerParams>,
    pub epsilon: f64,
    pub final_target_size: usize,
}

impl NetworkModel {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(CknError::invalid("network must have at least one layer"));
        }
        if !(self.epsilon > 0.0) {
            return Err(CknError::invalid("epsilon must be positive"));
        }
        if self.final_target_size == 0 {
            return Err(CknError::invalid("final target size must be positive"));
        }
        Ok(())
    }

    /// Number of learned parameters: filter entries of trained layers. The
    /// analytic orientation layer of gradient-map networks is not learned.
    pub fn parameter_count(&self) -> usize {
        let skip = matches!(self.input_kind, InputMapKind::GradientMap) as usize;
        self.layers
            .iter()
            .skip(skip)
            .map(|l| l.num_filters() * l.input_len())
            .sum()
    }
}

/// Per-layer architecture knobs for building and training a network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub patch_side: usize,
    pub filters: usize,
    /// Subsampling factor. Ignored for the last layer, whose factor is
    /// derived from `final_size` (use `None` there).
    pub gamma: Option<usize>,
}

/// Full architecture plus training budget.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub input: InputMapKind,
    pub layers: Vec<LayerSpec>,
    /// Side of the final pooled map (e.g. 4 for a 4x4 output).
    pub final_size: usize,
    pub epsilon: f64,
    pub n_pairs: usize,
    pub max_iters: usize,
    pub kmeans_iters: usize,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(CknError::invalid("architecture needs at least one layer"));
        }
        if let InputMapKind::GradientMap = self.input {
            if self.layers[0].patch_side != 1 {
                return Err(CknError::invalid(
                    "gradient-map networks use a 1x1 first-layer patch",
                ));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.patch_side == 0 {
                return Err(CknError::invalid(format!("layer {}: patch side must be >= 1", i + 1)));
            }
            if l.filters == 0 {
                return Err(CknError::invalid(format!("layer {}: filter count must be >= 1", i + 1)));
            }
            if i + 1 < self.layers.len() && l.gamma.map_or(true, |g| g < 1) {
                return Err(CknError::invalid(format!(
                    "layer {}: subsampling factor must be >= 1",
                    i + 1
                )));
            }
        }
        if self.final_size == 0 {
            return Err(CknError::invalid("final size must be >= 1"));
        }
        if !(self.epsilon > 0.0) {
            return Err(CknError::invalid("epsilon must be positive"));
        }
        Ok(())
    }

    /// Learned parameter count for `image_channels`-channel input, by the
    /// same rule as [`NetworkModel::parameter_count`]. Pure arithmetic; no
    /// training required.
    pub fn parameter_count(&self, image_channels: usize) -> usize {
        let mut prev = match self.input {
            InputMapKind::GradientMap => 2,
            InputMapKind::PatchMap { .. } => image_channels,
        };
        let mut total = 0;
        for (i, l) in self.layers.iter().enumerate() {
            let m = l.patch_side * l.patch_side * prev;
            let learned = !(i == 0 && matches!(self.input, InputMapKind::GradientMap));
            if learned {
                total += l.filters * m;
            }
            prev = l.filters;
        }
        total
    }
}

/// Two-channel map of first-order differences of a grayscale image: channel 0
/// differentiates along rows, channel 1 along columns; the last row/column
/// gets difference 0.
pub fn gradient_input(image: &FeatureMap) -> Result<FeatureMap> {
    if image.channels() != 1 {
        return Err(CknError::invalid(format!(
            "gradient input expects a grayscale image, got {} channels",
            image.channels()
        )));
    }
    let (h, w) = (image.height(), image.width());
    let mut out = FeatureMap::zeros(h, w, 2);
    {
        let data = out.data_mut();
        for r in 0..h {
            for c in 0..w {
                let v = image.cell(r, c)[0];
                data[(r, c, 0)] = if r + 1 < h { image.cell(r + 1, c)[0] - v } else { 0.0 };
                data[(r, c, 1)] = if c + 1 < w { image.cell(r, c + 1)[0] - v } else { 0.0 };
            }
        }
    }
    Ok(out)
}

/// First-layer parameters for gradient-map input: `p1` unit filters uniformly
/// sampled on the circle, `sigma = 2*pi/p1`, and equal weights calibrated so
/// the approximate kernel of a unit vector with itself is 1 at the sampling
/// points.
pub fn orientation_layer(p1: usize, gamma: usize) -> Result<LayerParams> {
    if p1 < 2 {
        return Err(CknError::invalid("need at least 2 orientations"));
    }
    let sigma = 2.0 * std::f64::consts::PI / p1 as f64;
    let mut filters = Array2::zeros((p1, 2));
    for l in 0..p1 {
        let theta = 2.0 * std::f64::consts::PI * l as f64 / p1 as f64;
        filters[(l, 0)] = theta.cos();
        filters[(l, 1)] = theta.sin();
    }
    // self-kernel at u = w_0 (any filter, by symmetry):
    // sum_j eta * exp(-2 ||w_0 - w_j||^2 / sigma^2) = 1
    let inv_s2 = 1.0 / (sigma * sigma);
    let mut denom = 0.0;
    for j in 0..p1 {
        let d0 = filters[(0, 0)] - filters[(j, 0)];
        let d1 = filters[(0, 1)] - filters[(j, 1)];
        denom += (-2.0 * (d0 * d0 + d1 * d1) * inv_s2).exp();
    }
    let eta = Array1::from_elem(p1, 1.0 / denom);
    LayerParams::new(filters, eta, sigma, PatchShape::new(1)?, gamma)
}

/// The activation map: for every valid anchor, extract the patch, normalize
/// it with the epsilon guard, and emit
/// `||psi|| * [sqrt(eta_l) * exp(-||psi~ - w_l||^2 / sigma^2)]_l`.
pub fn activation_map(
    map: &FeatureMap,
    params: &LayerParams,
    epsilon: f64,
    preproc: PatchPreproc,
) -> Result<FeatureMap> {
    let shape = params.patch_shape();
    let (rows, cols) = match (shape.anchor_count(map.height()), shape.anchor_count(map.width())) {
        (Some(r), Some(c)) => (r, c),
        _ => {
            return Err(CknError::invalid(format!(
                "patch side {} exceeds map size {}x{}",
                shape.side(),
                map.height(),
                map.width()
            )))
        }
    };
    let m = shape.len(map.channels());
    if m != params.input_len() {
        return Err(CknError::invalid(format!(
            "filter length {} does not match patch length {m}",
            params.input_len()
        )));
    }
    let p = params.num_filters();
    let inv_s2 = 1.0 / (params.sigma() * params.sigma());
    let sqrt_eta: Vec<f64> = params.eta().iter().map(|e| e.sqrt()).collect();
    let filters = params.filters();
    let w_sq: Vec<f64> = (0..p)
        .map(|l| filters.row(l).iter().map(|v| v * v).sum())
        .collect();
    let start = shape.anchor_start();

    let mut out = FeatureMap::zeros(rows, cols, p);
    {
        let data = out.data_mut();
        let mut patch = vec![0.0; m];
        for ar in 0..rows {
            for ac in 0..cols {
                copy_patch_into(map, shape, start + ar, start + ac, &mut patch);
                preproc.apply(&mut patch, map.channels());
                let norm = normalize_slice(&mut patch, epsilon);
                if norm == 0.0 {
                    continue; // output row stays zero
                }
                let psi_sq: f64 = patch.iter().map(|v| v * v).sum();
                for l in 0..p {
                    let dot: f64 = patch.iter().zip(filters.row(l)).map(|(a, b)| a * b).sum();
                    let d2 = psi_sq + w_sq[l] - 2.0 * dot;
                    data[(ar, ac, l)] = norm * sqrt_eta[l] * (-d2.max(0.0) * inv_s2).exp();
                }
            }
        }
    }
    Ok(out)
}

/// Linear pooling with Gaussian weights followed by grid subsampling:
/// `xi(z) = sqrt(2/pi) * sum_u exp(-||u - z||^2 / beta^2) * zeta(u)` with
/// `beta = gamma` (unit pixel spacing), the sum truncated to the window
/// `||u - z||_inf <= 2 beta` and clipped at the borders.
pub fn gaussian_pool(zeta: &FeatureMap, gamma: usize) -> Result<FeatureMap> {
    if gamma < 1 {
        return Err(CknError::invalid("gamma must be >= 1"));
    }
    let beta = gamma as f64;
    let radius = 2 * gamma; // ||u-z||_inf <= 2 beta with unit spacing
    let inv_b2 = 1.0 / (beta * beta);
    let scale = (2.0 / std::f64::consts::PI).sqrt();
    let (h, w, p) = (zeta.height(), zeta.width(), zeta.channels());
    let anchors = subsample_grid(h, w, gamma)?;
    let (oh, ow) = subsampled_dims(h, w, gamma);
    if oh == 0 || ow == 0 {
        return Err(CknError::invalid("subsampled grid is empty"));
    }
    let mut out = FeatureMap::zeros(oh, ow, p);
    {
        let data = out.data_mut();
        for (idx, &(zr, zc)) in anchors.iter().enumerate() {
            let (or_, oc) = (idx / ow, idx % ow);
            let r0 = zr.saturating_sub(radius);
            let r1 = (zr + radius).min(h - 1);
            let c0 = zc.saturating_sub(radius);
            let c1 = (zc + radius).min(w - 1);
            for ur in r0..=r1 {
                let dr = ur as f64 - zr as f64;
                for uc in c0..=c1 {
                    let dc = uc as f64 - zc as f64;
                    let weight = scale * (-(dr * dr + dc * dc) * inv_b2).exp();
                    let cell = zeta.cell(ur, uc);
                    for l in 0..p {
                        data[(or_, oc, l)] += weight * cell[l];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// One full layer: activation then pooling with the layer's factor.
pub fn forward_layer(
    map: &FeatureMap,
    params: &LayerParams,
    epsilon: f64,
    preproc: PatchPreproc,
) -> Result<FeatureMap> {
    let zeta = activation_map(map, params, epsilon, preproc)?;
    gaussian_pool(&zeta, params.gamma())
}

/// Builds the zeroth-layer map for an image.
pub fn input_map(image: &FeatureMap, kind: &InputMapKind) -> Result<FeatureMap> {
    match kind {
        InputMapKind::GradientMap => gradient_input(image),
        InputMapKind::PatchMap { .. } => Ok(image.clone()),
    }
}

fn layer_preproc(kind: &InputMapKind, layer_index: usize) -> PatchPreproc {
    if layer_index == 0 {
        kind.preproc()
    } else {
        PatchPreproc::None
    }
}

/// Pooling factor of the last layer: chosen so the pooled grid hits the
/// configured final size.
fn last_gamma(activation_side: usize, final_size: usize) -> usize {
    activation_side.div_ceil(final_size).max(1)
}

/// Trains a network layer by layer. The first layer of a gradient-map
/// network is the analytic orientation layer; every other layer is learned
/// from pairs sampled off the forwarded maps of the training images.
pub fn train_network(
    images: &[FeatureMap],
    config: &NetworkConfig,
    rng_seed: u64,
) -> Result<(NetworkModel, Vec<LayerTrainReport>)> {
    config.validate()?;
    if images.is_empty() {
        return Err(CknError::EmptyCorpus("no training images".into()));
    }
    let mut maps: Vec<FeatureMap> = images
        .iter()
        .map(|img| input_map(img, &config.input))
        .collect::<Result<_>>()?;

    let mut master = ChaCha8Rng::seed_from_u64(rng_seed);
    let n_layers = config.layers.len();
    let mut layers: Vec<LayerParams> = Vec::with_capacity(n_layers);
    let mut reports = Vec::new();

    for (k, spec) in config.layers.iter().enumerate() {
        let layer_seed: u64 = master.gen();
        let shape = PatchShape::new(spec.patch_side)?;
        let last = k + 1 == n_layers;
        let (cur_h, cur_w) = (maps[0].height(), maps[0].width());
        let act_side = shape
            .anchor_count(cur_h.min(cur_w))
            .ok_or_else(|| {
                CknError::invalid(format!(
                    "layer {}: patch side {} exceeds map size {cur_h}x{cur_w}",
                    k + 1,
                    spec.patch_side
                ))
            })?;
        let gamma = if last {
            last_gamma(act_side, config.final_size)
        } else {
            spec.gamma.unwrap_or(2)
        };

        let params = if k == 0 && matches!(config.input, InputMapKind::GradientMap) {
            orientation_layer(spec.filters, gamma)?
        } else {
            let cfg = TrainLayerConfig {
                filters: spec.filters,
                n_pairs: config.n_pairs,
                sigma_override: None,
                max_iters: config.max_iters,
                epsilon: config.epsilon,
                preproc: layer_preproc(&config.input, k),
                init: InitMethod::KMeans {
                    iters: config.kmeans_iters,
                },
                gamma,
                rng_seed: layer_seed,
            };
            let (params, report) = train_layer(&maps, shape, &cfg)?;
            log::info!(
                "layer {}: sigma {:.4}, objective {:.4e} -> {:.4e}",
                k + 1,
                report.sigma,
                report.objective_init,
                report.objective_final
            );
            reports.push(report);
            params
        };

        if !last {
            let eps = config.epsilon;
            let preproc = layer_preproc(&config.input, k);
            maps = maps
                .par_iter()
                .map(|m| forward_layer(m, &params, eps, preproc))
                .collect::<Result<Vec<_>>>()?;
        }
        layers.push(params);
    }

    let model = NetworkModel {
        input_kind: config.input,
        layers,
        epsilon: config.epsilon,
        final_target_size: config.final_size,
    };
    model.validate()?;
    Ok((model, reports))
}

/// Runs the input map and every layer, returning the final map flattened
/// grid-major then channel.
pub fn encode(image: &FeatureMap, model: &NetworkModel) -> Result<Vec<f64>> {
    model.validate()?;
    let mut map = input_map(image, &model.input_kind)?;
    for (k, params) in model.layers.iter().enumerate() {
        map = forward_layer(&map, params, model.epsilon, layer_preproc(&model.input_kind, k))
            .map_err(|e| {
                CknError::invalid(format!("layer {}: {e} (input image {}x{})",
                    k + 1,
                    image.height(),
                    image.width()
                ))
            })?;
    }
    Ok(map.as_slice().to_vec())
}

/// Encodes a batch in parallel, preserving order.
pub fn encode_batch(images: &[FeatureMap], model: &NetworkModel) -> Result<Vec<Vec<f64>>> {
    images.par_iter().map(|img| encode(img, model)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn gray(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> f64) -> FeatureMap {
        let mut data = Vec::with_capacity(h * w);
        for r in 0..h {
            for c in 0..w {
                data.push(f(r, c));
            }
        }
        FeatureMap::from_vec(h, w, 1, data).unwrap()
    }

    fn random_images(count: usize, side: usize, seed: u64) -> Vec<FeatureMap> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| gray(side, side, |_, _| rng.gen_range(0.0..1.0)))
            .collect()
    }

    fn gm1_config() -> NetworkConfig {
        NetworkConfig {
            input: InputMapKind::GradientMap,
            layers: vec![
                LayerSpec { patch_side: 1, filters: 12, gamma: Some(2) },
                LayerSpec { patch_side: 3, filters: 50, gamma: None },
            ],
            final_size: 4,
            epsilon: 1e-4,
            n_pairs: 100,
            max_iters: 5,
            kmeans_iters: 2,
        }
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let img = gray(4, 4, |_, _| 0.7);
        let g = gradient_input(&img).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_of_horizontal_ramp() {
        let img = gray(3, 4, |_, c| c as f64);
        let g = gradient_input(&img).unwrap();
        for r in 0..3 {
            for c in 0..4 {
                let cell = g.cell(r, c);
                assert_eq!(cell[0], 0.0, "row-direction at ({r},{c})");
                let expected = if c + 1 < 4 { 1.0 } else { 0.0 };
                assert_eq!(cell[1], expected, "col-direction at ({r},{c})");
            }
        }
    }

    #[test]
    fn gradient_of_step_edge() {
        let img = gray(1, 4, |_, c| if c < 2 { 0.0 } else { 1.0 });
        let g = gradient_input(&img).unwrap();
        assert_eq!(g.cell(0, 0)[1], 0.0);
        assert_eq!(g.cell(0, 1)[1], 1.0);
        assert_eq!(g.cell(0, 2)[1], 0.0);
    }

    #[test]
    fn gradient_rejects_multichannel() {
        let img = FeatureMap::zeros(2, 2, 3);
        assert!(gradient_input(&img).is_err());
    }

    #[test]
    fn orientation_layer_paper_setting() {
        let params = orientation_layer(12, 2).unwrap();
        assert_eq!(params.num_filters(), 12);
        assert!((params.sigma() - 2.0 * std::f64::consts::PI / 12.0).abs() < 1e-15);
        for l in 0..12 {
            let norm: f64 = params.filters().row(l).iter().map(|v| v * v).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn orientation_layer_self_kernel_is_one() {
        let params = orientation_layer(12, 2).unwrap();
        let u = params.filters().row(3).to_owned();
        let inv_s2 = 1.0 / (params.sigma() * params.sigma());
        let mut acc = 0.0;
        for l in 0..12 {
            let d: f64 = u
                .iter()
                .zip(params.filters().row(l))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let g = (-d * inv_s2).exp();
            acc += params.eta()[l] * g * g;
        }
        assert!((acc - 1.0).abs() < 1e-10, "self kernel {acc}");
    }

    #[test]
    fn activation_of_zero_map_is_zero() {
        let params = orientation_layer(8, 1).unwrap();
        let map = FeatureMap::zeros(5, 5, 2);
        let act = activation_map(&map, &params, 1e-4, PatchPreproc::None).unwrap();
        assert!(act.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn activation_at_filter_center() {
        // psi~ = w_l exactly, eta_l = 1, others 0 -> channel l equals ||psi||
        let filters = ndarray::array![[1.0, 0.0], [0.0, 1.0]];
        let eta = ndarray::array![1.0, 0.0];
        let params = LayerParams::new(filters, eta, 0.5, PatchShape::new(1).unwrap(), 1).unwrap();
        let map = FeatureMap::from_vec(1, 1, 2, vec![2.5, 0.0]).unwrap();
        let act = activation_map(&map, &params, 1e-4, PatchPreproc::None).unwrap();
        assert!((act.cell(0, 0)[0] - 2.5).abs() < 1e-12);
        // channel 1: sqrt(eta)=0 kills it
        assert_eq!(act.cell(0, 0)[1], 0.0);
    }

    #[test]
    fn activation_scalar_cross_check() {
        // single unit-norm pixel x, one filter w, sigma = 1
        let w = [0.6, 0.8];
        let x = [1.0, 0.0];
        let eta = 0.7;
        let filters = Array2::from_shape_vec((1, 2), w.to_vec()).unwrap();
        let params = LayerParams::new(
            filters,
            Array1::from_vec(vec![eta]),
            1.0,
            PatchShape::new(1).unwrap(),
            1,
        )
        .unwrap();
        let map = FeatureMap::from_vec(1, 1, 2, x.to_vec()).unwrap();
        let act = activation_map(&map, &params, 1e-4, PatchPreproc::None).unwrap();
        let d2 = (x[0] - w[0]).powi(2) + (x[1] - w[1]).powi(2);
        let expected = eta.sqrt() * (-d2).exp();
        assert!((act.cell(0, 0)[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn nonlinearity_matches_exponential_of_inner_product() {
        // for unit-norm x and w the response is f(w^T x) with
        // f(u) = exp((2/sigma^2)(u - 1))
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let sigma = rng.gen_range(0.3..2.0);
            let mut w = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let mut x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let nw = f64::sqrt(w[0] * w[0] + w[1] * w[1]);
            let nx = f64::sqrt(x[0] * x[0] + x[1] * x[1]);
            w = [w[0] / nw, w[1] / nw];
            x = [x[0] / nx, x[1] / nx];
            let filters = Array2::from_shape_vec((1, 2), w.to_vec()).unwrap();
            let params = LayerParams::new(
                filters,
                Array1::ones(1),
                sigma,
                PatchShape::new(1).unwrap(),
                1,
            )
            .unwrap();
            let map = FeatureMap::from_vec(1, 1, 2, x.to_vec()).unwrap();
            let act = activation_map(&map, &params, 1e-4, PatchPreproc::None).unwrap();
            let u = w[0] * x[0] + w[1] * x[1];
            let f = ((2.0 / (sigma * sigma)) * (u - 1.0)).exp();
            assert!(
                (act.cell(0, 0)[0] - f).abs() <= 1e-12,
                "response {} vs f(u) {}",
                act.cell(0, 0)[0],
                f
            );
        }
    }

    #[test]
    fn pooling_of_constant_map() {
        let c = 0.37;
        let map = gray(9, 9, |_, _| c);
        let pooled = gaussian_pool(&map, 2).unwrap();
        // interior anchor (far from borders): full window sum
        let beta = 2.0;
        let mut expected = 0.0;
        for dr in -4i32..=4 {
            for dc in -4i32..=4 {
                expected += (-(dr * dr + dc * dc) as f64 / (beta * beta)).exp();
            }
        }
        expected *= c * (2.0 / std::f64::consts::PI).sqrt();
        // anchors at (0,..),(2,..),(4,..): (4,4) is the center
        let (oh, ow) = (pooled.height(), pooled.width());
        assert_eq!((oh, ow), (5, 5));
        let got = pooled.cell(2, 2)[0];
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn pooling_of_delta_map() {
        let mut map = FeatureMap::zeros(9, 9, 1);
        map.data_mut()[(4, 4, 0)] = 1.0;
        let pooled = gaussian_pool(&map, 1).unwrap();
        let scale = (2.0 / std::f64::consts::PI).sqrt();
        assert!((pooled.cell(4, 4)[0] - scale).abs() < 1e-15);
        let r2 = pooled.cell(4, 6)[0];
        assert!((r2 - scale * (-4.0f64).exp()).abs() < 1e-15);
        // outside the 2-beta window (distance > 2 with beta = 1): zero
        assert_eq!(pooled.cell(4, 7)[0], 0.0);
        assert_eq!(pooled.cell(4, 8)[0], 0.0);
        assert!(gaussian_pool(&FeatureMap::zeros(3, 3, 2), 2)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn forward_layer_is_activation_then_pool() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = orientation_layer(6, 2).unwrap();
        for _ in 0..10 {
            let img = gray(8, 8, |_, _| rng.gen_range(0.0..1.0));
            let g = gradient_input(&img).unwrap();
            let direct = forward_layer(&g, &params, 1e-4, PatchPreproc::None).unwrap();
            let two_step =
                gaussian_pool(&activation_map(&g, &params, 1e-4, PatchPreproc::None).unwrap(), 2)
                    .unwrap();
            assert_eq!(direct, two_step);
        }
    }

    #[test]
    fn table_parameter_counts() {
        let gm = |m2: usize, p2: usize, s: usize| NetworkConfig {
            input: InputMapKind::GradientMap,
            layers: vec![
                LayerSpec { patch_side: 1, filters: 12, gamma: Some(2) },
                LayerSpec { patch_side: m2, filters: p2, gamma: None },
            ],
            final_size: s,
            epsilon: 1e-4,
            n_pairs: 0,
            max_iters: 0,
            kmeans_iters: 0,
        };
        let pm = |m1: usize, p1: usize, rest: Option<(usize, usize)>, s: usize| NetworkConfig {
            input: InputMapKind::PatchMap { patch_side: m1, subtract_mean_color: false },
            layers: {
                let mut v = vec![LayerSpec { patch_side: m1, filters: p1, gamma: Some(2) }];
                if let Some((m2, p2)) = rest {
                    v.push(LayerSpec { patch_side: m2, filters: p2, gamma: None });
                } else {
                    v[0].gamma = None;
                }
                v
            },
            final_size: s,
            epsilon: 1e-4,
            n_pairs: 0,
            max_iters: 0,
            kmeans_iters: 0,
        };
        assert_eq!(gm(3, 50, 4).parameter_count(1), 5400); // CKN-GM1
        assert_eq!(gm(3, 400, 3).parameter_count(1), 43200); // CKN-GM2
        assert_eq!(pm(5, 200, None, 4).parameter_count(1), 5000); // CKN-PM1
        assert_eq!(pm(5, 50, Some((2, 200)), 6).parameter_count(1), 41250); // CKN-PM2
        assert_eq!(gm(2, 800, 4).parameter_count(1), 38400); // CIFAR CKN-GM
        assert_eq!(pm(2, 100, Some((2, 800)), 4).parameter_count(3), 321200); // CIFAR CKN-PM
        assert_eq!(gm(3, 800, 4).parameter_count(1), 86400); // STL CKN-GM
        assert_eq!(pm(3, 50, Some((3, 800)), 3).parameter_count(3), 361350); // STL CKN-PM
    }

    #[test]
    fn gm1_geometry_on_28x28() {
        let images = random_images(6, 28, 40);
        let mut config = gm1_config();
        config.n_pairs = 400;
        config.max_iters = 8;
        let (model, reports) = train_network(&images, &config, 7).unwrap();
        assert_eq!(reports.len(), 1); // only layer 2 is learned
        assert_eq!(model.layers[1].filters().dim(), (50, 108));
        assert_eq!(model.parameter_count(), 5400);
        // derived last gamma: activation side 12, target 4 -> 3
        assert_eq!(model.layers[1].gamma(), 3);
        let code = encode(&images[0], &model).unwrap();
        assert_eq!(code.len(), 4 * 4 * 50);
    }

    #[test]
    fn zero_image_encodes_to_zero() {
        let images = random_images(4, 16, 50);
        let mut config = gm1_config();
        config.n_pairs = 200;
        config.max_iters = 5;
        config.final_size = 3;
        let (model, _) = train_network(&images, &config, 3).unwrap();
        let zero = FeatureMap::zeros(16, 16, 1);
        let code = encode(&zero, &model).unwrap();
        assert!(code.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_images_encode_identically() {
        let images = random_images(4, 14, 51);
        let mut config = gm1_config();
        config.n_pairs = 200;
        config.max_iters = 5;
        config.final_size = 3;
        let (model, _) = train_network(&images, &config, 3).unwrap();
        let a = encode(&images[0], &model).unwrap();
        let b = encode(&images[0].clone(), &model).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn incompatible_image_size_names_layer() {
        let images = random_images(4, 20, 52);
        let mut config = gm1_config();
        config.n_pairs = 200;
        config.max_iters = 5;
        let (model, _) = train_network(&images, &config, 3).unwrap();
        let tiny = FeatureMap::zeros(2, 2, 1);
        let err = encode(&tiny, &model).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("layer"), "message: {msg}");
    }

    #[test]
    fn train_network_is_deterministic() {
        let images = random_images(5, 12, 53);
        let config = NetworkConfig {
            input: InputMapKind::PatchMap { patch_side: 3, subtract_mean_color: false },
            layers: vec![LayerSpec { patch_side: 3, filters: 8, gamma: None }],
            final_size: 3,
            epsilon: 1e-4,
            n_pairs: 300,
            max_iters: 20,
            kmeans_iters: 3,
        };
        let (a, _) = train_network(&images, &config, 11).unwrap();
        let (b, _) = train_network(&images, &config, 11).unwrap();
        assert_eq!(a, b);
        let bytes_a = save_model(&a).unwrap();
        let bytes_b = save_model(&b).unwrap();
        assert_eq!(bytes_a, bytes_b);
    }

    #[test]
    fn local_shift_invariance_with_pooling() {
        // an image and its 1-pixel translate are closer in code space than
        // two independent images, in at least 95% of trials
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let images = random_images(6, 16, 54);
        let mut config = gm1_config();
        config.n_pairs = 400;
        config.max_iters = 10;
        config.final_size = 3;
        let (model, _) = train_network(&images, &config, 5).unwrap();

        let smooth = |rng: &mut ChaCha8Rng| {
            // random low-frequency image: sum of a few sinusoids
            let (a, b) = (rng.gen_range(0.3..1.0), rng.gen_range(0.3..1.0));
            let (fr, fc) = (rng.gen_range(0.2..0.6), rng.gen_range(0.2..0.6));
            let (pr, pc) = (rng.gen_range(0.0..6.28), rng.gen_range(0.0..6.28));
            move |r: usize, c: usize| {
                0.5 + 0.25 * a * (fr * r as f64 + pr).sin() + 0.25 * b * (fc * c as f64 + pc).sin()
            }
        };
        let dist = |u: &[f64], v: &[f64]| {
            u.iter()
                .zip(v)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        let mut hits = 0;
        let trials = 100;
        for _ in 0..trials {
            let fa = smooth(&mut rng);
            let fb = smooth(&mut rng);
            let img = gray(17, 17, fa);
            // crop two 16x16 views shifted by one pixel
            let crop = |r0: usize, c0: usize| {
                gray(16, 16, |r, c| img.cell(r + r0, c + c0)[0])
            };
            let a = encode(&crop(0, 0), &model).unwrap();
            let a_shift = encode(&crop(0, 1), &model).unwrap();
            let b = encode(&gray(16, 16, fb), &model).unwrap();
            if dist(&a, &a_shift) < dist(&a, &b) {
                hits += 1;
            }
        }
        assert!(hits >= 95, "only {hits}/{trials} trials were shift-stable");
    }
}
