//! Unsupervised training of one layer's parameters: random patch-pair
//! sampling, the sigma quantile rule, the Gaussian-expansion objective with
//! analytic gradients, k-means initialization and a bound-constrained
//! limited-memory quasi-Newton optimizer.

pub mod kmeans;
pub mod lbfgsb;
pub mod objective;

pub use kmeans::kmeans_init;
pub use objective::objective_and_gradient;

use ndarray::{Array1, Array2, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{CknError, Result};
use crate::feature_map::{normalize_slice, FeatureMap, PatchPreproc, PatchShape};

/// Sampled pairs of normalized patch vectors, before targets are attached.
#[derive(Debug, Clone)]
pub struct PatchPairs {
    pub(crate) x: Array2<f64>,
    pub(crate) y: Array2<f64>,
}

impl PatchPairs {
    pub fn from_rows(x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        if x.dim() != y.dim() {
            return Err(CknError::invalid("x and y must have identical shapes"));
        }
        Ok(PatchPairs { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array2<f64> {
        &self.y
    }

    /// Euclidean distances `||x_i - y_i||`.
    pub fn distances(&self) -> Array1<f64> {
        let mut d = Array1::zeros(self.len());
        for i in 0..self.len() {
            let mut acc = 0.0;
            for (a, b) in self.x.row(i).iter().zip(self.y.row(i)) {
                let t = a - b;
                acc += t * t;
            }
            d[i] = acc.sqrt();
        }
        d
    }

    /// Attaches Gaussian targets `exp(-||x_i - y_i||^2 / (2 sigma^2))`.
    pub fn with_targets(self, sigma: f64) -> Result<TrainingPairs> {
        TrainingPairs::new(self.x, self.y, sigma)
    }
}

/// Training pairs with precomputed Gaussian targets and cached row norms.
#[derive(Debug, Clone)]
pub struct TrainingPairs {
    pub(crate) x: Array2<f64>,
    pub(crate) y: Array2<f64>,
    pub(crate) target: Array1<f64>,
    pub(crate) sq_x: Array1<f64>,
    pub(crate) sq_y: Array1<f64>,
}

impl TrainingPairs {
    pub fn new(x: Array2<f64>, y: Array2<f64>, sigma: f64) -> Result<Self> {
        if x.dim() != y.dim() {
            return Err(CknError::invalid("x and y must have identical shapes"));
        }
        if !(sigma > 0.0) {
            return Err(CknError::invalid("sigma must be positive"));
        }
        let sq = |m: &Array2<f64>| m.map_axis(Axis(1), |row| row.iter().map(|v| v * v).sum());
        let sq_x = sq(&x);
        let sq_y = sq(&y);
        let n = x.nrows();
        let mut target = Array1::zeros(n);
        let inv = 1.0 / (2.0 * sigma * sigma);
        for i in 0..n {
            let mut d2 = 0.0;
            for (a, b) in x.row(i).iter().zip(y.row(i)) {
                let t = a - b;
                d2 += t * t;
            }
            target[i] = (-d2 * inv).exp();
        }
        Ok(TrainingPairs {
            x,
            y,
            target,
            sq_x,
            sq_y,
        })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array2<f64> {
        &self.y
    }

    pub fn target(&self) -> &Array1<f64> {
        &self.target
    }

    /// Pairs with caller-supplied targets, for diagnostics and tests that
    /// construct targets from a known model.
    pub fn with_explicit_targets(
        x: Array2<f64>,
        y: Array2<f64>,
        target: Array1<f64>,
    ) -> Result<Self> {
        if x.dim() != y.dim() || x.nrows() != target.len() {
            return Err(CknError::invalid("mismatched pair/target shapes"));
        }
        let sq = |m: &Array2<f64>| m.map_axis(Axis(1), |row| row.iter().map(|v| v * v).sum());
        let sq_x = sq(&x);
        let sq_y = sq(&y);
        Ok(TrainingPairs {
            x,
            y,
            target,
            sq_x,
            sq_y,
        })
    }
}

/// Trained parameters of one layer: filters (one per row), importance
/// weights, the feature smoothing, the patch shape the filters apply to, and
/// the pooling subsampling factor.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    filters: Array2<f64>,
    eta: Array1<f64>,
    sigma: f64,
    patch_shape: PatchShape,
    gamma: usize,
}

impl LayerParams {
    pub fn new(
        filters: Array2<f64>,
        eta: Array1<f64>,
        sigma: f64,
        patch_shape: PatchShape,
        gamma: usize,
    ) -> Result<Self> {
        if eta.len() != filters.nrows() {
            return Err(CknError::invalid(format!(
                "eta length {} does not match filter count {}",
                eta.len(),
                filters.nrows()
            )));
        }
        if eta.iter().any(|&e| e < 0.0 || !e.is_finite()) {
            return Err(CknError::invalid("eta must be finite and nonnegative"));
        }
        if !filters.iter().all(|v| v.is_finite()) {
            return Err(CknError::invalid("filters contain non-finite values"));
        }
        if !(sigma > 0.0) {
            return Err(CknError::invalid("sigma must be positive"));
        }
        if gamma < 1 {
            return Err(CknError::invalid("gamma must be >= 1"));
        }
        Ok(LayerParams {
            filters,
            eta,
            sigma,
            patch_shape,
            gamma,
        })
    }

    pub fn filters(&self) -> &Array2<f64> {
        &self.filters
    }

    pub fn eta(&self) -> &Array1<f64> {
        &self.eta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn patch_shape(&self) -> PatchShape {
        self.patch_shape
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn num_filters(&self) -> usize {
        self.filters.nrows()
    }

    /// Length of the patch vectors the filters apply to.
    pub fn input_len(&self) -> usize {
        self.filters.ncols()
    }

    pub fn with_gamma(mut self, gamma: usize) -> Self {
        self.gamma = gamma.max(1);
        self
    }
}

/// Draws `n` pairs of patches uniformly over (map, anchor) across the whole
/// corpus, applies the preprocessing, and l2-normalizes each patch with the
/// `epsilon` guard. Deterministic given the seed.
pub fn sample_pairs(
    maps: &[FeatureMap],
    shape: PatchShape,
    n: usize,
    epsilon: f64,
    preproc: PatchPreproc,
    rng_seed: u64,
) -> Result<PatchPairs> {
    if !(epsilon > 0.0) {
        return Err(CknError::invalid("epsilon must be positive"));
    }
    if maps.is_empty() {
        return Err(CknError::EmptyCorpus("no maps to sample from".into()));
    }
    let channels = maps[0].channels();
    if maps.iter().any(|m| m.channels() != channels) {
        return Err(CknError::invalid("channel mismatch across maps"));
    }
    // prefix sums of per-map anchor counts
    let mut cumulative = Vec::with_capacity(maps.len());
    let mut total = 0usize;
    let mut anchor_cols = Vec::with_capacity(maps.len());
    for map in maps {
        let count = match (
            shape.anchor_count(map.height()),
            shape.anchor_count(map.width()),
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
        return Err(CknError::EmptyCorpus(
            "no map admits a valid patch of the requested shape".into(),
        ));
    }

    let dim = shape.len(channels);
    let start = shape.anchor_start();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut x = Array2::zeros((n, dim));
    let mut y = Array2::zeros((n, dim));
    let draw = |rng: &mut ChaCha8Rng, out: &mut [f64]| {
        let g = rng.gen_range(0..total);
        let map_idx = cumulative.partition_point(|&c| c <= g);
        let local = g - if map_idx == 0 { 0 } else { cumulative[map_idx - 1] };
        let cols = anchor_cols[map_idx];
        let (ar, ac) = (local / cols, local % cols);
        crate::feature_map::copy_patch_into(&maps[map_idx], shape, start + ar, start + ac, out);
        preproc.apply(out, channels);
        normalize_slice(out, epsilon);
    };
    for i in 0..n {
        draw(&mut rng, x.row_mut(i).as_slice_mut().expect("row contiguous"));
        draw(&mut rng, y.row_mut(i).as_slice_mut().expect("row contiguous"));
    }
    PatchPairs::from_rows(x, y)
}

/// The `q`-quantile (linear interpolation between order statistics) of the
/// pair distances. A zero quantile (many identical pairs) falls back to the
/// smallest nonzero distance.
pub fn sigma_quantile(pairs: &PatchPairs, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(CknError::invalid("quantile must be in [0, 1]"));
    }
    let mut d: Vec<f64> = pairs.distances().to_vec();
    if d.is_empty() {
        return Err(CknError::DegenerateData("no pairs".into()));
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = d.len();
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let value = if lo + 1 < n {
        d[lo] + (h - lo as f64) * (d[lo + 1] - d[lo])
    } else {
        d[n - 1]
    };
    if value > 0.0 {
        return Ok(value);
    }
    match d.iter().find(|&&v| v > 0.0) {
        Some(&v) => Ok(v),
        None => Err(CknError::DegenerateData(
            "all pair distances are zero".into(),
        )),
    }
}

/// How the filters are initialized before optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMethod {
    /// K-means centroids of the pooled patch set (the default).
    KMeans { iters: usize },
    /// Gaussian random noise with entry scale `1/sqrt(m)`, skipping k-means.
    GaussianNoise,
}

impl Default for InitMethod {
    fn default() -> Self {
        InitMethod::KMeans { iters: 10 }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub w: Array2<f64>,
    pub eta: Array1<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub line_search_failed: bool,
    /// Accepted objective values, starting value included.
    pub trace: Vec<f64>,
}

/// Minimizes a `(W, eta)` objective with `eta >= 0` elementwise and `W`
/// unconstrained, using the limited-memory quasi-Newton solver.
pub fn minimize_box_lbfgs<F>(
    mut objective: F,
    init_w: &Array2<f64>,
    init_eta: &Array1<f64>,
    max_iters: usize,
    memory: usize,
) -> Result<OptimizeOutcome>
where
    F: FnMut(&Array2<f64>, &Array1<f64>) -> Result<(f64, Array2<f64>, Array1<f64>)>,
{
    let (p, m) = init_w.dim();
    if init_eta.len() != p {
        return Err(CknError::invalid("init_eta length must match filter count"));
    }
    let pm = p * m;
    let mut x0 = Vec::with_capacity(pm + p);
    x0.extend(init_w.iter());
    x0.extend(init_eta.iter());
    let mut lower = vec![f64::NEG_INFINITY; pm + p];
    lower[pm..].fill(0.0);
    let upper = vec![f64::INFINITY; pm + p];

    let opts = lbfgsb::Options {
        max_iters,
        memory,
        ..lbfgsb::Options::default()
    };
    let f = |v: &[f64]| -> (f64, Vec<f64>) {
        let w = Array2::from_shape_vec((p, m), v[..pm].to_vec()).expect("shape");
        let eta = Array1::from_vec(v[pm..].to_vec());
        match objective(&w, &eta) {
            Ok((value, gw, ge)) => {
                let mut g = Vec::with_capacity(pm + p);
                g.extend(gw.iter());
                g.extend(ge.iter());
                (value, g)
            }
            Err(_) => (f64::INFINITY, vec![0.0; pm + p]),
        }
    };
    let sol = lbfgsb::minimize(f, &x0, &lower, &upper, &opts)?;
    let w = Array2::from_shape_vec((p, m), sol.x[..pm].to_vec()).expect("shape");
    let eta = Array1::from_vec(sol.x[pm..].to_vec());
    Ok(OptimizeOutcome {
        w,
        eta,
        value: sol.value,
        iterations: sol.iterations,
        converged: sol.converged,
        line_search_failed: sol.line_search_failed,
        trace: sol.trace,
    })
}

/// Everything `train_layer` needs besides the maps and the patch shape.
#[derive(Debug, Clone)]
pub struct TrainLayerConfig {
    pub filters: usize,
    pub n_pairs: usize,
    pub sigma_override: Option<f64>,
    pub max_iters: usize,
    pub epsilon: f64,
    pub preproc: PatchPreproc,
    pub init: InitMethod,
    /// Subsampling factor stamped into the returned parameters.
    pub gamma: usize,
    pub rng_seed: u64,
}

impl Default for TrainLayerConfig {
    fn default() -> Self {
        TrainLayerConfig {
            filters: 50,
            n_pairs: 300_000,
            sigma_override: None,
            max_iters: 4000,
            epsilon: 1e-4,
            preproc: PatchPreproc::None,
            init: InitMethod::default(),
            gamma: 2,
            rng_seed: 0,
        }
    }
}

/// Diagnostics recorded while training a layer.
#[derive(Debug, Clone)]
pub struct LayerTrainReport {
    pub sigma: f64,
    pub objective_init: f64,
    pub objective_final: f64,
    pub iterations: usize,
    pub converged: bool,
    pub line_search_failed: bool,
}

/// Learns `(W, eta, sigma)` from already-sampled normalized pairs: sigma by
/// the 0.1 quantile rule (unless overridden), targets, initialization, then
/// optimization. `init_seed` drives the initializer only.
pub fn train_on_pairs(
    pairs: PatchPairs,
    shape: PatchShape,
    cfg: &TrainLayerConfig,
    init_seed: u64,
) -> Result<(LayerParams, LayerTrainReport)> {
    let sigma = match cfg.sigma_override {
        Some(s) if s > 0.0 => s,
        Some(s) => {
            return Err(CknError::invalid(format!(
                "sigma override must be positive, got {s}"
            )))
        }
        None => sigma_quantile(&pairs, 0.1)?,
    };
    let m = pairs.dim();
    let init_w = match cfg.init {
        InitMethod::KMeans { iters } => kmeans::kmeans_init(&pairs, cfg.filters, iters, init_seed)?,
        InitMethod::GaussianNoise => {
            let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
            let scale = 1.0 / (m as f64).sqrt();
            Array2::from_shape_fn((cfg.filters, m), |_| {
                rng.sample::<f64, _>(rand_distr::StandardNormal) * scale
            })
        }
    };
    // uniform weights summing to 1: keeps the initial predictions on the
    // scale of the (0, 1] targets regardless of the filter count
    let init_eta = Array1::from_elem(cfg.filters, 1.0 / cfg.filters as f64);
    let tpairs = pairs.with_targets(sigma)?;

    let outcome = minimize_box_lbfgs(
        |w, eta| objective_and_gradient(w, eta, &tpairs, sigma),
        &init_w,
        &init_eta,
        cfg.max_iters,
        10,
    )?;
    log::debug!(
        "layer training: sigma={sigma:.5}, objective {:.6e} -> {:.6e} in {} iterations",
        outcome.trace[0],
        outcome.value,
        outcome.iterations
    );
    let params = LayerParams::new(outcome.w, outcome.eta, sigma, shape, cfg.gamma)?;
    let report = LayerTrainReport {
        sigma,
        objective_init: outcome.trace[0],
        objective_final: outcome.value,
        iterations: outcome.iterations,
        converged: outcome.converged,
        line_search_failed: outcome.line_search_failed,
    };
    Ok((params, report))
}

/// Learns one layer's `(W, eta, sigma)` from the given maps: sample pairs,
/// then [`train_on_pairs`].
pub fn train_layer(
    maps: &[FeatureMap],
    shape: PatchShape,
    cfg: &TrainLayerConfig,
) -> Result<(LayerParams, LayerTrainReport)> {
    let mut master = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let pair_seed: u64 = master.gen();
    let init_seed: u64 = master.gen();
    let pairs = sample_pairs(maps, shape, cfg.n_pairs, cfg.epsilon, cfg.preproc, pair_seed)?;
    train_on_pairs(pairs, shape, cfg, init_seed)
}
