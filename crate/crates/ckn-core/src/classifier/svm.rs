//! One-vs-rest linear SVM trained by dual coordinate descent on the
//! L2-regularized squared-hinge loss (no bias term; features are centered
//! upstream).
//!
//! Per class `k` the solver works on the dual of
//! `min_w 0.5 ||w||^2 + C sum_i max(0, 1 - y_i w^T x_i)^2`
//! sweeping coordinates in a per-epoch random permutation shared across
//! classes, and stops when the projected-gradient spread over a sweep drops
//! below `tol`.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{CknError, Result};

use super::LabeledFeatureSet;

#[derive(Debug, Clone)]
pub struct SvmOptions {
    pub max_epochs: usize,
    /// Stop when `max(PG) - min(PG)` over a sweep falls below this.
    pub tol: f64,
    /// Seed of the per-epoch coordinate permutations.
    pub seed: u64,
}

impl Default for SvmOptions {
    fn default() -> Self {
        SvmOptions {
            max_epochs: 200,
            tol: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SvmModel {
    /// One weight row per class.
    pub weights: Array2<f64>,
    /// Always zero with this solver; kept for the model contract.
    pub bias: Array1<f64>,
    pub c: f64,
}

impl SvmModel {
    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn decision(&self, x: &[f64]) -> Vec<f64> {
        (0..self.num_classes())
            .map(|k| {
                self.weights
                    .row(k)
                    .iter()
                    .zip(x)
                    .map(|(w, v)| w * v)
                    .sum::<f64>()
                    + self.bias[k]
            })
            .collect()
    }

    /// Argmax class score; ties go to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let scores = self.decision(x);
        let mut best = 0;
        for k in 1..scores.len() {
            if scores[k] > scores[best] {
                best = k;
            }
        }
        best
    }

    pub fn accuracy(&self, data: &LabeledFeatureSet) -> f64 {
        let n = data.len();
        if n == 0 {
            return 0.0;
        }
        let mut correct = 0;
        for i in 0..n {
            if self.predict(data.features.row(i).as_slice().expect("contiguous")) == data.labels[i]
            {
                correct += 1;
            }
        }
        correct as f64 / n as f64
    }
}

/// Primal objective of one binary subproblem.
fn primal_objective(w: &[f64], x: &Array2<f64>, y: &[f64], c: f64) -> f64 {
    let mut obj = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    for i in 0..x.nrows() {
        let xi = x.row(i);
        let margin = 1.0 - y[i] * xi.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        if margin > 0.0 {
            obj += c * margin * margin;
        }
    }
    obj
}

fn epoch_permutation(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    perm
}

/// Per-epoch objective values of one binary subproblem. The dual is the
/// quantity coordinate descent provably decreases; the primal at
/// intermediate iterates may fluctuate.
#[derive(Debug, Clone, Default)]
pub struct EpochTrace {
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
}

struct BinaryOutcome {
    w: Vec<f64>,
    trace: EpochTrace,
}

fn train_binary(
    x: &Array2<f64>,
    y: &[f64],
    sq_norms: &[f64],
    c: f64,
    opts: &SvmOptions,
    track: bool,
) -> BinaryOutcome {
    let (n, d) = x.dim();
    let diag = 1.0 / (2.0 * c);
    let mut w = vec![0.0; d];
    let mut alpha = vec![0.0; n];
    let mut trace = EpochTrace::default();
    for epoch in 0..opts.max_epochs {
        let perm = epoch_permutation(n, opts.seed, epoch);
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        for &i in &perm {
            let xi = x.row(i);
            let xi = xi.as_slice().expect("contiguous");
            let wx: f64 = w.iter().zip(xi).map(|(a, b)| a * b).sum();
            let g = y[i] * wx - 1.0 + alpha[i] * diag;
            let pg = if alpha[i] == 0.0 { g.min(0.0) } else { g };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let q = sq_norms[i] + diag;
                let new_alpha = (alpha[i] - g / q).max(0.0);
                let delta = (new_alpha - alpha[i]) * y[i];
                if delta != 0.0 {
                    for (wj, xj) in w.iter_mut().zip(xi) {
                        *wj += delta * xj;
                    }
                }
                alpha[i] = new_alpha;
            }
        }
        if track {
            trace.primal.push(primal_objective(&w, x, y, c));
            let dual = 0.5
                * (w.iter().map(|v| v * v).sum::<f64>()
                    + diag * alpha.iter().map(|a| a * a).sum::<f64>())
                - alpha.iter().sum::<f64>();
            trace.dual.push(dual);
        }
        if pg_max - pg_min <= opts.tol {
            break;
        }
    }
    BinaryOutcome { w, trace }
}

fn train_impl(
    data: &LabeledFeatureSet,
    c: f64,
    opts: &SvmOptions,
    track: bool,
) -> Result<(SvmModel, Vec<EpochTrace>)> {
    if !(c > 0.0) {
        return Err(CknError::invalid("C must be positive"));
    }
    let classes = data.num_classes();
    if classes < 2 {
        return Err(CknError::invalid(
            "need at least 2 classes present to train a classifier",
        ));
    }
    let (n, d) = data.features.dim();
    let sq_norms: Vec<f64> = (0..n)
        .map(|i| data.features.row(i).iter().map(|v| v * v).sum())
        .collect();
    let mut weights = Array2::zeros((classes, d));
    let mut traces = Vec::new();
    for k in 0..classes {
        let y: Vec<f64> = data
            .labels
            .iter()
            .map(|&l| if l == k { 1.0 } else { -1.0 })
            .collect();
        let outcome = train_binary(&data.features, &y, &sq_norms, c, opts, track);
        weights
            .row_mut(k)
            .assign(&Array1::from_vec(outcome.w));
        traces.push(outcome.trace);
    }
    Ok((
        SvmModel {
            weights,
            bias: Array1::zeros(classes),
            c,
        },
        traces,
    ))
}

/// Trains a one-vs-rest model. Deterministic given the permutation seed in
/// `opts`.
pub fn svm_train(data: &LabeledFeatureSet, c: f64, opts: &SvmOptions) -> Result<SvmModel> {
    train_impl(data, c, opts, false).map(|(m, _)| m)
}

/// Like [`svm_train`] but also returns per-class primal and dual objective
/// values after each epoch.
pub fn svm_train_with_trace(
    data: &LabeledFeatureSet,
    c: f64,
    opts: &SvmOptions,
) -> Result<(SvmModel, Vec<EpochTrace>)> {
    train_impl(data, c, opts, true)
}
