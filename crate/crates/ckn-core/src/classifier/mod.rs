//! Feature post-processing and linear-SVM evaluation: center, rescale to
//! unit average norm, train one-vs-rest classifiers, and pick the
//! regularization parameter by stratified cross-validation over the grid
//! `2^i, i = -15..=15`.

pub mod svm;

pub use svm::{svm_train, svm_train_with_trace, EpochTrace, SvmModel, SvmOptions};

use ndarray::{Array1, Array2, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{CknError, Result};

/// Training-set statistics for feature post-processing: the column mean and
/// the mean row norm after centering.
#[derive(Debug, Clone, PartialEq)]
pub struct PostStats {
    pub mean: Array1<f64>,
    pub scale: f64,
}

/// Fits post-processing statistics: column mean, then the mean row l2-norm
/// of the centered matrix (fallback 1 when all rows are zero after
/// centering).
pub fn fit_postprocess(features: &Array2<f64>) -> Result<PostStats> {
    let n = features.nrows();
    if n == 0 {
        return Err(CknError::invalid("cannot fit post-processing on an empty set"));
    }
    let mean = features.mean_axis(Axis(0)).expect("nonempty");
    let mut acc = 0.0;
    for row in features.axis_iter(Axis(0)) {
        let norm2: f64 = row
            .iter()
            .zip(mean.iter())
            .map(|(v, m)| (v - m) * (v - m))
            .sum();
        acc += norm2.sqrt();
    }
    let scale = acc / n as f64;
    let scale = if scale > 0.0 { scale } else { 1.0 };
    Ok(PostStats { mean, scale })
}

/// Applies training-set statistics: subtract the mean, divide by the scale.
pub fn apply_postprocess(features: &Array2<f64>, stats: &PostStats) -> Result<Array2<f64>> {
    if features.ncols() != stats.mean.len() {
        return Err(CknError::invalid(format!(
            "feature dimension {} does not match fitted mean {}",
            features.ncols(),
            stats.mean.len()
        )));
    }
    let mut out = features.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        for (v, m) in row.iter_mut().zip(stats.mean.iter()) {
            *v = (*v - m) / stats.scale;
        }
    }
    Ok(out)
}

/// Encoded vectors with integer class labels.
#[derive(Debug, Clone)]
pub struct LabeledFeatureSet {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub post_stats: Option<PostStats>,
}

impl LabeledFeatureSet {
    pub fn new(features: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(CknError::invalid(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        Ok(LabeledFeatureSet {
            features,
            labels,
            post_stats: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// One past the largest label.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m + 1)
    }

    /// Row subset in the given order.
    pub fn subset(&self, indices: &[usize]) -> LabeledFeatureSet {
        let d = self.features.ncols();
        let mut feats = Array2::zeros((indices.len(), d));
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            feats.row_mut(row).assign(&self.features.row(i));
            labels.push(self.labels[i]);
        }
        LabeledFeatureSet {
            features: feats,
            labels,
            post_stats: self.post_stats.clone(),
        }
    }
}

/// The regularization grid `2^i, i = -15..=15`.
pub fn c_grid() -> Vec<f64> {
    (-15..=15).map(|i| 2f64.powi(i)).collect()
}

/// Stratified fold assignment: per class, shuffle that class's indices and
/// deal them round-robin. Errors if any class has fewer members than folds.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(CknError::invalid("need at least 2 folds"));
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        per_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); folds];
    for (class, mut indices) in per_class.into_iter().enumerate() {
        if indices.is_empty() {
            continue;
        }
        if indices.len() < folds {
            return Err(CknError::Stratification(format!(
                "class {class} has {} examples, fewer than {folds} folds",
                indices.len()
            )));
        }
        indices.shuffle(&mut rng);
        for (j, idx) in indices.into_iter().enumerate() {
            assignment[j % folds].push(idx);
        }
    }
    Ok(assignment)
}

#[derive(Debug, Clone)]
pub struct CvRow {
    pub c: f64,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct CvReport {
    pub best_c: f64,
    pub rows: Vec<CvRow>,
}

impl CvReport {
    /// Plain-text table, one row per C value.
    pub fn table(&self) -> String {
        let mut out = String::from("log2(C)  mean_acc  folds\n");
        for row in &self.rows {
            let folds: Vec<String> = row
                .fold_accuracies
                .iter()
                .map(|a| format!("{:.4}", a))
                .collect();
            out.push_str(&format!(
                "{:>7}  {:.4}    {}\n",
                row.c.log2() as i32,
                row.mean_accuracy,
                folds.join(" ")
            ));
        }
        out.push_str(&format!("best C = 2^{}\n", self.best_c.log2() as i32));
        out
    }

    /// CSV rows `c,fold1,...,foldK,mean`.
    pub fn csv(&self) -> String {
        let mut out = String::from("c,folds...,mean\n");
        for row in &self.rows {
            let folds: Vec<String> = row.fold_accuracies.iter().map(|a| a.to_string()).collect();
            out.push_str(&format!("{},{},{}\n", row.c, folds.join(","), row.mean_accuracy));
        }
        out
    }
}

/// Evaluates every C on stratified folds and returns the grid results plus
/// the best C (ties broken toward smaller C, i.e. stronger regularization).
pub fn cross_validate_c(
    data: &LabeledFeatureSet,
    folds: usize,
    opts: &SvmOptions,
) -> Result<CvReport> {
    let assignment = stratified_folds(&data.labels, folds, opts.seed)?;
    let splits: Vec<(LabeledFeatureSet, LabeledFeatureSet)> = (0..folds)
        .map(|f| {
            let val_idx = &assignment[f];
            let train_idx: Vec<usize> = (0..folds)
                .filter(|&j| j != f)
                .flat_map(|j| assignment[j].iter().copied())
                .collect();
            (data.subset(&train_idx), data.subset(val_idx))
        })
        .collect();

    let grid = c_grid();
    let rows: Vec<CvRow> = grid
        .par_iter()
        .map(|&c| {
            let fold_accuracies: Vec<f64> = splits
                .iter()
                .map(|(train, val)| {
                    svm_train(train, c, opts).map(|model| model.accuracy(val))
                })
                .collect::<Result<_>>()?;
            let mean_accuracy =
                fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
            Ok(CvRow {
                c,
                fold_accuracies,
                mean_accuracy,
            })
        })
        .collect::<Result<_>>()?;

    let mut best = 0;
    for (i, row) in rows.iter().enumerate() {
        if row.mean_accuracy > rows[best].mean_accuracy {
            best = i;
        }
    }
    Ok(CvReport {
        best_c: rows[best].c,
        rows,
    })
}
