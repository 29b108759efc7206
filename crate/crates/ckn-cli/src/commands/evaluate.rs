//! `ckn evaluate`: post-process features, select the SVM regularization
//! (5-fold cross-validation below 20000 training examples, otherwise a
//! 10000-example held-out validation set), train on the full training
//! features, and report the test error.

use std::path::Path;

use anyhow::{bail, Context, Result};
use ckn_core::classifier::{
    apply_postprocess, cross_validate_c, c_grid, fit_postprocess, svm_train, CvReport, CvRow,
    LabeledFeatureSet, SvmOptions,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::feature_io::{labels_path, read_features, read_labels};

pub struct EvaluateArgs<'a> {
    pub train_features: &'a Path,
    pub test_features: &'a Path,
    pub train_size: Option<usize>,
    pub folds: usize,
    pub seed: u64,
    pub cv_epochs: usize,
    pub cv_tol: f64,
    pub final_epochs: usize,
    pub final_tol: f64,
    pub out_dir: Option<&'a Path>,
}

/// Stratified subsample without replacement: `per-class share of k`,
/// deterministic given the seed.
fn stratified_subsample(labels: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > labels.len() {
        bail!("requested train size {k} exceeds {} examples", labels.len());
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        per_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for indices in per_class.iter_mut() {
        indices.shuffle(&mut rng);
    }
    // round-robin across classes until k samples are taken
    let mut taken = Vec::with_capacity(k);
    let mut cursor = vec![0usize; classes];
    'outer: loop {
        let mut progressed = false;
        for c in 0..classes {
            if cursor[c] < per_class[c].len() {
                taken.push(per_class[c][cursor[c]]);
                cursor[c] += 1;
                progressed = true;
                if taken.len() == k {
                    break 'outer;
                }
            }
        }
        if !progressed {
            break;
        }
    }
    taken.sort_unstable();
    Ok(taken)
}

/// Held-out validation over the C grid: one stratified validation split.
fn heldout_validation(
    data: &LabeledFeatureSet,
    holdout: usize,
    opts: &SvmOptions,
) -> Result<CvReport> {
    let val_idx = stratified_subsample(&data.labels, holdout, opts.seed ^ 0x686f_6c64)?;
    let val_set: std::collections::HashSet<usize> = val_idx.iter().copied().collect();
    let train_idx: Vec<usize> = (0..data.len()).filter(|i| !val_set.contains(i)).collect();
    let train = data.subset(&train_idx);
    let val = data.subset(&val_idx);
    let rows: Vec<CvRow> = c_grid()
        .into_iter()
        .map(|c| {
            let acc = svm_train(&train, c, opts)?.accuracy(&val);
            Ok(CvRow {
                c,
                fold_accuracies: vec![acc],
                mean_accuracy: acc,
            })
        })
        .collect::<ckn_core::Result<_>>()?;
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

pub fn run(args: &EvaluateArgs) -> Result<()> {
    let train_feats = read_features(args.train_features)?;
    let train_labels = read_labels(&labels_path(args.train_features))?;
    let test_feats = read_features(args.test_features)?;
    let test_labels = read_labels(&labels_path(args.test_features))?;
    if train_feats.nrows() != train_labels.len() {
        bail!(
            "{} training features but {} labels",
            train_feats.nrows(),
            train_labels.len()
        );
    }

    // optional training-size subsampling (stratified)
    let (train_feats, train_labels) = match args.train_size {
        Some(k) => {
            let idx = stratified_subsample(&train_labels, k, args.seed)?;
            let set = LabeledFeatureSet::new(train_feats, train_labels)?;
            let sub = set.subset(&idx);
            (sub.features, sub.labels)
        }
        None => (train_feats, train_labels),
    };
    let n_train = train_labels.len();

    // post-processing fitted on the training features only
    let stats = fit_postprocess(&train_feats)?;
    let train_processed = apply_postprocess(&train_feats, &stats)?;
    let test_processed = apply_postprocess(&test_feats, &stats)?;
    let train_set = LabeledFeatureSet::new(train_processed, train_labels)?;
    let test_set = LabeledFeatureSet::new(test_processed, test_labels)?;

    let cv_opts = SvmOptions {
        max_epochs: args.cv_epochs,
        tol: args.cv_tol,
        seed: args.seed,
    };
    let (protocol, report) = if n_train >= 20_000 {
        (
            "heldout-10000".to_string(),
            heldout_validation(&train_set, 10_000, &cv_opts)?,
        )
    } else {
        (
            format!("{}-fold-cv", args.folds),
            cross_validate_c(&train_set, args.folds, &cv_opts)?,
        )
    };

    let final_opts = SvmOptions {
        max_epochs: args.final_epochs,
        tol: args.final_tol,
        seed: args.seed,
    };
    let model = svm_train(&train_set, report.best_c, &final_opts)?;
    let test_acc = model.accuracy(&test_set);
    let test_err = 100.0 * (1.0 - test_acc);

    let mut summary = String::new();
    summary.push_str(&format!("train_size = {n_train}\n"));
    summary.push_str(&format!("test_size = {}\n", test_set.len()));
    summary.push_str(&format!("protocol = {protocol}\n"));
    summary.push_str(&format!("chosen_c = 2^{}\n", report.best_c.log2() as i32));
    summary.push_str(&format!("test_accuracy = {test_acc:.4}\n"));
    summary.push_str(&format!("test_error_percent = {test_err:.2}\n"));
    print!("{summary}");

    if let Some(dir) = args.out_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut full = summary.clone();
        full.push('\n');
        full.push_str(&report.table());
        std::fs::write(dir.join("report.txt"), full)?;
        std::fs::write(dir.join("results.csv"), report.csv())?;
        println!("report written to {}", dir.display());
    }
    Ok(())
}
