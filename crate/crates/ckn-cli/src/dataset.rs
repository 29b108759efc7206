//! Dataset loading per the run configuration, with source fingerprints for
//! the manifest. The data root resolves in order: `--data-dir` flag,
//! `CKN_DATA_DIR` environment variable, the config's `dataset.dir`.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ckn_core::data::{read_cifar10_bin, read_mnist_idx, synthetic, Dataset, Split};

use crate::config::DatasetSpec;
use crate::manifest::file_hash;

pub struct LoadedDataset {
    pub dataset: Dataset,
    /// (source description, fnv64 fingerprint) per input.
    pub sources: Vec<(String, u64)>,
}

fn resolve_dir(config_dir: &Path, flag: Option<&Path>) -> PathBuf {
    if let Some(d) = flag {
        return d.to_path_buf();
    }
    if let Ok(env) = std::env::var("CKN_DATA_DIR") {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    config_dir.to_path_buf()
}

pub fn load(spec: &DatasetSpec, split: Split, data_dir: Option<&Path>) -> Result<LoadedDataset> {
    match spec {
        DatasetSpec::Mnist {
            dir,
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => {
            let root = resolve_dir(dir, data_dir);
            let (images, labels) = match split {
                Split::Train => (train_images, train_labels),
                Split::Test => (test_images, test_labels),
            };
            let img_path = root.join(images);
            let lbl_path = root.join(labels);
            let dataset = read_mnist_idx(&img_path, &lbl_path, split)
                .with_context(|| format!("loading MNIST from {}", root.display()))?;
            let sources = vec![
                (img_path.display().to_string(), file_hash(&img_path)?),
                (lbl_path.display().to_string(), file_hash(&lbl_path)?),
            ];
            Ok(LoadedDataset { dataset, sources })
        }
        DatasetSpec::Cifar10 {
            dir,
            train_batches,
            test_batches,
        } => {
            let root = resolve_dir(dir, data_dir);
            let names = match split {
                Split::Train => train_batches,
                Split::Test => test_batches,
            };
            let paths: Vec<PathBuf> = names.iter().map(|n| root.join(n)).collect();
            let dataset = read_cifar10_bin(&paths, split)
                .with_context(|| format!("loading CIFAR-10 from {}", root.display()))?;
            let mut sources = Vec::new();
            for p in &paths {
                sources.push((p.display().to_string(), file_hash(p)?));
            }
            Ok(LoadedDataset { dataset, sources })
        }
        DatasetSpec::Synthetic {
            classes,
            count,
            size,
            channels,
            noise,
            seed,
        } => {
            let effective_seed = match split {
                Split::Train => *seed,
                Split::Test => seed ^ 0x7465_7374, // disjoint stream for "test"
            };
            let dataset =
                synthetic::synthetic_labeled(*classes, *count, *size, *channels, *noise, effective_seed)?;
            let desc = format!(
                "synthetic(classes={classes},count={count},size={size},channels={channels},noise={noise},seed={effective_seed})"
            );
            let fingerprint = crate::manifest::fnv1a64(desc.as_bytes());
            Ok(LoadedDataset {
                dataset: Dataset { split, ..dataset },
                sources: vec![(desc, fingerprint)],
            })
        }
    }
}
