//! `ckn encode`: batch-encode a dataset split to a binary feature file plus a
//! labels sidecar.

use std::path::Path;

use anyhow::{bail, Context, Result};
use ckn_core::data::Split;
use ckn_core::network::{encode_batch, load_model_file};

use crate::config::RunConfig;
use crate::dataset;
use crate::feature_io::{labels_path, write_features, write_labels};

pub fn run(
    config_path: &Path,
    model_path: &Path,
    split: Split,
    range: Option<(usize, usize)>,
    data_dir: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let model = load_model_file(model_path)
        .with_context(|| format!("loading model {}", model_path.display()))?;
    let loaded = dataset::load(&config.dataset, split, data_dir)?;
    let ds = loaded.dataset;
    if ds.is_empty() {
        bail!("dataset split {split} is empty");
    }
    let (images, labels) = match range {
        Some((a, b)) => {
            if a >= b || b > ds.len() {
                bail!("range {a}..{b} out of bounds for {} images", ds.len());
            }
            (&ds.images[a..b], &ds.labels[a..b])
        }
        None => (&ds.images[..], &ds.labels[..]),
    };
    let codes = encode_batch(images, &model)?;
    let d = codes.first().map_or(0, |c| c.len());
    write_features(out, &codes)?;
    write_labels(&labels_path(out), labels)?;
    println!(
        "encoded {} images to {} ({d} dims per image)",
        codes.len(),
        out.display()
    );
    Ok(())
}
