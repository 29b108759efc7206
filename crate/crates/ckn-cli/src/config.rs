//! Plain-text `key = value` run configuration: architecture, training budget
//! and dataset. Parsing and rendering round-trip exactly; unknown or invalid
//! keys are rejected with the offending field name.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ckn_core::network::{InputMapKind, LayerSpec, NetworkConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Mnist {
        dir: PathBuf,
        train_images: String,
        train_labels: String,
        test_images: String,
        test_labels: String,
    },
    Cifar10 {
        dir: PathBuf,
        train_batches: Vec<String>,
        test_batches: Vec<String>,
    },
    Synthetic {
        classes: usize,
        count: usize,
        size: usize,
        channels: usize,
        noise: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: InputMapKind,
    pub layers: Vec<LayerSpec>,
    pub final_size: usize,
    pub epsilon: f64,
    pub pairs: usize,
    pub iterations: usize,
    pub kmeans_iters: usize,
    pub seed: u64,
    pub dataset: DatasetSpec,
    /// Cap on the number of training images used for unsupervised training.
    pub limit: Option<usize>,
}

impl RunConfig {
    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            input: self.input,
            layers: self.layers.clone(),
            final_size: self.final_size,
            epsilon: self.epsilon,
            n_pairs: self.pairs,
            max_iters: self.iterations,
            kmeans_iters: self.kmeans_iters,
        }
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected 'key = value'", lineno + 1))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if map.insert(key.clone(), value).is_some() {
                bail!("duplicate key '{key}'");
            }
        }
        Self::from_map(map)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    fn from_map(mut map: BTreeMap<String, String>) -> Result<RunConfig> {
        fn take(map: &mut BTreeMap<String, String>, key: &str) -> Option<String> {
            map.remove(key)
        }
        fn req(map: &mut BTreeMap<String, String>, key: &str) -> Result<String> {
            take(map, key).ok_or_else(|| anyhow!("missing required key '{key}'"))
        }
        fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| anyhow!("invalid value '{v}' for '{key}'"))
        }
        fn req_num<T: std::str::FromStr>(map: &mut BTreeMap<String, String>, key: &str) -> Result<T> {
            let v = req(map, key)?;
            parse_num(key, &v)
        }
        fn opt_num<T: std::str::FromStr>(
            map: &mut BTreeMap<String, String>,
            key: &str,
            default: T,
        ) -> Result<T> {
            match take(map, key) {
                Some(v) => parse_num(key, &v),
                None => Ok(default),
            }
        }

        let input = match req(&mut map, "input")?.as_str() {
            "gradient" => InputMapKind::GradientMap,
            "patch" => {
                let side: usize = req_num(&mut map, "patch.side")?;
                if side == 0 {
                    bail!("'patch.side' must be >= 1");
                }
                let sub = match take(&mut map, "patch.subtract_mean").as_deref() {
                    None | Some("false") => false,
                    Some("true") => true,
                    Some(v) => bail!("invalid value '{v}' for 'patch.subtract_mean'"),
                };
                InputMapKind::PatchMap {
                    patch_side: side,
                    subtract_mean_color: sub,
                }
            }
            other => bail!("invalid value '{other}' for 'input' (use 'gradient' or 'patch')"),
        };

        let n_layers: usize = req_num(&mut map, "layers")?;
        if n_layers == 0 {
            bail!("'layers' must be >= 1");
        }
        let mut layers = Vec::with_capacity(n_layers);
        for k in 1..=n_layers {
            let side_key = format!("layer{k}.patch_side");
            let side: usize = req_num(&mut map, &side_key)?;
            if side == 0 {
                bail!("'{side_key}' must be >= 1");
            }
            let filt_key = format!("layer{k}.filters");
            let filters: usize = req_num(&mut map, &filt_key)?;
            if filters == 0 {
                bail!("'{filt_key}' must be >= 1");
            }
            let gamma_key = format!("layer{k}.gamma");
            let gamma = if k < n_layers {
                let g: usize = req_num(&mut map, &gamma_key)?;
                if g == 0 {
                    bail!("'{gamma_key}' must be >= 1");
                }
                Some(g)
            } else {
                if map.contains_key(&gamma_key) {
                    bail!("'{gamma_key}' not allowed: the last layer's factor derives from 'final_size'");
                }
                None
            };
            layers.push(LayerSpec {
                patch_side: side,
                filters,
                gamma,
            });
        }
        if matches!(input, InputMapKind::GradientMap) && layers[0].patch_side != 1 {
            bail!("'layer1.patch_side' must be 1 for gradient input");
        }

        let final_size: usize = req_num(&mut map, "final_size")?;
        if final_size == 0 {
            bail!("'final_size' must be >= 1");
        }
        let epsilon: f64 = opt_num(&mut map, "epsilon", 1e-4)?;
        if !(epsilon > 0.0) {
            bail!("'epsilon' must be positive");
        }
        let pairs: usize = req_num(&mut map, "train.pairs")?;
        let iterations: usize = req_num(&mut map, "train.iterations")?;
        let kmeans_iters: usize = opt_num(&mut map, "train.kmeans_iters", 10)?;
        let seed: u64 = opt_num(&mut map, "train.seed", 0)?;
        let limit = match take(&mut map, "dataset.limit") {
            Some(v) => Some(parse_num::<usize>("dataset.limit", &v)?),
            None => None,
        };

        let dataset = match req(&mut map, "dataset.kind")?.as_str() {
            "mnist" => DatasetSpec::Mnist {
                dir: PathBuf::from(take(&mut map, "dataset.dir").unwrap_or_default()),
                train_images: take(&mut map, "dataset.train_images")
                    .unwrap_or_else(|| "train-images-idx3-ubyte.gz".into()),
                train_labels: take(&mut map, "dataset.train_labels")
                    .unwrap_or_else(|| "train-labels-idx1-ubyte.gz".into()),
                test_images: take(&mut map, "dataset.test_images")
                    .unwrap_or_else(|| "t10k-images-idx3-ubyte.gz".into()),
                test_labels: take(&mut map, "dataset.test_labels")
                    .unwrap_or_else(|| "t10k-labels-idx1-ubyte.gz".into()),
            },
            "cifar10" => {
                let trains = take(&mut map, "dataset.train_batches").unwrap_or_else(|| {
                    "data_batch_1.bin,data_batch_2.bin,data_batch_3.bin,data_batch_4.bin,data_batch_5.bin"
                        .into()
                });
                let tests =
                    take(&mut map, "dataset.test_batches").unwrap_or_else(|| "test_batch.bin".into());
                DatasetSpec::Cifar10 {
                    dir: PathBuf::from(take(&mut map, "dataset.dir").unwrap_or_default()),
                    train_batches: trains.split(',').map(|s| s.trim().to_string()).collect(),
                    test_batches: tests.split(',').map(|s| s.trim().to_string()).collect(),
                }
            }
            "synthetic" => DatasetSpec::Synthetic {
                classes: opt_num(&mut map, "dataset.classes", 10)?,
                count: opt_num(&mut map, "dataset.count", 500)?,
                size: opt_num(&mut map, "dataset.size", 16)?,
                channels: opt_num(&mut map, "dataset.channels", 1)?,
                noise: opt_num(&mut map, "dataset.noise", 0.05)?,
                seed: opt_num(&mut map, "dataset.seed", 1)?,
            },
            other => bail!("invalid value '{other}' for 'dataset.kind'"),
        };

        if let Some(key) = map.keys().next() {
            bail!("unknown key '{key}'");
        }

        Ok(RunConfig {
            input,
            layers,
            final_size,
            epsilon,
            pairs,
            iterations,
            kmeans_iters,
            seed,
            dataset,
            limit,
        })
    }

    /// Canonical text form; `parse(render(c)) == c`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        match self.input {
            InputMapKind::GradientMap => {
                writeln!(out, "input = gradient").unwrap();
            }
            InputMapKind::PatchMap {
                patch_side,
                subtract_mean_color,
            } => {
                writeln!(out, "input = patch").unwrap();
                writeln!(out, "patch.side = {patch_side}").unwrap();
                writeln!(out, "patch.subtract_mean = {subtract_mean_color}").unwrap();
            }
        }
        writeln!(out, "layers = {}", self.layers.len()).unwrap();
        for (i, l) in self.layers.iter().enumerate() {
            let k = i + 1;
            writeln!(out, "layer{k}.patch_side = {}", l.patch_side).unwrap();
            writeln!(out, "layer{k}.filters = {}", l.filters).unwrap();
            if i + 1 < self.layers.len() {
                writeln!(out, "layer{k}.gamma = {}", l.gamma.unwrap_or(2)).unwrap();
            }
        }
        writeln!(out, "final_size = {}", self.final_size).unwrap();
        writeln!(out, "epsilon = {}", self.epsilon).unwrap();
        writeln!(out, "train.pairs = {}", self.pairs).unwrap();
        writeln!(out, "train.iterations = {}", self.iterations).unwrap();
        writeln!(out, "train.kmeans_iters = {}", self.kmeans_iters).unwrap();
        writeln!(out, "train.seed = {}", self.seed).unwrap();
        if let Some(limit) = self.limit {
            writeln!(out, "dataset.limit = {limit}").unwrap();
        }
        match &self.dataset {
            DatasetSpec::Mnist {
                dir,
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => {
                writeln!(out, "dataset.kind = mnist").unwrap();
                writeln!(out, "dataset.dir = {}", dir.display()).unwrap();
                writeln!(out, "dataset.train_images = {train_images}").unwrap();
                writeln!(out, "dataset.train_labels = {train_labels}").unwrap();
                writeln!(out, "dataset.test_images = {test_images}").unwrap();
                writeln!(out, "dataset.test_labels = {test_labels}").unwrap();
            }
            DatasetSpec::Cifar10 {
                dir,
                train_batches,
                test_batches,
            } => {
                writeln!(out, "dataset.kind = cifar10").unwrap();
                writeln!(out, "dataset.dir = {}", dir.display()).unwrap();
                writeln!(out, "dataset.train_batches = {}", train_batches.join(",")).unwrap();
                writeln!(out, "dataset.test_batches = {}", test_batches.join(",")).unwrap();
            }
            DatasetSpec::Synthetic {
                classes,
                count,
                size,
                channels,
                noise,
                seed,
            } => {
                writeln!(out, "dataset.kind = synthetic").unwrap();
                writeln!(out, "dataset.classes = {classes}").unwrap();
                writeln!(out, "dataset.count = {count}").unwrap();
                writeln!(out, "dataset.size = {size}").unwrap();
                writeln!(out, "dataset.channels = {channels}").unwrap();
                writeln!(out, "dataset.noise = {noise}").unwrap();
                writeln!(out, "dataset.seed = {seed}").unwrap();
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
# a two-layer gradient network
input = gradient
layers = 2
layer1.patch_side = 1
layer1.filters = 12
layer1.gamma = 2
layer2.patch_side = 3
layer2.filters = 50
final_size = 4
epsilon = 0.0001
train.pairs = 1000
train.iterations = 50
train.seed = 7
dataset.kind = synthetic
dataset.count = 40
dataset.size = 16
";

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.layers.len(), 2);
        assert_eq!(cfg.layers[0].filters, 12);
        assert_eq!(cfg.layers[1].gamma, None);
        assert_eq!(cfg.seed, 7);
        let rendered = cfg.render();
        let reparsed = RunConfig::parse(&rendered).unwrap();
        assert_eq!(reparsed, cfg);
        assert_eq!(reparsed.render(), rendered);
    }

    #[test]
    fn zero_patch_side_names_field() {
        let bad = SAMPLE.replace("layer2.patch_side = 3", "layer2.patch_side = 0");
        let err = RunConfig::parse(&bad).unwrap_err().to_string();
        assert!(err.contains("layer2.patch_side"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let bad = format!("{SAMPLE}\nbogus.key = 3\n");
        let err = RunConfig::parse(&bad).unwrap_err().to_string();
        assert!(err.contains("bogus.key"), "{err}");
    }

    #[test]
    fn last_layer_gamma_rejected() {
        let bad = format!("{SAMPLE}\nlayer2.gamma = 2\n");
        let err = RunConfig::parse(&bad).unwrap_err().to_string();
        assert!(err.contains("layer2.gamma"), "{err}");
    }

    #[test]
    fn gradient_needs_unit_first_patch() {
        let bad = SAMPLE.replace("layer1.patch_side = 1", "layer1.patch_side = 3");
        let err = RunConfig::parse(&bad).unwrap_err().to_string();
        assert!(err.contains("layer1.patch_side"), "{err}");
    }
}
