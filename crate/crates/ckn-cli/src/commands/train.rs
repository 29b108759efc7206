//! `ckn train`: train a network per the run configuration, write the model
//! file and a reproducibility manifest.

use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use ckn_core::data::Split;
use ckn_core::network::{save_model, train_network};

use crate::config::RunConfig;
use crate::dataset;
use crate::manifest::{fnv1a64, Manifest};

pub fn run(
    config_path: &Path,
    data_dir: Option<&Path>,
    seed_override: Option<u64>,
    out_dir: &Path,
) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let seed = seed_override.unwrap_or(config.seed);
    let canonical = config.render();

    let loaded = dataset::load(&config.dataset, Split::Train, data_dir)?;
    let mut images = loaded.dataset.images;
    if let Some(limit) = config.limit {
        images.truncate(limit);
    }
    log::info!(
        "training on {} images from {} (seed {seed})",
        images.len(),
        loaded.dataset.name
    );

    let t0 = Instant::now();
    let (model, reports) = train_network(&images, &config.network_config(), seed)?;
    let wall = t0.elapsed().as_secs_f64();

    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let model_path = out_dir.join("model.ckn");
    let model_bytes = save_model(&model)?;
    std::fs::write(&model_path, &model_bytes)?;

    let mut manifest = Manifest::new();
    manifest.push("command", "train");
    manifest.push("config_hash", format!("{:016x}", fnv1a64(canonical.as_bytes())));
    manifest.push("seed", seed);
    manifest.push("dataset", &loaded.dataset.name);
    for (desc, hash) in &loaded.sources {
        manifest.push("dataset_source", format!("{desc} fnv64={hash:016x}"));
    }
    manifest.push("images_used", images.len());
    manifest.push("parameter_count", model.parameter_count());
    let mut trained = 0;
    for (k, layer) in model.layers.iter().enumerate() {
        let learned = !(k == 0
            && matches!(model.input_kind, ckn_core::network::InputMapKind::GradientMap));
        if learned {
            let r = &reports[trained];
            trained += 1;
            manifest.push(
                &format!("layer{}", k + 1),
                format!(
                    "sigma={:.6} objective_init={:.6e} objective_final={:.6e} iterations={} gamma={}",
                    r.sigma,
                    r.objective_init,
                    r.objective_final,
                    r.iterations,
                    layer.gamma()
                ),
            );
        } else {
            manifest.push(
                &format!("layer{}", k + 1),
                format!(
                    "analytic orientation layer, p={} sigma={:.6} gamma={}",
                    layer.num_filters(),
                    layer.sigma(),
                    layer.gamma()
                ),
            );
        }
    }
    manifest.push("wall_time_s", format!("{wall:.1}"));
    manifest.push("model_file", model_path.display());
    manifest.push("model_hash", format!("{:016x}", fnv1a64(&model_bytes)));
    manifest.write(&out_dir.join("train-manifest.txt"))?;

    // the canonical config is part of the run record
    std::fs::write(out_dir.join("config.txt"), canonical)?;

    println!(
        "trained {} layers ({} parameters) in {wall:.1}s -> {}",
        model.layers.len(),
        model.parameter_count(),
        model_path.display()
    );
    Ok(())
}
