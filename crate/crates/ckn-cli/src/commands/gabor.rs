//! `ckn gabor`: learn filters on whitened image patches from Gaussian random
//! init (no k-means) and export the sheet of the top filters by weight.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use ckn_core::data::synthetic::textured_images;
use ckn_core::data::{export_filters, read_pgm, sample_whitened_patches};
use ckn_core::feature_map::{normalize_slice, FeatureMap, PatchShape};
use ckn_core::training::{train_on_pairs, InitMethod, PatchPairs, TrainLayerConfig};
use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::manifest::{file_hash, fnv1a64, Manifest};

pub struct GaborArgs<'a> {
    pub images_dir: Option<&'a Path>,
    pub synthetic: Option<usize>,
    pub patch_side: usize,
    pub bank: usize,
    pub pairs: usize,
    pub filters: usize,
    pub iterations: usize,
    pub top: usize,
    pub seed: u64,
    pub out_dir: &'a Path,
}

fn load_images(args: &GaborArgs) -> Result<(Vec<FeatureMap>, Vec<(String, u64)>)> {
    if let Some(dir) = args.images_dir {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
            .collect();
        paths.sort();
        if paths.is_empty() {
            bail!("no .pgm images in {}", dir.display());
        }
        let mut images = Vec::new();
        let mut sources = Vec::new();
        for p in &paths {
            images.push(read_pgm(p).with_context(|| format!("reading {}", p.display()))?);
            sources.push((p.display().to_string(), file_hash(p)?));
        }
        Ok((images, sources))
    } else if let Some(count) = args.synthetic {
        let images = textured_images(count, 256, args.seed ^ 0x7465_7874);
        let desc = format!("textured_images(count={count},side=256)");
        let h = fnv1a64(desc.as_bytes());
        Ok((images, vec![(desc, h)]))
    } else {
        bail!("provide --images DIR or --synthetic COUNT");
    }
}

pub fn run(args: &GaborArgs) -> Result<()> {
    if args.top > args.filters {
        bail!("--top {} exceeds --filters {}", args.top, args.filters);
    }
    let (images, sources) = load_images(args)?;
    let mut master = ChaCha8Rng::seed_from_u64(args.seed);
    let bank_seed: u64 = master.gen();
    let pair_seed: u64 = master.gen();
    let init_seed: u64 = master.gen();

    let t0 = Instant::now();
    log::info!("whitening {} patches of side {}", args.bank, args.patch_side);
    let bank = sample_whitened_patches(&images, args.patch_side, args.bank, bank_seed)?;

    // pairs of normalized whitened patches drawn from the bank
    let mut rng = ChaCha8Rng::seed_from_u64(pair_seed);
    let d = bank.patches.ncols();
    let mut x = Array2::zeros((args.pairs, d));
    let mut y = Array2::zeros((args.pairs, d));
    for i in 0..args.pairs {
        for (mat, _) in [(&mut x, 0), (&mut y, 1)] {
            let idx = rng.gen_range(0..bank.patches.nrows());
            let mut row = bank.patches.row(idx).to_owned();
            normalize_slice(row.as_slice_mut().expect("contiguous"), 1e-4);
            mat.row_mut(i).assign(&row);
        }
    }
    let pairs = PatchPairs::from_rows(x, y)?;

    let cfg = TrainLayerConfig {
        filters: args.filters,
        n_pairs: args.pairs,
        max_iters: args.iterations,
        init: InitMethod::GaussianNoise,
        gamma: 1,
        ..TrainLayerConfig::default()
    };
    let shape = PatchShape::new(args.patch_side)?;
    let (params, report) = train_on_pairs(pairs, shape, &cfg, init_seed)?;
    let wall = t0.elapsed().as_secs_f64();
    let reduction = 100.0 * (1.0 - report.objective_final / report.objective_init);

    std::fs::create_dir_all(args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let sheet_path = args.out_dir.join("filters.pgm");
    export_filters(&params, 1, args.top, &sheet_path)?;

    let mut manifest = Manifest::new();
    manifest.push("command", "gabor");
    manifest.push("seed", args.seed);
    for (desc, hash) in &sources {
        manifest.push("image_source", format!("{desc} fnv64={hash:016x}"));
    }
    manifest.push("patch_side", args.patch_side);
    manifest.push("bank_patches", args.bank);
    manifest.push("pairs", args.pairs);
    manifest.push("filters", args.filters);
    manifest.push("iterations_budget", args.iterations);
    manifest.push("iterations_used", report.iterations);
    manifest.push("sigma", format!("{:.6}", report.sigma));
    manifest.push("objective_init", format!("{:.6e}", report.objective_init));
    manifest.push("objective_final", format!("{:.6e}", report.objective_final));
    manifest.push("objective_reduction_percent", format!("{reduction:.1}"));
    manifest.push("top_filters", args.top);
    manifest.push("filter_sheet", sheet_path.display());
    manifest.push(
        "filter_sheet_hash",
        format!("{:016x}", file_hash(&sheet_path)?),
    );
    manifest.push("wall_time_s", format!("{wall:.1}"));
    manifest.write(&args.out_dir.join("gabor-manifest.txt"))?;

    println!(
        "objective {:.4e} -> {:.4e} ({reduction:.1}% reduction) in {wall:.1}s; sheet at {}",
        report.objective_init,
        report.objective_final,
        sheet_path.display()
    );
    Ok(())
}
