//! Shared fixtures for the benchmarks.

use ckn_core::feature_map::FeatureMap;
use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn unit_rows(n: usize, m: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Array2::zeros((n, m));
    for mut row in a.axis_iter_mut(Axis(0)) {
        let mut s = 0.0f64;
        for v in row.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
            s += *v * *v;
        }
        let s = s.sqrt().max(1e-12);
        row.mapv_inplace(|v| v / s);
    }
    a
}

pub fn random_images(count: usize, side: usize, seed: u64) -> Vec<FeatureMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let data: Vec<f64> = (0..side * side).map(|_| rng.gen_range(0.0..1.0)).collect();
            FeatureMap::from_vec(side, side, 1, data).unwrap()
        })
        .collect()
}
