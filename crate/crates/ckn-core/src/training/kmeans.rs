//! Lloyd's algorithm with k-means++ seeding, used to initialize the filters.

use ndarray::{Array1, Array2, ArrayView1, s};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{CknError, Result};
use super::PatchPairs;

const BLOCK: usize = 8192;

/// Both elements of every pair, pooled: point `i` is `x[i]` for `i < n` and
/// `y[i - n]` otherwise.
struct PointSet<'a> {
    pairs: &'a PatchPairs,
}

impl<'a> PointSet<'a> {
    fn len(&self) -> usize {
        2 * self.pairs.len()
    }

    fn row(&self, i: usize) -> ArrayView1<'a, f64> {
        let n = self.pairs.len();
        if i < n {
            self.pairs.x.row(i)
        } else {
            self.pairs.y.row(i - n)
        }
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

fn plus_plus_seeding(points: &PointSet, p: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.len();
    let m = points.row(0).len();
    let mut centers = Array2::zeros((p, m));
    let first = rng.gen_range(0..n);
    centers.row_mut(0).assign(&points.row(first));

    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), centers.row(0)))
        .collect();
    for k in 1..p {
        let total: f64 = d2.iter().sum();
        let chosen = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc >= target {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            // all remaining points coincide with chosen centers
            rng.gen_range(0..n)
        };
        centers.row_mut(k).assign(&points.row(chosen));
        for i in 0..n {
            let d = sq_dist(points.row(i), centers.row(k));
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centers
}

struct AssignPartial {
    sums: Array2<f64>,
    counts: Vec<usize>,
    /// farthest point in this block: (distance^2, global index)
    farthest: (f64, usize),
}

/// K-means over the pooled pair elements. Runs k-means++ seeding followed by
/// `iters` Lloyd iterations; empty clusters are re-seeded from the farthest
/// point. Deterministic given the seed. If the data has fewer distinct points
/// than `p`, duplicate centroids are perturbed by 1e-4 noise and a warning is
/// logged.
pub fn kmeans_init(pairs: &PatchPairs, p: usize, iters: usize, rng_seed: u64) -> Result<Array2<f64>> {
    if p == 0 {
        return Err(CknError::invalid("filter count must be >= 1"));
    }
    let points = PointSet { pairs };
    let n = points.len();
    if n == 0 {
        return Err(CknError::EmptyCorpus("no points to cluster".into()));
    }
    let m = points.row(0).len();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut centers = plus_plus_seeding(&points, p, &mut rng);

    for _ in 0..iters.max(1) {
        let csq: Vec<f64> = (0..p)
            .map(|k| centers.row(k).iter().map(|v| v * v).sum())
            .collect();
        let ct = centers.t();
        let n_blocks = n.div_ceil(BLOCK);
        let partials: Vec<AssignPartial> = (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let i0 = b * BLOCK;
                let i1 = (i0 + BLOCK).min(n);
                let np = pairs.len();
                // gather the block as one matrix for a single matmul
                let dots = if i1 <= np {
                    pairs.x.slice(s![i0..i1, ..]).dot(&ct)
                } else if i0 >= np {
                    pairs.y.slice(s![i0 - np..i1 - np, ..]).dot(&ct)
                } else {
                    let mut block = Array2::zeros((i1 - i0, m));
                    for (j, i) in (i0..i1).enumerate() {
                        block.row_mut(j).assign(&points.row(i));
                    }
                    block.dot(&ct)
                };
                let mut sums = Array2::zeros((p, m));
                let mut counts = vec![0usize; p];
                let mut farthest = (-1.0, i0);
                for (j, i) in (i0..i1).enumerate() {
                    let mut best = 0;
                    let mut best_score = csq[0] - 2.0 * dots[(j, 0)];
                    for k in 1..p {
                        let score = csq[k] - 2.0 * dots[(j, k)];
                        if score < best_score {
                            best_score = score;
                            best = k;
                        }
                    }
                    counts[best] += 1;
                    let row = points.row(i);
                    sums.row_mut(best).zip_mut_with(&row, |s, v| *s += v);
                    let pt_sq: f64 = row.iter().map(|v| v * v).sum();
                    let dist = pt_sq + best_score;
                    if dist > farthest.0 {
                        farthest = (dist, i);
                    }
                }
                AssignPartial {
                    sums,
                    counts,
                    farthest,
                }
            })
            .collect();

        let mut sums = Array2::zeros((p, m));
        let mut counts = vec![0usize; p];
        let mut far_candidates: Vec<(f64, usize)> = Vec::with_capacity(partials.len());
        for part in partials {
            sums += &part.sums;
            for k in 0..p {
                counts[k] += part.counts[k];
            }
            far_candidates.push(part.farthest);
        }
        far_candidates.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));

        let mut next_far = 0;
        for k in 0..p {
            if counts[k] > 0 {
                let c = counts[k] as f64;
                centers
                    .row_mut(k)
                    .assign(&sums.row(k).mapv(|v| v / c));
            } else if next_far < far_candidates.len() {
                let (_, idx) = far_candidates[next_far];
                next_far += 1;
                centers.row_mut(k).assign(&points.row(idx));
            } else {
                let idx = rng.gen_range(0..n);
                centers.row_mut(k).assign(&points.row(idx));
            }
        }
    }

    // perturb exact duplicates (fewer distinct points than p)
    let mut perturbed = 0;
    for k in 1..p {
        let duplicate = (0..k).any(|j| {
            centers
                .row(k)
                .iter()
                .zip(centers.row(j).iter())
                .all(|(a, b)| (a - b).abs() <= 1e-12)
        });
        if duplicate {
            let noise: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0) * 1e-4).collect();
            centers
                .row_mut(k)
                .zip_mut_with(&Array1::from_vec(noise).view(), |c, z| *c += z);
            perturbed += 1;
        }
    }
    if perturbed > 0 {
        log::warn!("k-means produced {perturbed} duplicate centroids (reduced-rank data); perturbed by 1e-4 noise");
    }
    Ok(centers)
}
