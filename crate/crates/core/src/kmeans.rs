//! Lloyd's k-means with k-means++ seeding, over row-major point sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::squared_distance;

#[derive(Debug, Clone)]
pub struct KMeansResult {
    /// `k × d`, row-major.
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    pub k: usize,
}

impl KMeansResult {
    pub fn centroid(&self, c: usize, dim: usize) -> &[f64] {
        &self.centroids[c * dim..(c + 1) * dim]
    }
}

/// Picks `k` seed rows by D² sampling. When every remaining point
/// coincides with a chosen seed, the lowest unchosen index is taken.
pub fn plus_plus_seeds(points: &[f64], dim: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let n = points.len() / dim;
    assert!(k >= 1 && k <= n, "k must be in 1..=n");
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut seeds = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| squared_distance(row(i), row(seeds[0]))).collect();
    while seeds.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            if d2[pick] <= 0.0 {
                // rounding overshoot: last positive-weight point
                pick = d2.iter().rposition(|&w| w > 0.0).unwrap();
            }
            pick
        } else {
            (0..n).find(|i| !seeds.contains(i)).unwrap()
        };
        seeds.push(next);
        for (i, slot) in d2.iter_mut().enumerate() {
            *slot = slot.min(squared_distance(row(i), row(next)));
        }
    }
    seeds
}

/// Runs k-means on `points` (`n × dim`). `k` is clipped to `n`.
/// Ties in assignment go to the lower centroid index; empty clusters keep
/// their previous centroid.
pub fn kmeans(points: &[f64], dim: usize, k: usize, seed: u64, max_iter: usize) -> KMeansResult {
    let n = points.len() / dim;
    assert!(n > 0, "k-means on an empty point set");
    let k = k.min(n).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = plus_plus_seeds(points, dim, k, &mut rng);
    let mut centroids: Vec<f64> = seeds
        .iter()
        .flat_map(|&i| points[i * dim..(i + 1) * dim].iter().copied())
        .collect();
    let mut assignments = vec![usize::MAX; n];

    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        for i in 0..n {
            let p = &points[i * dim..(i + 1) * dim];
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let dist = squared_distance(p, &centroids[c * dim..(c + 1) * dim]);
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignments[i];
            counts[c] += 1;
            for (s, x) in sums[c * dim..(c + 1) * dim]
                .iter_mut()
                .zip(&points[i * dim..(i + 1) * dim])
            {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..dim {
                    centroids[c * dim + j] = sums[c * dim + j] / counts[c] as f64;
                }
            }
        }
    }
    KMeansResult {
        centroids,
        assignments,
        k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_two_blobs() {
        let mut pts = Vec::new();
        for i in 0..10 {
            let e = i as f64 * 0.01;
            pts.extend([0.0 + e, 0.0]);
            pts.extend([5.0 + e, 5.0]);
        }
        let r = kmeans(&pts, 2, 2, 7, 50);
        for i in (0..20).step_by(2) {
            assert_eq!(r.assignments[i], r.assignments[0]);
            assert_ne!(r.assignments[i], r.assignments[1]);
        }
    }

    #[test]
    fn identical_points_collapse_to_cluster_zero() {
        let pts = vec![1.0; 12];
        let r = kmeans(&pts, 3, 3, 1, 10);
        assert!(r.assignments.iter().all(|&a| a == 0));
    }

    #[test]
    fn k_clipped_to_n() {
        let pts = vec![0.0, 1.0, 2.0, 3.0];
        assert_eq!(kmeans(&pts, 2, 5, 0, 10).k, 2);
    }
}
