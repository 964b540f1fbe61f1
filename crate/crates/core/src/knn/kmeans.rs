//! k-means++ seeding followed by Lloyd iterations.

use crate::error::{ensure, Result};
use crate::rng::Seed;
use crate::scalar::Real;

use super::distance::{assign_nearest, l2_sq, l2_to_all, row_norms};

#[derive(Debug, Clone)]
pub struct KMeans<T> {
    pub dim: usize,
    /// `k × dim`, row-major.
    pub centroids: Vec<T>,
    /// Cluster index of every training vector after the last iteration.
    pub assignments: Vec<u32>,
    /// Inertia (sum of squared distances to the assigned centroid) after each
    /// assignment step.
    pub inertia_history: Vec<f64>,
}

impl<T: Real> KMeans<T> {
    pub fn k(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn centroid(&self, i: usize) -> &[T] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }
}

/// Clusters the rows of `vectors` (`n × dim`) into `k` groups. Stops early
/// once assignments no longer change. Deterministic for a given seed.
pub fn kmeans_train<T: Real>(vectors: &[T], dim: usize, k: usize, iters: usize, seed: Seed) -> Result<KMeans<T>> {
    ensure!(dim > 0 && vectors.len() % dim == 0, "vector data is not a multiple of dim {dim}");
    let n = vectors.len() / dim;
    ensure!(k >= 1, "k must be >= 1");
    ensure!(k <= n, "k = {k} exceeds the {n} training vectors");
    ensure!(iters >= 1, "iters must be >= 1");

    let mut centroids = plus_plus_init(vectors, dim, k, seed);
    let mut assignments = vec![u32::MAX; n];
    let mut inertia_history = Vec::with_capacity(iters);
    let mut sums = vec![0.0f64; k * dim];
    let mut counts = vec![0usize; k];

    let mut next = vec![0u32; n];
    for _ in 0..iters {
        assign_nearest(vectors, &centroids, &row_norms(&centroids, dim), dim, &mut next);
        let changed = next != assignments;
        std::mem::swap(&mut assignments, &mut next);
        let inertia: f64 = vectors
            .chunks_exact(dim)
            .zip(&assignments)
            .map(|(v, &a)| l2_sq(v, &centroids[a as usize * dim..(a as usize + 1) * dim]).as_f64())
            .sum();
        inertia_history.push(inertia);
        if !changed {
            break;
        }

        sums.iter_mut().for_each(|s| *s = 0.0);
        counts.iter_mut().for_each(|c| *c = 0);
        for (v, &a) in vectors.chunks_exact(dim).zip(&assignments) {
            let a = a as usize;
            counts[a] += 1;
            for (s, x) in sums[a * dim..(a + 1) * dim].iter_mut().zip(v) {
                *s += x.as_f64();
            }
        }
        for c in 0..k {
            // An empty cluster keeps its centroid.
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                    *dst = T::lit(s * inv);
                }
            }
        }
    }

    Ok(KMeans {
        dim,
        centroids,
        assignments,
        inertia_history,
    })
}

/// k-means++: the first centre uniformly, each next one with probability
/// proportional to the squared distance to the nearest chosen centre.
fn plus_plus_init<T: Real>(vectors: &[T], dim: usize, k: usize, seed: Seed) -> Vec<T> {
    let n = vectors.len() / dim;
    let mut rng = seed.rng();
    let row = |i: usize| &vectors[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.below(n as u64) as usize;
    centroids.extend_from_slice(row(first));
    let mut scratch = vec![T::zero(); n];
    l2_to_all(vectors, row(first), &mut scratch);
    let mut min_d: Vec<f64> = scratch.iter().map(|d| d.as_f64()).collect();

    for _ in 1..k {
        let total: f64 = min_d.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in min_d.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    pick = i;
                    break;
                }
            }
            // Guard against rounding leaving us on a zero-weight tail.
            if min_d[pick] == 0.0 {
                pick = min_d.iter().rposition(|d| *d > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // Fewer distinct points than clusters.
            rng.below(n as u64) as usize
        };
        let c = row(pick).to_vec();
        l2_to_all(vectors, &c, &mut scratch);
        for (d, nd) in min_d.iter_mut().zip(&scratch) {
            let nd = nd.as_f64();
            if nd < *d {
                *d = nd;
            }
        }
        centroids.extend_from_slice(&c);
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn one_point_per_cluster() {
        let mut rng = SplitMix64::new(1);
        let data: Vec<f64> = (0..6 * 3).map(|_| rng.next_f64()).collect();
        let km = kmeans_train(&data, 3, 6, 10, Seed(2)).unwrap();
        assert_eq!(*km.inertia_history.last().unwrap(), 0.0);
        let mut rows: Vec<Vec<f64>> = km.centroids.chunks(3).map(|c| c.to_vec()).collect();
        let mut want: Vec<Vec<f64>> = data.chunks(3).map(|c| c.to_vec()).collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(rows, want);
    }

    #[test]
    fn two_blobs() {
        let mut rng = SplitMix64::new(9);
        let means = [[-5.0, 2.0], [4.0, -3.0]];
        let mut data = Vec::new();
        let mut sample_means = [[0.0; 2]; 2];
        for (b, m) in means.iter().enumerate() {
            for _ in 0..500 {
                let p = [m[0] + 0.5 * rng.next_normal(), m[1] + 0.5 * rng.next_normal()];
                sample_means[b][0] += p[0] / 500.0;
                sample_means[b][1] += p[1] / 500.0;
                data.extend(p);
            }
        }
        let km = kmeans_train(&data, 2, 2, 20, Seed(3)).unwrap();
        for sm in sample_means {
            let close = km
                .centroids
                .chunks(2)
                .any(|c| ((c[0] - sm[0]).powi(2) + (c[1] - sm[1]).powi(2)).sqrt() < 0.1);
            assert!(close, "no centroid near {sm:?}: {:?}", km.centroids);
        }
    }

    #[test]
    fn inertia_non_increasing_and_deterministic() {
        let mut rng = SplitMix64::new(4);
        let data: Vec<f32> = (0..2000 * 4).map(|_| rng.next_f64() as f32).collect();
        let a = kmeans_train(&data, 4, 16, 30, Seed(5)).unwrap();
        for w in a.inertia_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "{:?}", a.inertia_history);
        }
        let b = kmeans_train(&data, 4, 16, 30, Seed(5)).unwrap();
        assert_eq!(a.centroids, b.centroids);
        assert_eq!(a.assignments, b.assignments);
    }

    #[test]
    fn too_many_clusters() {
        assert!(kmeans_train(&[0.0f32, 1.0], 1, 3, 5, Seed(0)).is_err());
        assert!(kmeans_train(&[0.0f32, 1.0], 1, 1, 0, Seed(0)).is_err());
    }
}
