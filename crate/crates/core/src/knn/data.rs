//! Synthetic clustered embeddings for index tests and benchmarks.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::rng::{Seed, SplitMix64};
use crate::scalar::Real;

/// Points are `center + basis · z + noise`, with a random low-rank basis per
/// cluster. Centers lie in a random `center_rank`-dimensional subspace, as
/// they would for real embeddings; isotropic centers in high dimension are
/// all equidistant and leave a coarse quantizer nothing to partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteredSpec {
    pub dim: usize,
    pub clusters: usize,
    /// Dimension of the subspace holding the cluster centers.
    pub center_rank: usize,
    /// Rank of the within-cluster variation.
    pub intrinsic_dim: usize,
    /// Per-coordinate std of the within-cluster variation.
    pub spread: f64,
    /// Std of the isotropic noise added to every coordinate.
    pub noise: f64,
    pub seed: Seed,
}

impl Default for ClusteredSpec {
    fn default() -> Self {
        Self {
            dim: 768,
            clusters: 1024,
            center_rank: 16,
            intrinsic_dim: 4,
            spread: 1.0,
            noise: 0.02,
            seed: Seed(0),
        }
    }
}

impl ClusteredSpec {
    /// Defaults with roughly a hundred points per cluster, capped at 1024
    /// clusters.
    pub fn for_size(n: usize, dim: usize, seed: Seed) -> Self {
        Self {
            dim,
            clusters: (n / 100).clamp(1, 1024),
            seed,
            ..Self::default()
        }
    }

    pub fn generator<T: Real>(&self) -> Result<ClusteredGenerator<T>> {
        ensure!(self.dim >= 1, "dim must be >= 1");
        ensure!(self.clusters >= 1, "clusters must be >= 1");
        ensure!(self.center_rank >= 1, "center_rank must be >= 1");
        ensure!(self.intrinsic_dim >= 1, "intrinsic_dim must be >= 1");
        ensure!(self.spread >= 0.0 && self.noise >= 0.0, "spread and noise must be >= 0");
        let mut rng = self.seed.derive(0x4345_4e54).rng();
        let rank = self.center_rank;
        let frame: Vec<f64> = (0..rank * self.dim).map(|_| rng.next_normal()).collect();
        // Uniform in a box, unit variance per coordinate overall.
        let coord_scale = (3.0 / rank as f64).sqrt();
        let mut centers = Vec::with_capacity(self.clusters * self.dim);
        for _ in 0..self.clusters {
            let u: Vec<f64> = (0..rank).map(|_| coord_scale * (2.0 * rng.next_f64() - 1.0)).collect();
            centers.extend((0..self.dim).map(|d| T::lit(u.iter().enumerate().map(|(i, ui)| ui * frame[i * self.dim + d]).sum())));
        }
        let scale = self.spread / (self.intrinsic_dim as f64).sqrt();
        let bases = (0..self.clusters * self.dim * self.intrinsic_dim)
            .map(|_| T::lit(scale * rng.next_normal()))
            .collect();
        Ok(ClusteredGenerator {
            spec: self.clone(),
            centers,
            bases,
        })
    }
}

/// Row `i` depends only on the spec and `i`, so any range can be generated
/// independently.
#[derive(Debug, Clone)]
pub struct ClusteredGenerator<T> {
    spec: ClusteredSpec,
    centers: Vec<T>,
    /// Per cluster, `dim × intrinsic_dim`.
    bases: Vec<T>,
}

impl<T: Real> ClusteredGenerator<T> {
    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    /// Writes row `index` into `out` and returns its cluster.
    pub fn row_into(&self, index: u64, out: &mut [T]) -> usize {
        let (dim, r) = (self.spec.dim, self.spec.intrinsic_dim);
        let mut rng = SplitMix64::new(self.spec.seed.derive(index).0);
        let c = rng.below(self.spec.clusters as u64) as usize;
        let z: Vec<T> = (0..r).map(|_| T::lit(rng.next_normal())).collect();
        let center = &self.centers[c * dim..(c + 1) * dim];
        let basis = &self.bases[c * dim * r..(c + 1) * dim * r];
        let noise = T::lit(self.spec.noise);
        for ((o, ctr), b) in out.iter_mut().zip(center).zip(basis.chunks_exact(r)) {
            let mut v = *ctr;
            for (bi, zi) in b.iter().zip(&z) {
                v += *bi * *zi;
            }
            *o = v + noise * T::lit(rng.next_normal());
        }
        c
    }

    /// Rows `start..start + count`, row-major.
    pub fn rows(&self, start: u64, count: usize) -> Vec<T> {
        let dim = self.spec.dim;
        let mut out = vec![T::zero(); count * dim];
        for (i, row) in out.chunks_exact_mut(dim).enumerate() {
            self.row_into(start + i as u64, row);
        }
        out
    }
}
