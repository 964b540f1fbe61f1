//! Product quantization: each vector is split into `m` sub-vectors and every
//! sub-vector is replaced by the index of its nearest codeword.

use crate::error::{ensure, Result};
use crate::rng::Seed;
use crate::scalar::Real;

use super::distance::{assign_nearest, l2_sq, row_norms};
use super::kmeans::kmeans_train;

pub const DEFAULT_NBITS: u32 = 8;
pub const MAX_NBITS: u32 = 8;
pub(crate) const PQ_KMEANS_ITERS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct ProductQuantizer<T> {
    dim: usize,
    m: usize,
    nbits: u32,
    /// `m × ksub × dsub`.
    codebooks: Vec<T>,
    /// Squared norm of every codeword, `m × ksub`.
    norms: Vec<T>,
}

impl<T: Real> ProductQuantizer<T> {
    pub fn from_codebooks(dim: usize, m: usize, nbits: u32, codebooks: Vec<T>) -> Result<Self> {
        check_shape(dim, m, nbits)?;
        ensure!(
            codebooks.len() == dim << nbits,
            "codebook block has {} values, expected {}",
            codebooks.len(),
            dim << nbits
        );
        let norms = row_norms(&codebooks, dim / m);
        Ok(Self {
            dim,
            m,
            nbits,
            codebooks,
            norms,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn nbits(&self) -> u32 {
        self.nbits
    }

    pub fn ksub(&self) -> usize {
        1 << self.nbits
    }

    pub fn dsub(&self) -> usize {
        self.dim / self.m
    }

    pub fn codebooks(&self) -> &[T] {
        &self.codebooks
    }

    /// Codewords of subspace `j`, `ksub × dsub` row-major.
    #[inline]
    pub fn subspace(&self, j: usize) -> &[T] {
        let len = self.ksub() * self.dsub();
        &self.codebooks[j * len..(j + 1) * len]
    }

    #[inline]
    pub fn codeword(&self, j: usize, code: u8) -> &[T] {
        let dsub = self.dsub();
        &self.subspace(j)[code as usize * dsub..(code as usize + 1) * dsub]
    }

    /// Writes the `m` code bytes of `v` into `out`.
    pub fn encode_into(&self, v: &[T], out: &mut [u8]) {
        debug_assert_eq!(v.len(), self.dim);
        self.encode_batch(v, out);
    }

    /// Encodes the rows of `vectors` into `rows × m` code bytes.
    pub fn encode_batch(&self, vectors: &[T], out: &mut [u8]) {
        let (dim, m, dsub, ksub) = (self.dim, self.m, self.dsub(), self.ksub());
        let n = vectors.len() / dim;
        debug_assert_eq!(out.len(), n * m);
        let mut sub = Vec::with_capacity(n * dsub);
        let mut idx = vec![0u32; n];
        for j in 0..m {
            sub.clear();
            for v in vectors.chunks_exact(dim) {
                sub.extend_from_slice(&v[j * dsub..(j + 1) * dsub]);
            }
            assign_nearest(&sub, self.subspace(j), &self.norms[j * ksub..(j + 1) * ksub], dsub, &mut idx);
            for (code, &c) in out.chunks_exact_mut(m).zip(&idx) {
                code[j] = c as u8;
            }
        }
    }

    pub fn encode(&self, v: &[T]) -> Result<Vec<u8>> {
        ensure!(v.len() == self.dim, "vector dim {} does not match quantizer dim {}", v.len(), self.dim);
        let mut out = vec![0u8; self.m];
        self.encode_into(v, &mut out);
        Ok(out)
    }

    pub fn decode(&self, code: &[u8]) -> Vec<T> {
        let mut out = Vec::with_capacity(self.dim);
        for (j, &c) in code.iter().enumerate() {
            out.extend_from_slice(self.codeword(j, c));
        }
        out
    }

    /// Asymmetric distance table: entry `j * ksub + c` is the squared
    /// distance from sub-vector `j` of `v` to codeword `c` of subspace `j`.
    pub fn lut_into(&self, v: &[T], lut: &mut Vec<T>) {
        let (dsub, ksub) = (self.dsub(), self.ksub());
        lut.clear();
        lut.reserve(self.m * ksub);
        for (j, sub) in v.chunks_exact(dsub).enumerate() {
            lut.extend(self.subspace(j).chunks_exact(dsub).map(|cw| l2_sq(sub, cw)));
        }
    }

    /// Mean squared reconstruction error per vector over the rows of `vectors`.
    pub fn reconstruction_mse(&self, vectors: &[T]) -> f64 {
        let n = vectors.len() / self.dim;
        if n == 0 {
            return 0.0;
        }
        let mut codes = vec![0u8; n * self.m];
        self.encode_batch(vectors, &mut codes);
        let total: f64 = vectors
            .chunks_exact(self.dim)
            .zip(codes.chunks_exact(self.m))
            .map(|(v, code)| l2_sq(v, &self.decode(code)).as_f64())
            .sum();
        total / n as f64
    }
}

fn check_shape(dim: usize, m: usize, nbits: u32) -> Result<()> {
    ensure!(m >= 1, "m must be >= 1");
    ensure!(dim % m == 0, "m must divide dim (m = {m}, dim = {dim})");
    ensure!(
        (1..=MAX_NBITS).contains(&nbits),
        "nbits must be in 1..={MAX_NBITS}, got {nbits}"
    );
    Ok(())
}

/// Trains one k-means codebook of `2^nbits` words per subspace.
pub fn pq_train<T: Real>(vectors: &[T], dim: usize, m: usize, nbits: u32, seed: Seed) -> Result<ProductQuantizer<T>> {
    pq_train_iters(vectors, dim, m, nbits, PQ_KMEANS_ITERS, seed)
}

pub fn pq_train_iters<T: Real>(
    vectors: &[T],
    dim: usize,
    m: usize,
    nbits: u32,
    iters: usize,
    seed: Seed,
) -> Result<ProductQuantizer<T>> {
    check_shape(dim, m, nbits)?;
    ensure!(vectors.len() % dim == 0, "vector data is not a multiple of dim {dim}");
    let n = vectors.len() / dim;
    let ksub = 1usize << nbits;
    ensure!(n >= ksub, "pq training needs at least {ksub} vectors, got {n}");
    let dsub = dim / m;
    let mut codebooks = Vec::with_capacity(dim * ksub);
    let mut sub = Vec::with_capacity(n * dsub);
    for j in 0..m {
        sub.clear();
        for v in vectors.chunks_exact(dim) {
            sub.extend_from_slice(&v[j * dsub..(j + 1) * dsub]);
        }
        let km = kmeans_train(&sub, dsub, ksub, iters, seed.derive(j as u64))?;
        codebooks.extend_from_slice(&km.centroids);
    }
    ProductQuantizer::from_codebooks(dim, m, nbits, codebooks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn lossless_when_codebook_covers_data() {
        // Every 2-d sub-vector is one of four points.
        let pts = [[0.0, 0.0], [1.0, 5.0], [-3.0, 2.0], [7.0, 7.0]];
        let mut rng = SplitMix64::new(3);
        let mut data = Vec::new();
        for _ in 0..40 {
            for _ in 0..3 {
                data.extend(pts[rng.below(4) as usize]);
            }
        }
        // Make sure every point appears in every subspace.
        for p in pts {
            for _ in 0..3 {
                data.extend(p);
            }
        }
        let pq = pq_train(&data, 6, 3, 2, Seed(1)).unwrap();
        assert_eq!(pq.reconstruction_mse(&data), 0.0);
    }

    #[test]
    fn beats_random_codebook() {
        let mut rng = SplitMix64::new(8);
        let data: Vec<f32> = (0..2000 * 16).map(|_| rng.next_normal() as f32).collect();
        let pq = pq_train(&data, 16, 4, 4, Seed(2)).unwrap();
        // Baseline: codewords sampled from the data.
        let mut cb = Vec::new();
        for j in 0..4 {
            for _ in 0..16 {
                let r = rng.below(2000) as usize;
                cb.extend_from_slice(&data[r * 16 + j * 4..r * 16 + j * 4 + 4]);
            }
        }
        let random = ProductQuantizer::from_codebooks(16, 4, 4, cb).unwrap();
        let (trained, base) = (pq.reconstruction_mse(&data), random.reconstruction_mse(&data));
        assert!(trained < base, "{trained} vs {base}");
    }

    #[test]
    fn deterministic() {
        let mut rng = SplitMix64::new(5);
        let data: Vec<f64> = (0..300 * 8).map(|_| rng.next_f64()).collect();
        let a = pq_train(&data, 8, 2, 4, Seed(4)).unwrap();
        let b = pq_train(&data, 8, 2, 4, Seed(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lut_matches_direct_distance() {
        let mut rng = SplitMix64::new(6);
        let data: Vec<f64> = (0..64 * 8).map(|_| rng.next_f64()).collect();
        let pq = pq_train(&data, 8, 4, 3, Seed(0)).unwrap();
        let q: Vec<f64> = (0..8).map(|_| rng.next_f64()).collect();
        let code = pq.encode(&data[..8]).unwrap();
        let mut lut = Vec::new();
        pq.lut_into(&q, &mut lut);
        let adc: f64 = code.iter().enumerate().map(|(j, &c)| lut[j * pq.ksub() + c as usize]).sum();
        assert!((adc - l2_sq(&q, &pq.decode(&code))).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let data = vec![0.0f32; 768 * 300];
        assert!(pq_train(&data, 768, 7, 8, Seed(0)).unwrap_err().to_string().contains("m must divide dim"));
        assert!(pq_train(&data, 768, 48, 9, Seed(0)).is_err());
        assert!(pq_train(&data[..768 * 10], 768, 48, 8, Seed(0)).is_err());
    }
}
