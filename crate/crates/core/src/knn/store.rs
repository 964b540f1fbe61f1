use crate::error::{ensure, Result};
use crate::frame::Latent;
use crate::scalar::Real;

/// Row-major matrix of retrieval keys.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet<T> {
    dim: usize,
    data: Vec<T>,
    normalized: bool,
}

impl<T: Real> VectorSet<T> {
    pub fn new(dim: usize, data: Vec<T>) -> Result<Self> {
        ensure!(dim > 0, "vector dim must be positive");
        ensure!(data.len() % dim == 0, "vector data length {} is not a multiple of dim {dim}", data.len());
        ensure!(data.iter().all(|v| v.is_finite()), "vectors must be finite");
        Ok(Self {
            dim,
            data,
            normalized: false,
        })
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        Self {
            dim,
            data: Vec::with_capacity(dim * rows),
            normalized: false,
        }
    }

    pub fn push(&mut self, row: &[T]) -> Result<()> {
        ensure!(row.len() == self.dim, "row has dim {}, expected {}", row.len(), self.dim);
        ensure!(row.iter().all(|v| v.is_finite()), "vectors must be finite");
        self.data.extend_from_slice(row);
        self.normalized = false;
        Ok(())
    }

    /// Scales every non-zero row to unit L2 norm, after which L2 ranking
    /// equals cosine ranking.
    pub fn normalize(&mut self) {
        for row in self.data.chunks_exact_mut(self.dim) {
            let norm = row.iter().map(|v| *v * *v).sum::<T>().sqrt();
            if norm > T::zero() {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        self.normalized = true;
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.dim)
    }

    /// The first `n` rows.
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            dim: self.dim,
            data: self.data[..n.min(self.len()) * self.dim].to_vec(),
            normalized: self.normalized,
        }
    }
}

/// Retrieval keys paired with the latent each key should produce.
#[derive(Debug, Clone)]
pub struct VectorStore<T> {
    pub vectors: VectorSet<T>,
    pub payload_latents: Vec<Latent<T>>,
}

impl<T: Real> VectorStore<T> {
    pub fn new(vectors: VectorSet<T>, payload_latents: Vec<Latent<T>>) -> Result<Self> {
        ensure!(
            vectors.len() == payload_latents.len(),
            "{} vectors but {} payload latents",
            vectors.len(),
            payload_latents.len()
        );
        Ok(Self {
            vectors,
            payload_latents,
        })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            vectors: VectorSet::with_capacity(dim, 0),
            payload_latents: Vec::new(),
        }
    }

    pub fn push(&mut self, key: &[T], payload: Latent<T>) -> Result<()> {
        self.vectors.push(key)?;
        self.payload_latents.push(payload);
        Ok(())
    }

    /// A store keyed by the flattened payload latents themselves.
    pub fn from_latents(latents: Vec<Latent<T>>) -> Result<Self> {
        ensure!(!latents.is_empty(), "latent store needs at least one latent");
        let dim = latents[0].len();
        let mut vectors = VectorSet::with_capacity(dim, latents.len());
        for l in &latents {
            ensure!(l.same_shape(&latents[0]), "latent store needs equally shaped latents");
            vectors.push(&l.data)?;
        }
        Self::new(vectors, latents)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}
