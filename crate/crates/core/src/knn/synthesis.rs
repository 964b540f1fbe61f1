//! Turning retrieved neighbors into a latent.

use crate::error::{ensure, Result};
use crate::frame::Latent;
use crate::rng::Seed;
use crate::scalar::Real;

use super::flat::{flat_search, FlatIndex, NeighborSet};
use super::ivfpq::IvfPqIndex;
use super::store::VectorStore;

/// Anything that answers top-`k` queries with squared-L2 distances.
pub trait NeighborSearch<T>: Sync {
    fn dim(&self) -> usize;
    fn neighbors(&self, query: &[T], k: usize) -> Result<NeighborSet<T>>;
}

impl<T: Real> NeighborSearch<T> for FlatIndex<'_, T> {
    fn dim(&self) -> usize {
        self.vectors().dim()
    }

    fn neighbors(&self, query: &[T], k: usize) -> Result<NeighborSet<T>> {
        flat_search(self, query, k)
    }
}

impl<T: Real> NeighborSearch<T> for IvfPqIndex<T> {
    fn dim(&self) -> usize {
        IvfPqIndex::dim(self)
    }

    fn neighbors(&self, query: &[T], k: usize) -> Result<NeighborSet<T>> {
        self.search(query, k, self.nprobe())
    }
}

/// Softmax weights `exp(-d_i / temperature)` normalized to sum to one.
/// `None` uses the mean neighbor distance (or 1 when every distance is 0).
pub fn softmax_weights<T: Real>(distances: &[T], temperature: Option<T>) -> Result<Vec<f64>> {
    ensure!(!distances.is_empty(), "neighbor set is empty");
    let d: Vec<f64> = distances.iter().map(|v| v.as_f64()).collect();
    let t = match temperature {
        Some(t) => {
            let t = t.as_f64();
            ensure!(t > 0.0 && t.is_finite(), "temperature must be positive, got {t}");
            t
        }
        None => {
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            if mean > 0.0 {
                mean
            } else {
                1.0
            }
        }
    };
    let dmin = d.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = d.iter().map(|x| (-(x - dmin) / t).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    Ok(w)
}

/// Softmax-weighted mean of the neighbors' payload latents.
///
/// The result is clamped elementwise to the payloads' min/max so rounding
/// can never leave their bounding box.
pub fn weighted_latent_average<T: Real>(
    neighbors: &NeighborSet<T>,
    store: &VectorStore<T>,
    temperature: Option<T>,
) -> Result<Latent<T>> {
    ensure!(!neighbors.is_empty(), "neighbor set is empty");
    ensure!(
        neighbors.ids.len() == neighbors.distances.len(),
        "neighbor ids and distances differ in length"
    );
    let mut payloads = Vec::with_capacity(neighbors.len());
    for &id in &neighbors.ids {
        let p = store
            .payload_latents
            .get(id as usize)
            .ok_or_else(|| crate::Error::invalid(format!("neighbor id {id} is outside the store")))?;
        payloads.push(p);
    }
    let first = payloads[0];
    ensure!(
        payloads.iter().all(|p| p.same_shape(first)),
        "neighbor payload latents differ in shape"
    );
    if payloads.len() == 1 {
        return Ok(first.clone());
    }
    let w = softmax_weights(&neighbors.distances, temperature)?;
    let mut out = first.clone();
    for (i, o) in out.data.iter_mut().enumerate() {
        let (mut acc, mut lo, mut hi) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
        for (p, wi) in payloads.iter().zip(&w) {
            let v = p.data[i].as_f64();
            acc += wi * v;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        *o = T::lit(acc.clamp(lo, hi));
    }
    Ok(out)
}

/// Exact search over a store whose keys are flattened latents.
pub fn latent_knn_search<T: Real>(store: &VectorStore<T>, query: &Latent<T>, k: usize) -> Result<NeighborSet<T>> {
    ensure!(
        query.len() == store.vectors.dim(),
        "query latent has {} values, store dim is {}",
        query.len(),
        store.vectors.dim()
    );
    flat_search(&FlatIndex::new(&store.vectors), &query.data, k)
}

/// Search, average, then refine once with `denoise`.
pub fn hybrid_synthesize<T, I, F>(
    query: &[T],
    index: &I,
    store: &VectorStore<T>,
    k: usize,
    temperature: Option<T>,
    mut denoise: F,
    seed: Seed,
) -> Result<Latent<T>>
where
    T: Real,
    I: NeighborSearch<T> + ?Sized,
    F: FnMut(&Latent<T>, Seed) -> Result<Latent<T>>,
{
    let neighbors = index.neighbors(query, k)?;
    let init = weighted_latent_average(&neighbors, store, temperature)?;
    denoise(&init, seed)
}
