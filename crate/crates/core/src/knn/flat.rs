use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{ensure, Result};
use crate::scalar::Real;

use super::distance::l2_sq;
use super::store::VectorSet;

/// The `k` nearest stored vectors, closest first. Distances are squared L2.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet<T> {
    pub ids: Vec<u64>,
    pub distances: Vec<T>,
}

impl<T: Real> NeighborSet<T> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Clone, Copy)]
struct Candidate<T> {
    dist: T,
    id: u64,
}

impl<T: Real> PartialEq for Candidate<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Real> Eq for Candidate<T> {}

impl<T: Real> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Real> Ord for Candidate<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .partial_cmp(&other.dist)
            .unwrap_or(Ordering::Equal)
            .then(self.id.cmp(&other.id))
    }
}

/// Bounded max-heap keeping the `k` smallest `(distance, id)` pairs.
pub(crate) struct TopK<T> {
    k: usize,
    heap: BinaryHeap<Candidate<T>>,
}

impl<T: Real> TopK<T> {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    /// Current admission threshold.
    #[inline]
    pub fn worst(&self) -> T {
        if self.heap.len() < self.k {
            T::infinity()
        } else {
            self.heap.peek().map(|c| c.dist).unwrap_or(T::infinity())
        }
    }

    #[inline]
    pub fn push(&mut self, dist: T, id: u64) {
        let cand = Candidate { dist, id };
        if self.heap.len() < self.k {
            self.heap.push(cand);
        } else if let Some(top) = self.heap.peek() {
            if cand < *top {
                self.heap.pop();
                self.heap.push(cand);
            }
        }
    }

    pub fn into_neighbors(self) -> NeighborSet<T> {
        let sorted = self.heap.into_sorted_vec();
        NeighborSet {
            ids: sorted.iter().map(|c| c.id).collect(),
            distances: sorted.iter().map(|c| c.dist).collect(),
        }
    }
}

/// Exhaustive L2 index over a borrowed vector set.
#[derive(Debug, Clone, Copy)]
pub struct FlatIndex<'a, T> {
    vectors: &'a VectorSet<T>,
}

impl<'a, T: Real> FlatIndex<'a, T> {
    pub fn new(vectors: &'a VectorSet<T>) -> Self {
        Self { vectors }
    }

    pub fn vectors(&self) -> &'a VectorSet<T> {
        self.vectors
    }

    pub fn search(&self, query: &[T], k: usize) -> Result<NeighborSet<T>> {
        flat_search(self, query, k)
    }
}

/// Exactly the `k` smallest distances; ties go to the lower id.
pub fn flat_search<T: Real>(index: &FlatIndex<'_, T>, query: &[T], k: usize) -> Result<NeighborSet<T>> {
    let set = index.vectors;
    ensure!(
        query.len() == set.dim(),
        "query dim {} does not match index dim {}",
        query.len(),
        set.dim()
    );
    ensure!(k >= 1 && k <= set.len(), "k must be in 1..={}, got {k}", set.len());
    let mut top = TopK::new(k);
    for (id, row) in set.rows().enumerate() {
        let d = l2_sq(query, row);
        if d <= top.worst() {
            top.push(d, id as u64);
        }
    }
    Ok(top.into_neighbors())
}
