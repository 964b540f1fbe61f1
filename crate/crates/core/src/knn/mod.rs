//! Nearest-neighbour retrieval: exact search, IVF-PQ, and latent synthesis.

pub mod data;
pub mod distance;
pub mod flat;
pub mod ivfpq;
pub mod kmeans;
pub mod pq;
pub mod store;
pub mod synthesis;

pub use distance::{assign_nearest, dot, l2_sq, nearest_row, row_norms};
pub use flat::{flat_search, FlatIndex, NeighborSet};
pub use ivfpq::{ivfpq_build, ivfpq_search, InvertedList, IvfPqIndex, IvfPqParams, DEFAULT_NPROBE, IVPQ_MAGIC, IVPQ_VERSION};
pub use kmeans::{kmeans_train, KMeans};
pub use pq::{pq_train, pq_train_iters, ProductQuantizer, DEFAULT_NBITS};
pub use store::{VectorSet, VectorStore};
pub use synthesis::{hybrid_synthesize, latent_knn_search, softmax_weights, weighted_latent_average, NeighborSearch};
pub use data::{ClusteredGenerator, ClusteredSpec};
