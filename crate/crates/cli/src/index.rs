//! `streamskip index build|search|eval`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use streamskip::io::read_vectors;
use streamskip::knn::{ClusteredGenerator, ClusteredSpec, FlatIndex, IvfPqIndex, IvfPqParams, NeighborSet, VectorSet};
use streamskip::{Seed, TimingStats};

use crate::error::{CliError, CliResult, Classify};

/// Synthetic rows used for training; the rest are only encoded.
pub const TRAIN_ROWS: usize = 100_000;
/// Rows generated and added per batch, bounding memory for large indexes.
pub const ADD_CHUNK: usize = 50_000;
/// Held-out synthetic queries start at this row index, far past any base row.
pub const QUERY_ROW_BASE: u64 = 1 << 40;
/// nprobe values of the recall sweep.
pub const NPROBE_SWEEP: [usize; 5] = [1, 2, 4, 8, 16];

pub fn synthetic_generator(dim: usize, seed: Seed) -> CliResult<ClusteredGenerator<f32>> {
    ClusteredSpec {
        dim,
        seed,
        ..ClusteredSpec::default()
    }
    .generator()
    .usage_err()
}

pub fn held_out_queries(gen: &ClusteredGenerator<f32>, count: usize) -> Vec<f32> {
    gen.rows(QUERY_ROW_BASE, count)
}

pub fn index_params(dim: usize, nlist: usize, m: usize, nbits: u32) -> CliResult<IvfPqParams> {
    let params = IvfPqParams {
        nlist,
        m,
        nbits,
        nprobe: nlist.clamp(1, 8),
        ..IvfPqParams::default()
    };
    params.validate(dim).usage_err()?;
    Ok(params)
}

/// Builds over explicit vectors; ids are row numbers.
pub fn build_from_vectors(vectors: &[f32], dim: usize, params: &IvfPqParams, seed: Seed) -> CliResult<IvfPqIndex<f32>> {
    check_train_size(vectors.len() / dim, params)?;
    IvfPqIndex::build(vectors, dim, params, seed).runtime_err()
}

/// Builds over rows `0..n` of the synthetic generator, training on at most
/// [`TRAIN_ROWS`] of them and adding the rest in chunks.
pub fn build_synthetic(gen: &ClusteredGenerator<f32>, n: usize, params: &IvfPqParams, seed: Seed) -> CliResult<IvfPqIndex<f32>> {
    check_train_size(n, params)?;
    let train = gen.rows(0, n.min(TRAIN_ROWS));
    let mut index = IvfPqIndex::train(&train, gen.dim(), params, seed).runtime_err()?;
    index.add(&train).runtime_err()?;
    drop(train);
    grow_synthetic(&mut index, gen, n)?;
    Ok(index)
}

/// Adds generator rows until the index holds `n` vectors.
pub fn grow_synthetic(index: &mut IvfPqIndex<f32>, gen: &ClusteredGenerator<f32>, n: usize) -> CliResult<()> {
    while index.len() < n {
        let start = index.len();
        let count = (n - start).min(ADD_CHUNK);
        index.add(&gen.rows(start as u64, count)).runtime_err()?;
    }
    Ok(())
}

fn check_train_size(n: usize, params: &IvfPqParams) -> CliResult<()> {
    if n < params.min_train() {
        return Err(CliError::usage(format!(
            "{n} vectors are too few to train nlist = {} with {}-bit codes (need {})",
            params.nlist,
            params.nbits,
            params.min_train()
        )));
    }
    Ok(())
}

pub fn save_index(index: &IvfPqIndex<f32>, path: &Path) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    index.save(&mut w).runtime_err()?;
    w.flush().runtime_err()
}

/// A missing file is a usage error; a corrupt one is a runtime error.
pub fn load_index(path: &Path) -> CliResult<IvfPqIndex<f32>> {
    let file = File::open(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    IvfPqIndex::load(BufReader::new(file)).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

pub fn load_vectors(path: &Path) -> CliResult<VectorSet<f32>> {
    let file = File::open(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let (dim, rows) = read_vectors(BufReader::new(file)).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    VectorSet::new(dim, rows).usage_err()
}

pub fn neighbor_json(query: usize, n: &NeighborSet<f32>) -> String {
    serde_json::json!({ "query": query, "ids": n.ids, "distances": n.distances }).to_string()
}

/// Exact neighbours of each query.
pub fn flat_truth(base: &VectorSet<f32>, queries: &[f32], k: usize) -> CliResult<Vec<NeighborSet<f32>>> {
    let flat = FlatIndex::new(base);
    queries
        .chunks_exact(base.dim())
        .map(|q| flat.search(q, k).usage_err())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecallRow {
    pub nprobe: usize,
    /// Mean fraction of the exact top-k recovered.
    pub recall: f64,
    pub latency: TimingStats,
}

/// Recall@k against `truth` and per-query latency for each nprobe.
pub fn recall_sweep(
    index: &IvfPqIndex<f32>,
    truth: &[NeighborSet<f32>],
    queries: &[f32],
    k: usize,
    nprobes: &[usize],
) -> CliResult<Vec<RecallRow>> {
    let dim = index.dim();
    if queries.len() != truth.len() * dim {
        return Err(CliError::usage("query count does not match ground truth"));
    }
    nprobes
        .iter()
        .map(|&nprobe| {
            let mut hits = 0usize;
            let mut wanted = 0usize;
            let mut ms = Vec::with_capacity(truth.len());
            for (q, t) in queries.chunks_exact(dim).zip(truth) {
                let start = Instant::now();
                let got = index.search(q, k, nprobe).usage_err()?;
                ms.push(start.elapsed().as_secs_f64() * 1e3);
                hits += got.ids.iter().filter(|id| t.ids.contains(id)).count();
                wanted += t.ids.len();
            }
            Ok(RecallRow {
                nprobe,
                recall: hits as f64 / wanted.max(1) as f64,
                latency: TimingStats::from_samples(&ms, 0).runtime_err()?,
            })
        })
        .collect()
}

/// Timed passes per index size in [`latency_trend`].
pub const TREND_ROUNDS: usize = 5;

/// Per-query search latency over `queries`, after one untimed pass.
pub fn search_latency(index: &IvfPqIndex<f32>, queries: &[f32], k: usize, nprobe: usize) -> CliResult<TimingStats> {
    let mut ms = Vec::with_capacity(queries.len() / index.dim());
    timed_pass(index, queries, k, nprobe, &mut ms)?;
    TimingStats::from_samples(&ms, 0).runtime_err()
}

fn timed_pass(index: &IvfPqIndex<f32>, queries: &[f32], k: usize, nprobe: usize, ms: &mut Vec<f64>) -> CliResult<()> {
    let dim = index.dim();
    for q in queries.chunks_exact(dim) {
        index.search(q, k, nprobe).usage_err()?;
    }
    for q in queries.chunks_exact(dim) {
        let start = Instant::now();
        index.search(q, k, nprobe).usage_err()?;
        ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendRow {
    pub n: usize,
    pub latency: TimingStats,
}

/// Latency at the index's current size and after growing it with synthetic
/// rows to each larger size in `sizes`.
///
/// A copy is kept at every size and all sizes are timed in interleaved
/// rounds, so drift in machine speed affects each size alike.
pub fn latency_trend(
    index: &mut IvfPqIndex<f32>,
    gen: &ClusteredGenerator<f32>,
    queries: &[f32],
    k: usize,
    nprobe: usize,
    sizes: &[usize],
) -> CliResult<Vec<TrendRow>> {
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    let start = index.len();
    let mut snapshots = Vec::new();
    for n in sizes.into_iter().filter(|&n| n > start) {
        snapshots.push(index.clone());
        grow_synthetic(index, gen, n)?;
    }
    let mut samples = vec![Vec::new(); snapshots.len() + 1];
    for _ in 0..TREND_ROUNDS {
        for (snap, ms) in snapshots.iter().chain(std::iter::once(&*index)).zip(&mut samples) {
            timed_pass(snap, queries, k, nprobe, ms)?;
        }
    }
    snapshots
        .iter()
        .map(|s| s.len())
        .chain(std::iter::once(index.len()))
        .zip(samples)
        .map(|(n, ms)| {
            Ok(TrendRow {
                n,
                latency: TimingStats::from_samples(&ms, 0).runtime_err()?,
            })
        })
        .collect()
}

pub fn recall_table(rows: &[RecallRow], k: usize) -> String {
    let mut out = format!("| nprobe | recall@{k} | mean ms | p50 ms | p95 ms |\n|---|---|---|---|---|\n");
    for r in rows {
        out.push_str(&format!(
            "| {} | {:.3} | {:.3} | {:.3} | {:.3} |\n",
            r.nprobe, r.recall, r.latency.mean_ms, r.latency.p50_ms, r.latency.p95_ms
        ));
    }
    out
}

pub fn trend_table(rows: &[TrendRow], nprobe: usize) -> String {
    let mut out = format!("| n | p50 ms (nprobe {nprobe}) | mean ms | vs first |\n|---|---|---|---|\n");
    let first = rows.first().map_or(1.0, |r| r.latency.p50_ms);
    for r in rows {
        out.push_str(&format!(
            "| {} | {:.3} | {:.3} | {:.2}x |\n",
            r.n,
            r.latency.p50_ms,
            r.latency.mean_ms,
            r.latency.p50_ms / first
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn m_must_divide_dim() {
        let err = index_params(768, 256, 7, 8).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("m must divide dim"), "{err}");
    }

    #[test]
    fn small_synthetic_build_and_eval() {
        let gen = synthetic_generator(32, Seed(5)).unwrap();
        let params = IvfPqParams {
            nlist: 8,
            m: 8,
            nbits: 6,
            nprobe: 8,
            ..IvfPqParams::default()
        };
        let mut index = build_synthetic(&gen, 3000, &params, Seed(1)).unwrap();
        assert_eq!(index.len(), 3000);
        let base = VectorSet::new(32, gen.rows(0, 3000)).unwrap();
        let queries = held_out_queries(&gen, 20);
        let truth = flat_truth(&base, &queries, 5).unwrap();
        let rows = recall_sweep(&index, &truth, &queries, 5, &[1, 8]).unwrap();
        assert!(rows[0].recall <= rows[1].recall);
        let trend = latency_trend(&mut index, &gen, &queries, 5, 4, &[4000]).unwrap();
        assert_eq!(trend.iter().map(|r| r.n).collect::<Vec<_>>(), vec![3000, 4000]);
        assert_eq!(index.len(), 4000);
    }

    #[test]
    fn too_few_vectors_to_train() {
        let gen = synthetic_generator(8, Seed(5)).unwrap();
        let params = index_params(8, 16, 2, 8).unwrap();
        assert_eq!(build_synthetic(&gen, 100, &params, Seed(1)).unwrap_err().exit_code(), 1);
    }
}
