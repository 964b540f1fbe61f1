//! Inverted-file index over product-quantized residuals.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::io::{read_f32s, read_u32, read_u64};
use crate::rng::Seed;
use crate::scalar::Real;

use super::distance::{assign_nearest, l2_sq, row_norms};
use super::flat::{NeighborSet, TopK};
use super::kmeans::kmeans_train;
use super::pq::{pq_train_iters, ProductQuantizer, DEFAULT_NBITS, PQ_KMEANS_ITERS};
use super::store::VectorStore;

pub const IVPQ_MAGIC: &[u8; 4] = b"IVPQ";
pub const IVPQ_VERSION: u32 = 1;
pub const DEFAULT_NPROBE: usize = 8;

/// Lookup rows are always 256 wide so a code byte indexes them without a
/// bounds check.
const LUT_WIDTH: usize = 256;

/// Vectors encoded per batch in [`IvfPqIndex::add`].
const ADD_BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IvfPqParams {
    pub nlist: usize,
    pub m: usize,
    pub nbits: u32,
    pub nprobe: usize,
    pub kmeans_iters: usize,
    /// Training sample cap, as a multiple of `max(nlist, 2^nbits)`.
    pub train_per_centroid: usize,
}

impl Default for IvfPqParams {
    fn default() -> Self {
        Self {
            nlist: 256,
            m: 48,
            nbits: DEFAULT_NBITS,
            nprobe: DEFAULT_NPROBE,
            kmeans_iters: PQ_KMEANS_ITERS,
            train_per_centroid: 64,
        }
    }
}

impl IvfPqParams {
    pub fn validate(&self, dim: usize) -> Result<()> {
        ensure!(self.nlist >= 1, "nlist must be >= 1");
        ensure!(self.m >= 1 && dim % self.m == 0, "m must divide dim (m = {}, dim = {dim})", self.m);
        ensure!((1..=8).contains(&self.nbits), "nbits must be in 1..=8, got {}", self.nbits);
        ensure!(
            self.nprobe >= 1 && self.nprobe <= self.nlist,
            "nprobe must be in 1..={}, got {}",
            self.nlist,
            self.nprobe
        );
        ensure!(self.kmeans_iters >= 1, "kmeans_iters must be >= 1");
        ensure!(self.train_per_centroid >= 1, "train_per_centroid must be >= 1");
        Ok(())
    }

    /// Minimum number of training vectors.
    pub fn min_train(&self) -> usize {
        self.nlist.max(1 << self.nbits)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InvertedList {
    pub ids: Vec<u64>,
    /// `ids.len() × m` code bytes.
    pub codes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvfPqIndex<T> {
    dim: usize,
    nlist: usize,
    /// `nlist × dim`.
    centroids: Vec<T>,
    pq: ProductQuantizer<T>,
    lists: Vec<InvertedList>,
    nprobe: usize,
    ntotal: usize,
}

impl<T: Real> IvfPqIndex<T> {
    /// Trains the coarse quantizer and residual codebooks on a sample of the
    /// rows of `vectors`. The returned index is empty.
    pub fn train(vectors: &[T], dim: usize, params: &IvfPqParams, seed: Seed) -> Result<Self> {
        params.validate(dim)?;
        ensure!(vectors.len() % dim == 0, "vector data is not a multiple of dim {dim}");
        let n = vectors.len() / dim;
        let need = params.min_train();
        ensure!(n >= need, "IVF-PQ training needs at least {need} vectors, got {n}");

        let cap = need.saturating_mul(params.train_per_centroid);
        let sample: Vec<T> = if n > cap {
            let mut idx: Vec<usize> = (0..n).collect();
            seed.derive(0x5341_4d50).rng().shuffle(&mut idx);
            idx.truncate(cap);
            idx.sort_unstable();
            idx.iter().flat_map(|&i| &vectors[i * dim..(i + 1) * dim]).copied().collect()
        } else {
            vectors.to_vec()
        };

        let coarse = kmeans_train(&sample, dim, params.nlist, params.kmeans_iters, seed.derive(0x434f_4152))?;
        let mut residuals = sample;
        for (v, &a) in residuals.chunks_exact_mut(dim).zip(&coarse.assignments) {
            for (x, c) in v.iter_mut().zip(coarse.centroid(a as usize)) {
                *x -= *c;
            }
        }
        let pq = pq_train_iters(
            &residuals,
            dim,
            params.m,
            params.nbits,
            params.kmeans_iters,
            seed.derive(0x5051_5452),
        )?;
        Ok(Self {
            dim,
            nlist: params.nlist,
            centroids: coarse.centroids,
            pq,
            lists: vec![InvertedList::default(); params.nlist],
            nprobe: params.nprobe,
            ntotal: 0,
        })
    }

    /// Trains on `vectors` and adds all of them with ids `0..n`.
    pub fn build(vectors: &[T], dim: usize, params: &IvfPqParams, seed: Seed) -> Result<Self> {
        let mut index = Self::train(vectors, dim, params, seed)?;
        index.add(vectors)?;
        Ok(index)
    }

    /// Adds rows with consecutive ids starting at the current size.
    pub fn add(&mut self, vectors: &[T]) -> Result<()> {
        ensure!(
            vectors.len() % self.dim == 0,
            "vector data is not a multiple of dim {}",
            self.dim
        );
        ensure!(vectors.iter().all(|v| v.is_finite()), "vectors must be finite");
        let (dim, m) = (self.dim, self.pq.m());
        let norms = row_norms(&self.centroids, dim);
        let mut lists = vec![0u32; ADD_BLOCK];
        let mut codes = vec![0u8; ADD_BLOCK * m];
        let mut residuals = Vec::with_capacity(ADD_BLOCK * dim);
        for block in vectors.chunks(ADD_BLOCK * dim) {
            let rows = block.len() / dim;
            assign_nearest(block, &self.centroids, &norms, dim, &mut lists[..rows]);
            residuals.clear();
            for (v, &l) in block.chunks_exact(dim).zip(&lists) {
                residuals.extend(v.iter().zip(self.centroid(l as usize)).map(|(x, c)| *x - *c));
            }
            self.pq.encode_batch(&residuals, &mut codes[..rows * m]);
            for (&l, code) in lists[..rows].iter().zip(codes.chunks_exact(m)) {
                let list = &mut self.lists[l as usize];
                list.ids.push(self.ntotal as u64);
                list.codes.extend_from_slice(code);
                self.ntotal += 1;
            }
        }
        Ok(())
    }

    fn encode_one(&self, v: &[T], residual: &mut [T], code: &mut [u8]) -> usize {
        let mut list = [0u32];
        assign_nearest(v, &self.centroids, &row_norms(&self.centroids, self.dim), self.dim, &mut list);
        let list = list[0] as usize;
        for ((r, x), c) in residual.iter_mut().zip(v).zip(self.centroid(list)) {
            *r = *x - *c;
        }
        self.pq.encode_into(residual, code);
        list
    }

    /// Quantizes `v` without storing it: centroid plus decoded residual.
    pub fn reconstruct_vector(&self, v: &[T]) -> Result<Vec<T>> {
        ensure!(v.len() == self.dim, "vector dim {} does not match index dim {}", v.len(), self.dim);
        let mut residual = vec![T::zero(); self.dim];
        let mut code = vec![0u8; self.pq.m()];
        let list = self.encode_one(v, &mut residual, &mut code);
        Ok(self.decode_in_list(list, &code))
    }

    /// Reconstruction of a stored id.
    pub fn reconstruct(&self, id: u64) -> Result<Vec<T>> {
        let m = self.pq.m();
        for (li, l) in self.lists.iter().enumerate() {
            if let Some(pos) = l.ids.iter().position(|&x| x == id) {
                return Ok(self.decode_in_list(li, &l.codes[pos * m..(pos + 1) * m]));
            }
        }
        Err(Error::NotFound(format!("id {id} is not in the index")))
    }

    fn decode_in_list(&self, list: usize, code: &[u8]) -> Vec<T> {
        let mut out = self.pq.decode(code);
        for (o, c) in out.iter_mut().zip(self.centroid(list)) {
            *o += *c;
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nlist(&self) -> usize {
        self.nlist
    }

    pub fn nprobe(&self) -> usize {
        self.nprobe
    }

    pub fn set_nprobe(&mut self, nprobe: usize) -> Result<()> {
        check_nprobe(nprobe, self.nlist)?;
        self.nprobe = nprobe;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ntotal
    }

    pub fn is_empty(&self) -> bool {
        self.ntotal == 0
    }

    pub fn quantizer(&self) -> &ProductQuantizer<T> {
        &self.pq
    }

    pub fn lists(&self) -> &[InvertedList] {
        &self.lists
    }

    pub fn centroid(&self, i: usize) -> &[T] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }

    /// Approximate top-`k` over the `nprobe` lists whose centroids are
    /// nearest to the query. May return fewer than `k` neighbors when the
    /// probed lists hold fewer vectors.
    pub fn search(&self, query: &[T], k: usize, nprobe: usize) -> Result<NeighborSet<T>> {
        ensure!(
            query.len() == self.dim,
            "query dim {} does not match index dim {}",
            query.len(),
            self.dim
        );
        ensure!(k >= 1, "k must be >= 1");
        check_nprobe(nprobe, self.nlist)?;

        let mut coarse: Vec<(T, usize)> = self
            .centroids
            .chunks_exact(self.dim)
            .map(|c| l2_sq(query, c))
            .zip(0..)
            .collect();
        if nprobe < self.nlist {
            coarse.select_nth_unstable_by(nprobe - 1, cmp_pair);
            coarse.truncate(nprobe);
        }
        coarse.sort_unstable_by(cmp_pair);

        let m = self.pq.m();
        let ksub = self.pq.ksub();
        let dsub = self.pq.dsub();
        let mut lut = vec![[T::zero(); LUT_WIDTH]; m];
        let mut residual = vec![T::zero(); self.dim];
        let mut top = TopK::new(k);
        for &(_, li) in &coarse {
            let list = &self.lists[li];
            if list.ids.is_empty() {
                continue;
            }
            for ((r, q), c) in residual.iter_mut().zip(query).zip(self.centroid(li)) {
                *r = *q - *c;
            }
            for (j, row) in lut.iter_mut().enumerate() {
                let sub = &residual[j * dsub..(j + 1) * dsub];
                for (slot, cw) in row[..ksub].iter_mut().zip(self.pq.subspace(j).chunks_exact(dsub)) {
                    *slot = l2_sq(sub, cw);
                }
            }
            scan_list(&lut, list, m, &mut top);
        }
        Ok(top.into_neighbors())
    }
}

fn cmp_pair<T: Real>(a: &(T, usize), b: &(T, usize)) -> std::cmp::Ordering {
    a.0.partial_cmp(&b.0)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a.1.cmp(&b.1))
}

fn check_nprobe(nprobe: usize, nlist: usize) -> Result<()> {
    ensure!(nprobe >= 1, "nprobe must be >= 1");
    ensure!(nprobe <= nlist, "nprobe {nprobe} exceeds nlist {nlist}");
    Ok(())
}

fn scan_list<T: Real>(lut: &[[T; LUT_WIDTH]], list: &InvertedList, m: usize, top: &mut TopK<T>) {
    // Fixed widths let the compiler drop bounds checks; same summation order.
    match m {
        8 => scan_fixed::<T, 8>(lut, list, top),
        16 => scan_fixed::<T, 16>(lut, list, top),
        32 => scan_fixed::<T, 32>(lut, list, top),
        48 => scan_fixed::<T, 48>(lut, list, top),
        64 => scan_fixed::<T, 64>(lut, list, top),
        96 => scan_fixed::<T, 96>(lut, list, top),
        _ => scan_any(lut, list, m, top),
    }
}

fn scan_fixed<T: Real, const M: usize>(lut: &[[T; LUT_WIDTH]], list: &InvertedList, top: &mut TopK<T>) {
    let lut: &[[T; LUT_WIDTH]; M] = lut.try_into().expect("one table row per subquantizer");
    let (codes, _) = list.codes.as_chunks::<M>();
    let mut worst = top.worst();
    for (&id, code) in list.ids.iter().zip(codes) {
        let mut acc = [T::zero(); 4];
        for j in (0..M).step_by(4) {
            acc[0] += lut[j][code[j] as usize];
            acc[1] += lut[j + 1][code[j + 1] as usize];
            acc[2] += lut[j + 2][code[j + 2] as usize];
            acc[3] += lut[j + 3][code[j + 3] as usize];
        }
        let d = (acc[0] + acc[1]) + (acc[2] + acc[3]);
        if d <= worst {
            top.push(d, id);
            worst = top.worst();
        }
    }
}

fn scan_any<T: Real>(lut: &[[T; LUT_WIDTH]], list: &InvertedList, m: usize, top: &mut TopK<T>) {
    let mut worst = top.worst();
    for (&id, code) in list.ids.iter().zip(list.codes.chunks_exact(m)) {
        // Four partial sums break the add dependency chain.
        let mut acc = [T::zero(); 4];
        let mut rows = lut.chunks_exact(4);
        let mut bytes = code.chunks_exact(4);
        for (r, b) in (&mut rows).zip(&mut bytes) {
            acc[0] += r[0][b[0] as usize];
            acc[1] += r[1][b[1] as usize];
            acc[2] += r[2][b[2] as usize];
            acc[3] += r[3][b[3] as usize];
        }
        let mut d = (acc[0] + acc[1]) + (acc[2] + acc[3]);
        for (r, &b) in rows.remainder().iter().zip(bytes.remainder()) {
            d += r[b as usize];
        }
        if d <= worst {
            top.push(d, id);
            worst = top.worst();
        }
    }
}

/// Builds an index over every key of `store` with ids equal to store rows.
pub fn ivfpq_build<T: Real>(store: &VectorStore<T>, nlist: usize, m: usize, nbits: u32, seed: Seed) -> Result<IvfPqIndex<T>> {
    let params = IvfPqParams {
        nlist,
        m,
        nbits,
        nprobe: DEFAULT_NPROBE.min(nlist.max(1)),
        ..IvfPqParams::default()
    };
    IvfPqIndex::build(store.vectors.as_slice(), store.vectors.dim(), &params, seed)
}

pub fn ivfpq_search<T: Real>(index: &IvfPqIndex<T>, query: &[T], k: usize, nprobe: usize) -> Result<NeighborSet<T>> {
    index.search(query, k, nprobe)
}

const MAX_DIM: usize = 1 << 20;
const MAX_NLIST: usize = 1 << 24;

impl IvfPqIndex<f32> {
    /// Little-endian binary: magic, version, nlist, m, nbits, dim, centroids,
    /// codebooks, then each list as a u64 length and `(u64 id, m bytes)` pairs.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(IVPQ_MAGIC)?;
        for v in [
            IVPQ_VERSION,
            self.nlist as u32,
            self.pq.m() as u32,
            self.pq.nbits(),
            self.dim as u32,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity((self.centroids.len() + self.pq.codebooks().len()) * 4);
        for v in self.centroids.iter().chain(self.pq.codebooks()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        let m = self.pq.m();
        for l in &self.lists {
            buf.clear();
            buf.extend_from_slice(&(l.ids.len() as u64).to_le_bytes());
            for (id, code) in l.ids.iter().zip(l.codes.chunks_exact(m)) {
                buf.extend_from_slice(&id.to_le_bytes());
                buf.extend_from_slice(code);
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("index file too short".into()))?;
        if &magic != IVPQ_MAGIC {
            return Err(Error::Format(format!("bad index magic {magic:?}, expected \"IVPQ\"")));
        }
        let version = read_u32(&mut r)?;
        if version != IVPQ_VERSION {
            return Err(Error::Format(format!(
                "unsupported index version {version}, expected {IVPQ_VERSION}"
            )));
        }
        let nlist = read_u32(&mut r)? as usize;
        let m = read_u32(&mut r)? as usize;
        let nbits = read_u32(&mut r)?;
        let dim = read_u32(&mut r)? as usize;
        let bad = |msg: String| Error::Format(msg);
        if nlist == 0 || nlist > MAX_NLIST || dim == 0 || dim > MAX_DIM {
            return Err(bad(format!("implausible index header nlist={nlist} dim={dim}")));
        }
        if m == 0 || dim % m != 0 || !(1..=8).contains(&nbits) {
            return Err(bad(format!("invalid quantizer header m={m} nbits={nbits} dim={dim}")));
        }
        let centroids = read_f32s(&mut r, nlist * dim)?;
        let codebooks = read_f32s(&mut r, dim << nbits)?;
        let pq = ProductQuantizer::from_codebooks(dim, m, nbits, codebooks).map_err(|e| bad(e.to_string()))?;
        let ksub = 1usize << nbits;
        let mut lists = Vec::with_capacity(nlist);
        let mut ntotal = 0;
        let mut entry = vec![0u8; 8 + m];
        for _ in 0..nlist {
            let len = read_u64(&mut r)? as usize;
            let mut l = InvertedList {
                ids: Vec::with_capacity(len.min(1 << 20)),
                codes: Vec::with_capacity(len.min(1 << 20) * m),
            };
            for _ in 0..len {
                r.read_exact(&mut entry)
                    .map_err(|_| bad("unexpected end of file in inverted list".into()))?;
                let code = &entry[8..];
                if code.iter().any(|&c| c as usize >= ksub) {
                    return Err(bad(format!("code byte out of range for nbits {nbits}")));
                }
                l.ids.push(u64::from_le_bytes(entry[..8].try_into().expect("8 bytes")));
                l.codes.extend_from_slice(code);
            }
            ntotal += len;
            lists.push(l);
        }
        Ok(Self {
            dim,
            nlist,
            centroids,
            pq,
            lists,
            nprobe: DEFAULT_NPROBE.min(nlist),
            ntotal,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knn::flat::{flat_search, FlatIndex};
    use crate::knn::store::VectorSet;
    use crate::rng::SplitMix64;

    /// Four groups of sixteen points; every coordinate is an integer so
    /// 16-word codebooks per 1-d subspace reproduce the data exactly.
    fn tiny() -> Vec<f64> {
        let mut rng = SplitMix64::new(11);
        let mut data = Vec::new();
        for c in 0..4 {
            for _ in 0..16 {
                for _ in 0..8 {
                    data.push((100 * c) as f64 + rng.below(4) as f64);
                }
            }
        }
        data
    }

    fn tiny_params() -> IvfPqParams {
        IvfPqParams {
            nlist: 4,
            m: 8,
            nbits: 4,
            nprobe: 4,
            kmeans_iters: 25,
            ..IvfPqParams::default()
        }
    }

    #[test]
    fn lossless_settings_match_flat() {
        let data = tiny();
        let index = IvfPqIndex::build(&data, 8, &tiny_params(), Seed(1)).unwrap();
        for i in 0..64 {
            let row = &data[i * 8..(i + 1) * 8];
            assert_eq!(index.reconstruct(i as u64).unwrap(), row);
        }
        let set = VectorSet::new(8, data.clone()).unwrap();
        let flat = FlatIndex::new(&set);
        let mut rng = SplitMix64::new(2);
        for _ in 0..50 {
            let q: Vec<f64> = (0..8).map(|_| rng.below(320) as f64 - 10.0).collect();
            let a = index.search(&q, 10, 4).unwrap();
            let b = flat_search(&flat, &q, 10).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn fixed_width_scan_matches_generic() {
        let mut rng = SplitMix64::new(9);
        for m in [16usize, 48] {
            let lut: Vec<[f32; LUT_WIDTH]> = (0..m)
                .map(|_| std::array::from_fn(|_| rng.next_normal() as f32))
                .collect();
            let list = InvertedList {
                ids: (0..500).collect(),
                codes: (0..500 * m).map(|_| rng.below(256) as u8).collect(),
            };
            let (mut a, mut b) = (TopK::new(20), TopK::new(20));
            scan_list(&lut, &list, m, &mut a);
            scan_any(&lut, &list, m, &mut b);
            assert_eq!(a.into_neighbors(), b.into_neighbors());
        }
    }

    #[test]
    fn single_list() {
        let data = tiny();
        let params = IvfPqParams {
            nlist: 1,
            nprobe: 1,
            ..tiny_params()
        };
        let index = IvfPqIndex::build(&data, 8, &params, Seed(3)).unwrap();
        assert_eq!(index.lists().len(), 1);
        assert_eq!(index.lists()[0].ids.len(), 64);
    }

    #[test]
    fn partition_and_code_range() {
        let mut rng = SplitMix64::new(4);
        let data: Vec<f32> = (0..2000 * 16).map(|_| rng.next_normal() as f32).collect();
        let params = IvfPqParams {
            nlist: 16,
            m: 4,
            nbits: 5,
            nprobe: 4,
            kmeans_iters: 8,
            ..IvfPqParams::default()
        };
        let index = IvfPqIndex::build(&data, 16, &params, Seed(5)).unwrap();
        let mut seen = vec![0u32; 2000];
        for l in index.lists() {
            assert_eq!(l.codes.len(), l.ids.len() * 4);
            assert!(l.codes.iter().all(|&c| c < 32));
            for &id in &l.ids {
                seen[id as usize] += 1;
            }
        }
        assert!(seen.iter().all(|&s| s == 1));
    }

    #[test]
    fn argument_errors() {
        let data = tiny();
        let index = IvfPqIndex::build(&data, 8, &tiny_params(), Seed(1)).unwrap();
        let q = [0.0; 8];
        assert!(index.search(&q, 5, 0).is_err());
        assert!(index.search(&q, 5, 5).is_err());
        assert!(index.search(&q[..4], 5, 1).is_err());
        assert!(IvfPqIndex::train(&data[..8 * 10], 8, &tiny_params(), Seed(0)).is_err());
        let bad_m = IvfPqParams { m: 3, ..tiny_params() };
        assert!(IvfPqIndex::train(&data, 8, &bad_m, Seed(0)).is_err());
    }

    #[test]
    fn save_load_roundtrip() {
        let data: Vec<f32> = tiny().into_iter().map(|v| v as f32).collect();
        let index = IvfPqIndex::build(&data, 8, &tiny_params(), Seed(1)).unwrap();
        let mut bytes = Vec::new();
        index.save(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"IVPQ");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let back = IvfPqIndex::load(&bytes[..]).unwrap();
        assert_eq!(back, index);

        let mut corrupt = bytes.clone();
        corrupt[0] = b'X';
        assert!(matches!(IvfPqIndex::load(&corrupt[..]), Err(Error::Format(_))));
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(matches!(IvfPqIndex::load(&wrong_version[..]), Err(Error::Format(_))));
        assert!(matches!(IvfPqIndex::load(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
    }
}
