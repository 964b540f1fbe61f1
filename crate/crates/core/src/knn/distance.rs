use crate::scalar::Real;

const LANES: usize = 8;

/// Squared Euclidean distance. Eight independent accumulators let the
/// compiler vectorize the loop; the reduction order is fixed.
#[inline]
pub fn l2_sq<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..LANES {
            let d = x[i] - y[i];
            acc[i] += d * d;
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        let d = *x - *y;
        s += d * d;
    }
    s
}

/// Index of the nearest row of `rows` (row-major, `dim` wide) and its
/// squared distance. Ties go to the lower index.
pub fn nearest_row<T: Real>(v: &[T], rows: &[T], dim: usize) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (i, row) in rows.chunks_exact(dim).enumerate() {
        let d = l2_sq(v, row);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Dot product with the same fixed eight-lane reduction as [`l2_sq`].
#[inline(always)]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..LANES {
            acc[i] += x[i] * y[i];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += *x * *y;
    }
    s
}

/// Rows of `queries` handled together against each centroid, so a centroid is
/// read once per block rather than once per query.
const QUERY_BLOCK: usize = 8;

/// Squared norms of the rows of `rows`.
pub fn row_norms<T: Real>(rows: &[T], dim: usize) -> Vec<T> {
    rows.chunks_exact(dim).map(|r| dot(r, r)).collect()
}

/// For every row of `queries`, the index of the nearest row of `centroids`.
///
/// Ranks by `‖c‖² − 2·q·c`, which orders centroids like the squared distance
/// without forming differences. `centroid_norms` must come from
/// [`row_norms`]. Ties go to the lower index.
pub fn assign_nearest<T: Real>(queries: &[T], centroids: &[T], centroid_norms: &[T], dim: usize, out: &mut [u32]) {
    debug_assert_eq!(queries.len() / dim, out.len());
    debug_assert_eq!(centroids.len() / dim, centroid_norms.len());
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime.
            unsafe { assign_avx2(queries, centroids, centroid_norms, dim, out) };
            return;
        }
    }
    assign_generic(queries, centroids, centroid_norms, dim, out);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn assign_avx2<T: Real>(queries: &[T], centroids: &[T], centroid_norms: &[T], dim: usize, out: &mut [u32]) {
    assign_generic(queries, centroids, centroid_norms, dim, out)
}

/// Below this width a per-row dot product is dominated by its final
/// reduction, so queries are transposed and processed one per lane instead.
const SMALL_DIM: usize = 32;
/// Centroids scored together in the small-width kernel.
const CENTROID_GROUP: usize = 4;

/// Lane-wise arithmetic is identical with or without wider vector units, so
/// both paths give bitwise-equal results.
#[inline(always)]
fn assign_generic<T: Real>(queries: &[T], centroids: &[T], centroid_norms: &[T], dim: usize, out: &mut [u32]) {
    if dim < SMALL_DIM {
        return assign_small(queries, centroids, centroid_norms, dim, out);
    }
    let two = T::lit(2.0);
    for (qblock, oblock) in queries.chunks(QUERY_BLOCK * dim).zip(out.chunks_mut(QUERY_BLOCK)) {
        let rows = qblock.len() / dim;
        let mut best = [(0u32, T::infinity()); QUERY_BLOCK];
        for (ci, (c, cn)) in centroids.chunks_exact(dim).zip(centroid_norms).enumerate() {
            let dots = if rows == QUERY_BLOCK {
                dot_rows::<T, QUERY_BLOCK>(qblock, c)
            } else {
                let mut d = [T::zero(); QUERY_BLOCK];
                for (q, slot) in qblock.chunks_exact(dim).zip(d.iter_mut()) {
                    *slot = dot(q, c);
                }
                d
            };
            for (b, d) in best[..rows].iter_mut().zip(dots) {
                let score = *cn - two * d;
                if score < b.1 {
                    *b = (ci as u32, score);
                }
            }
        }
        for (o, b) in oblock.iter_mut().zip(&best) {
            *o = b.0;
        }
    }
}

#[inline(always)]
fn assign_small<T: Real>(queries: &[T], centroids: &[T], centroid_norms: &[T], dim: usize, out: &mut [u32]) {
    let two = T::lit(2.0);
    let mut qt = vec![[T::zero(); LANES]; dim];
    let (groups, _) = centroid_norms.as_chunks::<CENTROID_GROUP>();
    let full = groups.len() * CENTROID_GROUP;
    for (qblock, oblock) in queries.chunks(LANES * dim).zip(out.chunks_mut(LANES)) {
        for lane in qt.iter_mut() {
            *lane = [T::zero(); LANES];
        }
        for (r, q) in qblock.chunks_exact(dim).enumerate() {
            for (lane, v) in qt.iter_mut().zip(q) {
                lane[r] = *v;
            }
        }
        let mut best = [T::infinity(); LANES];
        let mut best_idx = [0u32; LANES];
        for (g, (cg, ng)) in centroids[..full * dim].chunks_exact(CENTROID_GROUP * dim).zip(groups).enumerate() {
            let mut acc = [[T::zero(); LANES]; CENTROID_GROUP];
            for (d, qv) in qt.iter().enumerate() {
                for (j, a) in acc.iter_mut().enumerate() {
                    let cv = cg[j * dim + d];
                    for l in 0..LANES {
                        a[l] += qv[l] * cv;
                    }
                }
            }
            for (j, a) in acc.iter().enumerate() {
                let idx = (g * CENTROID_GROUP + j) as u32;
                for l in 0..LANES {
                    let score = ng[j] - two * a[l];
                    if score < best[l] {
                        best[l] = score;
                        best_idx[l] = idx;
                    }
                }
            }
        }
        for (ci, (c, cn)) in centroids[full * dim..].chunks_exact(dim).zip(&centroid_norms[full..]).enumerate() {
            let mut a = [T::zero(); LANES];
            for (qv, cv) in qt.iter().zip(c) {
                for l in 0..LANES {
                    a[l] += qv[l] * *cv;
                }
            }
            for l in 0..LANES {
                let score = *cn - two * a[l];
                if score < best[l] {
                    best[l] = score;
                    best_idx[l] = (full + ci) as u32;
                }
            }
        }
        for (o, b) in oblock.iter_mut().zip(&best_idx) {
            *o = *b;
        }
    }
}

/// Squared distances from `R` consecutive rows of `rows` to `c`; each equals
/// [`l2_sq`] of the same pair bit for bit.
#[inline(always)]
pub fn l2_rows<T: Real, const R: usize>(rows: &[T], c: &[T]) -> [T; R] {
    let dim = c.len();
    let (cc, ctail) = c.as_chunks::<LANES>();
    let qs: [(&[[T; LANES]], &[T]); R] = std::array::from_fn(|r| rows[r * dim..(r + 1) * dim].as_chunks::<LANES>());
    for q in &qs {
        assert_eq!(q.0.len(), cc.len());
    }
    let mut acc = [[T::zero(); LANES]; R];
    for (k, cv) in cc.iter().enumerate() {
        for (a, q) in acc.iter_mut().zip(&qs) {
            let qv = &q.0[k];
            for i in 0..LANES {
                let d = qv[i] - cv[i];
                a[i] += d * d;
            }
        }
    }
    let mut out = [T::zero(); R];
    for ((a, q), o) in acc.iter().zip(&qs).zip(out.iter_mut()) {
        let mut s = ((a[0] + a[4]) + (a[1] + a[5])) + ((a[2] + a[6]) + (a[3] + a[7]));
        for (x, y) in q.1.iter().zip(ctail) {
            let d = *x - *y;
            s += d * d;
        }
        *o = s;
    }
    out
}

/// Squared distance from every row of `rows` to `c`.
pub fn l2_to_all<T: Real>(rows: &[T], c: &[T], out: &mut [T]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime.
            unsafe { l2_to_all_avx2(rows, c, out) };
            return;
        }
    }
    l2_to_all_generic(rows, c, out);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn l2_to_all_avx2<T: Real>(rows: &[T], c: &[T], out: &mut [T]) {
    l2_to_all_generic(rows, c, out)
}

#[inline(always)]
fn l2_to_all_generic<T: Real>(rows: &[T], c: &[T], out: &mut [T]) {
    let dim = c.len();
    for (block, o) in rows.chunks(QUERY_BLOCK * dim).zip(out.chunks_mut(QUERY_BLOCK)) {
        if o.len() == QUERY_BLOCK {
            o.copy_from_slice(&l2_rows::<T, QUERY_BLOCK>(block, c));
        } else {
            for (r, slot) in block.chunks_exact(dim).zip(o.iter_mut()) {
                *slot = l2_sq(r, c);
            }
        }
    }
}

/// `R` dot products of consecutive rows of `rows` with `c`, interleaved so the
/// accumulators form independent dependency chains. Each result equals
/// [`dot`] of the same pair bit for bit.
#[inline(always)]
fn dot_rows<T: Real, const R: usize>(rows: &[T], c: &[T]) -> [T; R] {
    let dim = c.len();
    let (cc, ctail) = c.as_chunks::<LANES>();
    let qs: [(&[[T; LANES]], &[T]); R] = std::array::from_fn(|r| rows[r * dim..(r + 1) * dim].as_chunks::<LANES>());
    for q in &qs {
        assert_eq!(q.0.len(), cc.len());
    }
    let mut acc = [[T::zero(); LANES]; R];
    for (k, cv) in cc.iter().enumerate() {
        for (a, q) in acc.iter_mut().zip(&qs) {
            let qv = &q.0[k];
            for i in 0..LANES {
                a[i] += qv[i] * cv[i];
            }
        }
    }
    let mut out = [T::zero(); R];
    for ((a, q), o) in acc.iter().zip(&qs).zip(out.iter_mut()) {
        let mut s = ((a[0] + a[4]) + (a[1] + a[5])) + ((a[2] + a[6]) + (a[3] + a[7]));
        for (x, y) in q.1.iter().zip(ctail) {
            s += *x * *y;
        }
        *o = s;
    }
    out
}
