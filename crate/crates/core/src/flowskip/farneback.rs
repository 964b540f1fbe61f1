//! Dense optical flow by polynomial expansion (Farnebäck).
//!
//! Each pixel's neighbourhood is approximated by a quadratic
//! `f(p) ≈ pᵀAp + bᵀp + c`, fitted by Gaussian-weighted least squares. If the
//! next frame is the previous one shifted by `d`, then `b₂ = b₁ − 2A·d`, so the
//! displacement follows from the change in the linear coefficient. Estimates
//! are pooled over a window, refined iteratively, and computed coarse to fine
//! over an image pyramid.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::frame::{Flow, Frame};
use crate::raster::{convolve_separable, gaussian_kernel, resize_plane_data};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowParams {
    #[serde(default = "defaults::levels")]
    pub pyramid_levels: usize,
    #[serde(default = "defaults::scale")]
    pub pyramid_scale: f64,
    #[serde(default = "defaults::window")]
    pub window_size: usize,
    #[serde(default = "defaults::iterations")]
    pub iterations: usize,
    /// Radius of the polynomial-expansion neighbourhood.
    #[serde(default = "defaults::poly_n")]
    pub poly_n: usize,
    #[serde(default = "defaults::poly_sigma")]
    pub poly_sigma: f64,
}

mod defaults {
    pub fn levels() -> usize {
        3
    }
    pub fn scale() -> f64 {
        0.5
    }
    pub fn window() -> usize {
        15
    }
    pub fn iterations() -> usize {
        3
    }
    pub fn poly_n() -> usize {
        5
    }
    pub fn poly_sigma() -> f64 {
        1.1
    }
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            pyramid_levels: defaults::levels(),
            pyramid_scale: defaults::scale(),
            window_size: defaults::window(),
            iterations: defaults::iterations(),
            poly_n: defaults::poly_n(),
            poly_sigma: defaults::poly_sigma(),
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.pyramid_levels >= 1, "pyramid_levels must be >= 1");
        ensure!(
            self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0,
            "pyramid_scale must be in (0, 1), got {}",
            self.pyramid_scale
        );
        ensure!(self.window_size % 2 == 1, "window_size must be odd, got {}", self.window_size);
        ensure!(self.poly_n % 2 == 1, "poly_n must be odd, got {}", self.poly_n);
        ensure!(self.iterations >= 1, "iterations must be >= 1");
        ensure!(self.poly_sigma > 0.0, "poly_sigma must be > 0");
        Ok(())
    }
}

/// Pyramid levels are not built below this many pixels on the short side.
const MIN_LEVEL_SIZE: usize = 32;

/// Weights damping the contribution of the outermost pixels.
const BORDER_WEIGHTS: [f64; 5] = [0.14, 0.14, 0.4472, 0.4472, 0.4472];

/// Absolute regularizer added to the 2×2 determinant, in 8-bit intensity units.
const DET_EPSILON: f64 = 1e-3;

/// Internal intensity scale, matching 8-bit images so the regularizer has its
/// canonical strength.
const INTENSITY_SCALE: f64 = 255.0;

/// Flow from `prev` to `next`: a feature at `p` in `prev` is found at
/// `p + flow(p)` in `next`. Both frames must be single-channel.
pub fn farneback_flow<T: Real>(prev: &Frame<T>, next: &Frame<T>, params: &FlowParams) -> Result<Flow<T>> {
    params.validate()?;
    ensure!(
        prev.channels == 1 && next.channels == 1,
        "flow needs grayscale frames, got {} and {} channels",
        prev.channels,
        next.channels
    );
    ensure!(
        prev.same_shape(next),
        "flow frame size mismatch: {} vs {}",
        prev.shape_string(),
        next.shape_string()
    );
    ensure!(
        prev.width >= params.window_size && prev.height >= params.window_size,
        "frame {}x{} is smaller than the {} px flow window",
        prev.width,
        prev.height,
        params.window_size
    );

    let (w0, h0) = (prev.width, prev.height);
    let k255 = T::lit(INTENSITY_SCALE);
    let p0: Vec<T> = prev.data.iter().map(|v| *v * k255).collect();
    let n0: Vec<T> = next.data.iter().map(|v| *v * k255).collect();

    let mut levels = 1;
    while levels < params.pyramid_levels {
        let s = params.pyramid_scale.powi(levels as i32);
        if ((w0.min(h0)) as f64 * s).round() < MIN_LEVEL_SIZE as f64 {
            break;
        }
        levels += 1;
    }

    let expansion = PolyExpansion::<T>::new(params.poly_n, params.poly_sigma);
    let mut flow: Option<Flow<T>> = None;
    for k in (0..levels).rev() {
        let scale = params.pyramid_scale.powi(k as i32);
        let (w, h) = (
            ((w0 as f64 * scale).round() as usize).max(1),
            ((h0 as f64 * scale).round() as usize).max(1),
        );
        let (pl, nl) = if k == 0 {
            (p0.clone(), n0.clone())
        } else {
            // Anti-alias before decimating.
            let sigma = (1.0 / scale - 1.0) * 0.5;
            let radius = ((sigma * 5.0).round() as usize | 1) / 2;
            let g = gaussian_kernel::<T>(sigma, radius.max(1));
            let pb = convolve_separable(&p0, w0, h0, 1, &g, &g);
            let nb = convolve_separable(&n0, w0, h0, 1, &g, &g);
            (
                resize_plane_data(&pb, w0, h0, 1, w, h),
                resize_plane_data(&nb, w0, h0, 1, w, h),
            )
        };

        let mut current = match flow.take() {
            None => Flow::zeros(w, h),
            Some(coarse) => upscale_flow(&coarse, w, h),
        };
        let r0 = expansion.expand(&pl, w, h);
        let r1 = expansion.expand(&nl, w, h);
        for _ in 0..params.iterations {
            let m = update_matrices(&r0, &r1, &current, w, h);
            let m = box_blur_fields(&m, w, h, params.window_size);
            solve_flow(&m, &mut current);
        }
        flow = Some(current);
    }
    Ok(flow.expect("at least one pyramid level"))
}

/// Resizes a flow field to `w × h`, scaling displacements by the size ratio.
pub(crate) fn upscale_flow<T: Real>(flow: &Flow<T>, w: usize, h: usize) -> Flow<T> {
    let fx = T::lit(w as f64 / flow.width as f64);
    let fy = T::lit(h as f64 / flow.height as f64);
    let dx = resize_plane_data(&flow.dx, flow.width, flow.height, 1, w, h);
    let dy = resize_plane_data(&flow.dy, flow.width, flow.height, 1, w, h);
    Flow {
        width: w,
        height: h,
        dx: dx.into_iter().map(|v| v * fx).collect(),
        dy: dy.into_iter().map(|v| v * fy).collect(),
    }
}

/// Per-pixel quadratic coefficients `[b_x, b_y, a_xx, a_yy, a_xy]`, where
/// `f(x, y) ≈ a_xx·x² + a_yy·y² + a_xy·xy + b_x·x + b_y·y + c`.
type Coeffs<T> = [T; 5];

struct PolyExpansion<T> {
    /// Gaussian applicability `g(i)` for `i` in `-n..=n`.
    g: Vec<T>,
    xg: Vec<T>,
    xxg: Vec<T>,
    /// Normal-equation solution factors.
    inv_b: T,
    inv_axy: T,
    /// Rows of the 3×3 inverse for `(c, a_xx, a_yy)` restricted to the two
    /// quadratic terms.
    axx_row: [T; 3],
    ayy_row: [T; 3],
}

impl<T: Real> PolyExpansion<T> {
    fn new(n: usize, sigma: f64) -> Self {
        let r = n as isize;
        let g: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
        let sum: f64 = g.iter().sum();
        let g: Vec<f64> = g.into_iter().map(|v| v / sum).collect();
        let offs: Vec<f64> = (-r..=r).map(|i| i as f64).collect();
        let m0: f64 = g.iter().sum();
        let m2: f64 = g.iter().zip(&offs).map(|(w, x)| w * x * x).sum();
        let m4: f64 = g.iter().zip(&offs).map(|(w, x)| w * x.powi(4)).sum();

        // Gram matrix of {1, x², y²} under the separable weights.
        let gram = [
            [m0 * m0, m0 * m2, m0 * m2],
            [m0 * m2, m0 * m4, m2 * m2],
            [m0 * m2, m2 * m2, m0 * m4],
        ];
        let inv = invert3(gram);

        Self {
            xg: g.iter().zip(&offs).map(|(w, x)| T::lit(w * x)).collect(),
            xxg: g.iter().zip(&offs).map(|(w, x)| T::lit(w * x * x)).collect(),
            g: g.iter().map(|w| T::lit(*w)).collect(),
            inv_b: T::lit(1.0 / (m0 * m2)),
            inv_axy: T::lit(1.0 / (m2 * m2)),
            axx_row: inv[1].map(T::lit),
            ayy_row: inv[2].map(T::lit),
        }
    }

    fn expand(&self, img: &[T], w: usize, h: usize) -> Vec<Coeffs<T>> {
        let n = (self.g.len() / 2) as isize;
        // Row pass: zeroth, first and second x-moments.
        let mut rows = vec![[T::zero(); 3]; w * h];
        for y in 0..h {
            let line = &img[y * w..(y + 1) * w];
            for x in 0..w {
                let mut acc = [T::zero(); 3];
                for (k, i) in (-n..=n).enumerate() {
                    let v = line[(x as isize + i).clamp(0, w as isize - 1) as usize];
                    acc[0] += self.g[k] * v;
                    acc[1] += self.xg[k] * v;
                    acc[2] += self.xxg[k] * v;
                }
                rows[y * w + x] = acc;
            }
        }
        let mut out = vec![[T::zero(); 5]; w * h];
        for y in 0..h {
            for x in 0..w {
                let (mut r1, mut rx, mut ry, mut rxx, mut ryy, mut rxy) =
                    (T::zero(), T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
                for (k, j) in (-n..=n).enumerate() {
                    let s = rows[(y as isize + j).clamp(0, h as isize - 1) as usize * w + x];
                    r1 += self.g[k] * s[0];
                    rx += self.g[k] * s[1];
                    rxx += self.g[k] * s[2];
                    ry += self.xg[k] * s[0];
                    rxy += self.xg[k] * s[1];
                    ryy += self.xxg[k] * s[0];
                }
                let axx = self.axx_row[0] * r1 + self.axx_row[1] * rxx + self.axx_row[2] * ryy;
                let ayy = self.ayy_row[0] * r1 + self.ayy_row[1] * rxx + self.ayy_row[2] * ryy;
                out[y * w + x] = [rx * self.inv_b, ry * self.inv_b, axx, ayy, rxy * self.inv_axy];
            }
        }
        out
    }
}

fn invert3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut inv = [[0.0; 3]; 3];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            // Cofactor of m[j][i].
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            *v = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
        }
    }
    inv
}

/// Per-pixel `[G11, G12, G22, h1, h2]` of the normal equations `G·d = h`.
fn update_matrices<T: Real>(r0: &[Coeffs<T>], r1: &[Coeffs<T>], flow: &Flow<T>, w: usize, h: usize) -> Vec<[T; 5]> {
    let half = T::lit(0.5);
    let quarter = T::lit(0.25);
    let border: Vec<T> = BORDER_WEIGHTS.iter().map(|v| T::lit(*v)).collect();
    let edge_weight = |i: usize, len: usize| -> T {
        let d = i.min(len - 1 - i);
        if d < border.len() {
            border[d]
        } else {
            T::one()
        }
    };
    let mut out = vec![[T::zero(); 5]; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (dx, dy) = (flow.dx[i], flow.dy[i]);
            let fx = T::lit(x as f64) + dx;
            let fy = T::lit(y as f64) + dy;
            let inside = fx >= T::zero()
                && fy >= T::zero()
                && fx <= T::lit((w - 1) as f64)
                && fy <= T::lit((h - 1) as f64);
            let c0 = r0[i];
            let c1 = if inside {
                sample_coeffs(r1, w, h, fx, fy)
            } else {
                // No correspondence: keep the current estimate.
                [c0[0], c0[1], c0[2], c0[3], c0[4]]
            };
            let a11 = (c0[2] + c1[2]) * half;
            let a22 = (c0[3] + c1[3]) * half;
            let a12 = (c0[4] + c1[4]) * quarter;
            let mut b1 = (c0[0] - c1[0]) * half;
            let mut b2 = (c0[1] - c1[1]) * half;
            if !inside {
                b1 = T::zero();
                b2 = T::zero();
            }
            b1 += a11 * dx + a12 * dy;
            b2 += a12 * dx + a22 * dy;
            let s = edge_weight(x, w) * edge_weight(y, h);
            out[i] = [
                (a11 * a11 + a12 * a12) * s,
                (a11 + a22) * a12 * s,
                (a22 * a22 + a12 * a12) * s,
                (a11 * b1 + a12 * b2) * s,
                (a12 * b1 + a22 * b2) * s,
            ];
        }
    }
    out
}

fn sample_coeffs<T: Real>(r: &[Coeffs<T>], w: usize, h: usize, x: T, y: T) -> Coeffs<T> {
    let x0f = x.floor();
    let y0f = y.floor();
    let (ax, ay) = (x - x0f, y - y0f);
    let x0 = x0f.to_usize().unwrap_or(0).min(w - 1);
    let y0 = y0f.to_usize().unwrap_or(0).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let (w00, w01) = ((T::one() - ax) * (T::one() - ay), ax * (T::one() - ay));
    let (w10, w11) = ((T::one() - ax) * ay, ax * ay);
    let (p00, p01, p10, p11) = (r[y0 * w + x0], r[y0 * w + x1], r[y1 * w + x0], r[y1 * w + x1]);
    std::array::from_fn(|k| p00[k] * w00 + p01[k] * w01 + p10[k] * w10 + p11[k] * w11)
}

/// Box average of each field over a `size × size` window, edges clamped.
fn box_blur_fields<T: Real>(m: &[[T; 5]], w: usize, h: usize, size: usize) -> Vec<[T; 5]> {
    let r = (size / 2) as isize;
    let inv = T::lit(1.0 / size as f64);
    let mut tmp = vec![[T::zero(); 5]; w * h];
    for y in 0..h {
        let row = &m[y * w..(y + 1) * w];
        let at = |x: isize| row[x.clamp(0, w as isize - 1) as usize];
        let mut acc = [T::zero(); 5];
        for i in -r..=r {
            add5(&mut acc, &at(i));
        }
        for x in 0..w {
            tmp[y * w + x] = acc.map(|v| v * inv);
            sub5(&mut acc, &at(x as isize - r));
            add5(&mut acc, &at(x as isize + r + 1));
        }
    }
    let mut out = vec![[T::zero(); 5]; w * h];
    for x in 0..w {
        let at = |y: isize| tmp[y.clamp(0, h as isize - 1) as usize * w + x];
        let mut acc = [T::zero(); 5];
        for i in -r..=r {
            add5(&mut acc, &at(i));
        }
        for y in 0..h {
            out[y * w + x] = acc.map(|v| v * inv);
            sub5(&mut acc, &at(y as isize - r));
            add5(&mut acc, &at(y as isize + r + 1));
        }
    }
    out
}

#[inline]
fn add5<T: Real>(acc: &mut [T; 5], v: &[T; 5]) {
    for k in 0..5 {
        acc[k] += v[k];
    }
}

#[inline]
fn sub5<T: Real>(acc: &mut [T; 5], v: &[T; 5]) {
    for k in 0..5 {
        acc[k] -= v[k];
    }
}

fn solve_flow<T: Real>(m: &[[T; 5]], flow: &mut Flow<T>) {
    let eps = T::lit(DET_EPSILON);
    for (i, g) in m.iter().enumerate() {
        let det = g[0] * g[2] - g[1] * g[1] + eps;
        flow.dx[i] = (g[2] * g[3] - g[1] * g[4]) / det;
        flow.dy[i] = (g[0] * g[4] - g[1] * g[3]) / det;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse3_is_inverse() {
        let m = [[4.0, 1.0, 2.0], [1.0, 5.0, 0.5], [2.0, 0.5, 6.0]];
        let inv = invert3(m);
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| m[i][k] * inv[k][j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn expansion_recovers_exact_quadratic() {
        let (w, h) = (21, 21);
        let f = |x: f64, y: f64| 0.3 * x * x - 0.2 * y * y + 0.15 * x * y + 1.5 * x - 0.7 * y + 4.0;
        let img: Vec<f64> = (0..h)
            .flat_map(|y| (0..w).map(move |x| f(x as f64 - 10.0, y as f64 - 10.0)))
            .collect();
        let e = PolyExpansion::<f64>::new(5, 1.1);
        let r = e.expand(&img, w, h);
        // At the centre the local origin coincides with the polynomial's.
        let c = r[10 * w + 10];
        let want = [1.5, -0.7, 0.3, -0.2, 0.15];
        for k in 0..5 {
            assert!((c[k] - want[k]).abs() < 1e-9, "coef {k}: {} vs {}", c[k], want[k]);
        }
    }

    #[test]
    fn param_validation() {
        let bad = |f: fn(&mut FlowParams)| {
            let mut p = FlowParams::default();
            f(&mut p);
            p.validate().is_err()
        };
        assert!(bad(|p| p.window_size = 14));
        assert!(bad(|p| p.poly_n = 4));
        assert!(bad(|p| p.pyramid_scale = 1.0));
        assert!(bad(|p| p.pyramid_levels = 0));
        assert!(FlowParams::default().validate().is_ok());
    }

    #[test]
    fn rejects_color_mismatch_and_tiny() {
        let p = FlowParams::default();
        let g = Frame::filled(32, 32, 1, 0.5f32).unwrap();
        let c = Frame::filled(32, 32, 3, 0.5f32).unwrap();
        assert!(farneback_flow(&g, &c, &p).is_err());
        let g2 = Frame::filled(32, 31, 1, 0.5f32).unwrap();
        assert!(farneback_flow(&g, &g2, &p).is_err());
        let tiny = Frame::filled(10, 10, 1, 0.5f32).unwrap();
        assert!(farneback_flow(&tiny, &tiny, &p).is_err());
    }
}
