//! Primitive image operations.

use crate::error::{ensure, Result};
use crate::frame::Frame;
use crate::scalar::Real;

/// ITU-R BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Samples one channel of an interleaved raster at a continuous pixel
/// coordinate, where integer coordinates are pixel centers. Coordinates are
/// clamped to the image edge.
#[inline]
pub fn sample_bilinear<T: Real>(
    data: &[T],
    width: usize,
    height: usize,
    channels: usize,
    c: usize,
    x: T,
    y: T,
) -> T {
    let max_x = T::lit((width - 1) as f64);
    let max_y = T::lit((height - 1) as f64);
    let x = x.max(T::zero()).min(max_x);
    let y = y.max(T::zero()).min(max_y);
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let x0 = x0.to_usize().unwrap_or(0);
    let y0 = y0.to_usize().unwrap_or(0);
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let px = |xx: usize, yy: usize| data[(yy * width + xx) * channels + c];
    let top = px(x0, y0) + (px(x1, y0) - px(x0, y0)) * fx;
    let bottom = px(x0, y1) + (px(x1, y1) - px(x0, y1)) * fx;
    top + (bottom - top) * fy
}

/// Bilinear resize with half-pixel-center alignment and edge clamping.
pub fn resize_bilinear<T: Real>(img: &Frame<T>, out_w: usize, out_h: usize) -> Result<Frame<T>> {
    ensure!(out_w >= 1 && out_h >= 1, "resize target must be positive, got {out_w}x{out_h}");
    if out_w == img.width && out_h == img.height {
        return Ok(img.clone());
    }
    let data = resize_plane_data(&img.data, img.width, img.height, img.channels, out_w, out_h);
    Ok(Frame {
        width: out_w,
        height: out_h,
        channels: img.channels,
        data,
        frame_id: img.frame_id,
        capture_timestamp: img.capture_timestamp,
    })
}

/// Resizes raw interleaved data. Used for frames and for flow components.
pub(crate) fn resize_plane_data<T: Real>(
    data: &[T],
    width: usize,
    height: usize,
    channels: usize,
    out_w: usize,
    out_h: usize,
) -> Vec<T> {
    let sx = width as f64 / out_w as f64;
    let sy = height as f64 / out_h as f64;
    let half = T::lit(0.5);
    let mut out = Vec::with_capacity(out_w * out_h * channels);
    for oy in 0..out_h {
        let y = T::lit((oy as f64 + 0.5) * sy) - half;
        for ox in 0..out_w {
            let x = T::lit((ox as f64 + 0.5) * sx) - half;
            for c in 0..channels {
                out.push(sample_bilinear(data, width, height, channels, c, x, y));
            }
        }
    }
    out
}

pub fn to_grayscale<T: Real>(img: &Frame<T>) -> Result<Frame<T>> {
    ensure!(img.channels == 3, "grayscale conversion needs 3 channels, got {}", img.channels);
    let [wr, wg, wb] = LUMA_WEIGHTS.map(T::lit);
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| (wr * p[0] + wg * p[1] + wb * p[2]).min(T::one()).max(T::zero()))
        .collect();
    Ok(Frame {
        width: img.width,
        height: img.height,
        channels: 1,
        data,
        frame_id: img.frame_id,
        capture_timestamp: img.capture_timestamp,
    })
}

/// Separable Gaussian blur with edge clamping, applied per channel.
pub fn gaussian_blur<T: Real>(img: &Frame<T>, sigma: f64) -> Frame<T> {
    if sigma <= 0.0 {
        return img.clone();
    }
    let kernel = gaussian_kernel::<T>(sigma, (3.0 * sigma).ceil() as usize);
    let mut out = img.clone();
    out.data = convolve_separable(&img.data, img.width, img.height, img.channels, &kernel, &kernel);
    out
}

/// Normalized Gaussian taps for offsets `-radius..=radius`.
pub(crate) fn gaussian_kernel<T: Real>(sigma: f64, radius: usize) -> Vec<T> {
    let r = radius as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| T::lit(t / sum)).collect()
}

/// Horizontal pass with `kx` then vertical pass with `ky`, clamping at edges.
pub(crate) fn convolve_separable<T: Real>(
    data: &[T],
    width: usize,
    height: usize,
    channels: usize,
    kx: &[T],
    ky: &[T],
) -> Vec<T> {
    let rx = (kx.len() / 2) as isize;
    let ry = (ky.len() / 2) as isize;
    let mut tmp = vec![T::zero(); data.len()];
    for y in 0..height {
        let row = &data[y * width * channels..(y + 1) * width * channels];
        for x in 0..width {
            for c in 0..channels {
                let mut acc = T::zero();
                for (k, w) in kx.iter().enumerate() {
                    let xx = (x as isize + k as isize - rx).clamp(0, width as isize - 1) as usize;
                    acc += *w * row[xx * channels + c];
                }
                tmp[(y * width + x) * channels + c] = acc;
            }
        }
    }
    let mut out = vec![T::zero(); data.len()];
    let stride = width * channels;
    for y in 0..height {
        for (k, w) in ky.iter().enumerate() {
            let yy = (y as isize + k as isize - ry).clamp(0, height as isize - 1) as usize;
            let src = &tmp[yy * stride..(yy + 1) * stride];
            let dst = &mut out[y * stride..(y + 1) * stride];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += *w * *s;
            }
        }
    }
    out
}

/// Peak signal-to-noise ratio in dB for unit-range images, optionally
/// restricted to pixels at least `border` away from the edges.
pub fn psnr<T: Real>(a: &Frame<T>, b: &Frame<T>, border: usize) -> Result<f64> {
    ensure!(a.same_shape(b), "psnr shape mismatch: {} vs {}", a.shape_string(), b.shape_string());
    let (mut se, mut n) = (0.0f64, 0usize);
    for y in border..a.height.saturating_sub(border) {
        for x in border..a.width.saturating_sub(border) {
            for c in 0..a.channels {
                let d = a.at(x, y, c).as_f64() - b.at(x, y, c).as_f64();
                se += d * d;
                n += 1;
            }
        }
    }
    ensure!(n > 0, "psnr border {border} leaves no pixels");
    let mse = se / n as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (1.0 / mse).log10() })
}
