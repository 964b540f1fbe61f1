use crate::error::{ensure, Result};
use crate::frame::{Flow, Frame};
use crate::raster::{resize_bilinear, sample_bilinear, to_grayscale};
use crate::scalar::Real;

use super::farneback::{farneback_flow, upscale_flow, FlowParams};

/// Backward warp: `out(x, y) = frame(x − dx, y − dy)`, bilinear, edge-clamped.
pub fn warp_bilinear<T: Real>(frame: &Frame<T>, flow: &Flow<T>) -> Result<Frame<T>> {
    ensure!(
        frame.width == flow.width && frame.height == flow.height,
        "warp size mismatch: frame {}x{} vs flow {}x{}",
        frame.width,
        frame.height,
        flow.width,
        flow.height
    );
    let (w, h, c) = (frame.width, frame.height, frame.channels);
    let mut out = frame.clone();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let sx = T::lit(x as f64) - flow.dx[i];
            let sy = T::lit(y as f64) - flow.dy[i];
            for ch in 0..c {
                out.data[i * c + ch] = sample_bilinear(&frame.data, w, h, c, ch, sx, sy);
            }
        }
    }
    Ok(out)
}

/// Flow computed on 2× downscaled frames, then upscaled back with
/// displacements doubled. Colour frames are converted to grayscale first.
pub fn half_res_flow<T: Real>(prev: &Frame<T>, next: &Frame<T>, params: &FlowParams) -> Result<Flow<T>> {
    ensure!(
        prev.same_shape(next),
        "flow frame size mismatch: {} vs {}",
        prev.shape_string(),
        next.shape_string()
    );
    ensure!(
        prev.width % 2 == 0 && prev.height % 2 == 0,
        "half-resolution flow needs even dimensions, got {}x{}",
        prev.width,
        prev.height
    );
    let (hw, hh) = (prev.width / 2, prev.height / 2);
    let small_prev = resize_bilinear(&gray(prev)?, hw, hh)?;
    let small_next = resize_bilinear(&gray(next)?, hw, hh)?;
    let flow = farneback_flow(&small_prev, &small_next, params)?;
    Ok(upscale_half_res(&flow))
}

/// Doubles a half-resolution flow field in size and displacement.
pub fn upscale_half_res<T: Real>(flow: &Flow<T>) -> Flow<T> {
    upscale_flow(flow, flow.width * 2, flow.height * 2)
}

pub(crate) fn gray<T: Real>(f: &Frame<T>) -> Result<Frame<T>> {
    if f.channels == 1 {
        Ok(f.clone())
    } else {
        to_grayscale(f)
    }
}
