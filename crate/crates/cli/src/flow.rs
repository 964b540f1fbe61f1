//! `streamskip flow demo`: estimate flow between two frames, warp, and print
//! the skip-schedule throughput table.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use streamskip::flowskip::{farneback_flow, half_res_flow, theoretical_ms_per_frame, warp_bilinear, FlowResolution};
use streamskip::io::{read_ppm, write_ppm};
use streamskip::raster::to_grayscale;
use streamskip::synth::{synthetic_frames, Pattern, SyntheticSpec};
use streamskip::{FlowField, FlowParams, Frame, FrameImage, Seed};

use crate::error::{CliError, CliResult, Classify};

/// Pixels excluded at each edge when averaging the flow.
pub const DEMO_BORDER: usize = 16;

#[derive(Debug, Clone)]
pub enum FlowInput {
    Files(PathBuf, PathBuf),
    /// Band-limited noise of `size × size` and its copy shifted by `(dx, dy)`.
    Shift { dx: f64, dy: f64, size: usize, seed: Seed },
}

#[derive(Debug, Clone)]
pub struct FlowDemo {
    pub mean: (f64, f64),
    pub mean_magnitude: f64,
    pub flow: FlowField,
    pub warped: FrameImage,
}

pub fn demo_frames(input: &FlowInput) -> CliResult<(FrameImage, FrameImage)> {
    match input {
        FlowInput::Files(a, b) => Ok((read_frame(a)?, read_frame(b)?)),
        FlowInput::Shift { dx, dy, size, seed } => {
            let spec = SyntheticSpec {
                pattern: Pattern::BandlimitedNoise,
                motion: (*dx, *dy),
                count: 2,
                width: *size,
                height: *size,
                seed: *seed,
            };
            let mut frames = synthetic_frames(&spec).usage_err()?;
            let next = frames.pop().expect("two frames");
            Ok((frames.pop().expect("two frames"), next))
        }
    }
}

fn read_frame(path: &Path) -> CliResult<FrameImage> {
    let file = File::open(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    read_ppm(BufReader::new(file)).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// Flow from `prev` to `next` and `prev` warped along it.
pub fn flow_demo(prev: &FrameImage, next: &FrameImage, params: &FlowParams, res: FlowResolution) -> CliResult<FlowDemo> {
    if !prev.same_shape(next) {
        return Err(CliError::usage(format!(
            "frame sizes differ: {} vs {}",
            prev.shape_string(),
            next.shape_string()
        )));
    }
    let flow = match res {
        FlowResolution::Full => farneback_flow(&gray(prev)?, &gray(next)?, params).usage_err()?,
        FlowResolution::Half => half_res_flow(prev, next, params).usage_err()?,
    };
    let warped = warp_bilinear(prev, &flow).runtime_err()?;
    Ok(FlowDemo {
        mean: flow.interior_mean(DEMO_BORDER),
        mean_magnitude: flow.mean_magnitude(),
        flow,
        warped,
    })
}

fn gray(f: &FrameImage) -> CliResult<FrameImage> {
    if f.channels == 1 {
        Ok(f.clone())
    } else {
        to_grayscale(f).usage_err()
    }
}

/// Per-pixel flow magnitude scaled so the largest is white.
pub fn magnitude_image(flow: &FlowField) -> FrameImage {
    let mags: Vec<f32> = flow.dx.iter().zip(&flow.dy).map(|(a, b)| a.hypot(*b)).collect();
    let peak = mags.iter().copied().fold(0.0f32, f32::max);
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    Frame::new(flow.width, flow.height, 1, mags.into_iter().map(|m| m * scale).collect()).expect("sized from flow")
}

pub fn write_demo(demo: &FlowDemo, dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
    let save = |name: &str, f: &FrameImage| -> CliResult<()> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        write_ppm(f, &mut w).runtime_err()?;
        w.flush().runtime_err()
    };
    save("warped.ppm", &demo.warped)?;
    save("flow_magnitude.ppm", &magnitude_image(&demo.flow))
}

/// Markdown table of ms/frame and FPS for skip intervals `1..=max_n`.
pub fn skip_table(unet_ms: f64, warp_ms: f64, max_n: usize) -> CliResult<String> {
    if max_n == 0 {
        return Err(CliError::usage("--max-n must be >= 1"));
    }
    let mut out = format!("Skip schedule, UNet {unet_ms} ms, warp {warp_ms} ms\n\n");
    out.push_str("| N | Pattern | Theoretical ms/frame | FPS |\n|---|---|---|---|\n");
    for n in 1..=max_n {
        let ms = theoretical_ms_per_frame(unet_ms, warp_ms, n).usage_err()?;
        let pattern: String = std::iter::once('U').chain(std::iter::repeat_n('W', n - 1)).collect();
        let fps = if ms > 0.0 { format!("{:.1}", 1000.0 / ms) } else { "inf".into() };
        out.push_str(&format!("| {n} | {pattern} | {ms:.2} | {fps} |\n"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_has_paper_row() {
        let t = skip_table(51.7, 6.6, 5).unwrap();
        assert!(t.contains("| 3 | UWW | 21.63 | 46.2 |"), "{t}");
        assert_eq!(t.lines().filter(|l| l.starts_with("| ") && !l.starts_with("| N")).count(), 5);
    }

    #[test]
    fn identical_frames_have_no_motion() {
        let input = FlowInput::Shift {
            dx: 0.0,
            dy: 0.0,
            size: 64,
            seed: Seed(3),
        };
        let (a, b) = demo_frames(&input).unwrap();
        let d = flow_demo(&a, &b, &FlowParams::default(), FlowResolution::Full).unwrap();
        assert!(d.mean_magnitude < 0.05, "{}", d.mean_magnitude);
    }

    #[test]
    fn magnitude_image_is_normalized() {
        let mut f = FlowField::constant(4, 2, 0.0, 0.0);
        f.dx[3] = 3.0;
        f.dy[3] = 4.0;
        f.dx[1] = 1.0;
        let img = magnitude_image(&f);
        assert_eq!(img.data[3], 1.0);
        assert_eq!(img.data[1], 0.2);
        assert_eq!(img.data[0], 0.0);
    }
}
