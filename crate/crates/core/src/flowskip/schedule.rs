//! Running the full chain every `n`-th frame and warping in between.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backend::{ms_to_duration, sleep_until};
use crate::bench::TimingStats;
use crate::engine::{Pipeline, PipelineReport, StageReport, WARMUP_FRAMES};
use crate::error::{ensure, Error, Result};
use crate::frame::Frame;
use crate::scalar::Real;
use crate::source::{FrameSink, FrameSource};

use super::farneback::{farneback_flow, FlowParams};
use super::warp::{gray, half_res_flow, warp_bilinear};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowResolution {
    Full,
    Half,
}

impl FromStr for FlowResolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(FlowResolution::Full),
            "half" => Ok(FlowResolution::Half),
            other => Err(Error::InvalidArgument(format!("flow resolution must be full or half, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipSchedule {
    /// The chain runs on every `n`-th frame; `n = 1` disables skipping.
    pub n: usize,
    pub flow_resolution: FlowResolution,
}

impl SkipSchedule {
    pub fn new(n: usize, flow_resolution: FlowResolution) -> Result<Self> {
        ensure!(n >= 1, "skip interval must be >= 1");
        Ok(Self { n, flow_resolution })
    }

    pub fn kind_of(&self, index: usize) -> FrameKind {
        if index % self.n == 0 {
            FrameKind::Unet
        } else {
            FrameKind::Warp
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    Unet,
    Warp,
}

impl fmt::Display for FrameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrameKind::Unet => "unet",
            FrameKind::Warp => "warp",
        })
    }
}

/// Synthesizes a skipped frame from the previous output and the motion
/// between the previous and current inputs.
pub trait FrameWarper<T>: Send {
    fn warp(&mut self, prev_out: &Frame<T>, prev_in: &Frame<T>, cur_in: &Frame<T>) -> Result<Frame<T>>;
}

/// Optical-flow warper, optionally padded to a minimum latency so it can
/// model a slower device.
#[derive(Debug, Clone)]
pub struct FlowWarper {
    pub params: FlowParams,
    pub resolution: FlowResolution,
    pub min_latency_ms: f64,
}

impl FlowWarper {
    pub fn new(params: FlowParams, resolution: FlowResolution) -> Self {
        Self {
            params,
            resolution,
            min_latency_ms: 0.0,
        }
    }

    pub fn with_min_latency(mut self, ms: f64) -> Self {
        self.min_latency_ms = ms;
        self
    }
}

impl<T: Real> FrameWarper<T> for FlowWarper {
    fn warp(&mut self, prev_out: &Frame<T>, prev_in: &Frame<T>, cur_in: &Frame<T>) -> Result<Frame<T>> {
        let start = Instant::now();
        let flow = match self.resolution {
            FlowResolution::Full => farneback_flow(&gray(prev_in)?, &gray(cur_in)?, &self.params)?,
            FlowResolution::Half => half_res_flow(prev_in, cur_in, &self.params)?,
        };
        ensure!(
            prev_out.width == flow.width && prev_out.height == flow.height,
            "output frame {} does not match input size {}x{}; warping needs size-preserving chains",
            prev_out.shape_string(),
            flow.width,
            flow.height
        );
        let mut out = warp_bilinear(prev_out, &flow)?;
        out.frame_id = cur_in.frame_id;
        out.capture_timestamp = cur_in.capture_timestamp;
        sleep_until(start + ms_to_duration(self.min_latency_ms));
        Ok(out)
    }
}

/// `(unet + (n − 1)·warp) / n` milliseconds per frame.
pub fn theoretical_ms_per_frame(unet_ms: f64, warp_ms: f64, n: usize) -> Result<f64> {
    ensure!(n >= 1, "skip interval must be >= 1");
    ensure!(unet_ms >= 0.0 && warp_ms >= 0.0, "latencies must be >= 0");
    Ok((unet_ms + (n - 1) as f64 * warp_ms) / n as f64)
}

#[derive(Debug, Clone)]
pub struct SkipOutput {
    /// Type of every processed frame, in order.
    pub kinds: Vec<FrameKind>,
    /// Stage rows are `unet` and `warp`.
    pub report: PipelineReport,
    /// Wall time per measured frame.
    pub measured_ms_per_frame: f64,
    /// Wall time per frame not spent inside the chain or the warper.
    pub overhead_ms_per_frame: f64,
}

/// Processes `frames` through `chain` on every `n`-th frame and through
/// `warper` otherwise, single-threaded.
///
/// Warm-up exclusion covers whole schedule cycles so the measured mix of
/// frame types matches the schedule.
pub fn skip_pipeline<T: Real>(
    schedule: &SkipSchedule,
    chain: &mut Pipeline<T>,
    frames: &mut dyn FrameSource<T>,
    warper: &mut dyn FrameWarper<T>,
    mut sink: Option<&mut dyn FrameSink<T>>,
    max_frames: usize,
) -> Result<SkipOutput> {
    ensure!(schedule.n >= 1, "skip interval must be >= 1");
    ensure!(max_frames >= 1, "max_frames must be >= 1");
    let cycle_warmup = WARMUP_FRAMES.div_ceil(schedule.n) * schedule.n;
    let warmup = if max_frames > cycle_warmup { cycle_warmup } else { 0 };

    let mut kinds = Vec::new();
    let mut unet_ms = Vec::new();
    let mut warp_ms = Vec::new();
    let mut busy_ms = 0.0;
    let mut displayed = Vec::new();
    let mut prev: Option<(Frame<T>, Frame<T>)> = None;
    let mut timings = vec![0.0; chain.stages().len()];
    let mut window_start = Instant::now();

    for index in 0..max_frames {
        if index == warmup {
            window_start = Instant::now();
        }
        let Some(input) = frames.next_frame()? else { break };
        let kind = schedule.kind_of(index);
        let t0 = Instant::now();
        let out = match (kind, &prev) {
            (FrameKind::Warp, Some((prev_in, prev_out))) => warper.warp(prev_out, prev_in, &input)?,
            _ => chain.run_frame(input.clone(), &mut timings)?,
        };
        let elapsed = t0.elapsed().as_secs_f64() * 1000.0;
        if index >= warmup {
            busy_ms += elapsed;
            match kind {
                FrameKind::Unet => unet_ms.push(elapsed),
                FrameKind::Warp => warp_ms.push(elapsed),
            }
        }
        if let Some(s) = sink.as_deref_mut() {
            s.show(&out)?;
        }
        kinds.push(kind);
        displayed.push(out.frame_id);
        prev = Some((input, out));
    }
    let duration_s = window_start.elapsed().as_secs_f64();
    let measured = kinds.len().saturating_sub(warmup);
    ensure!(measured > 0, "frame source ended before any measured frame");

    let mut stages = Vec::new();
    if !unet_ms.is_empty() {
        stages.push(StageReport {
            name: "unet".into(),
            stats: TimingStats::from_samples(&unet_ms, warmup)?,
        });
    }
    if !warp_ms.is_empty() {
        stages.push(StageReport {
            name: "warp".into(),
            stats: TimingStats::from_samples(&warp_ms, warmup)?,
        });
    }
    let measured_ms_per_frame = duration_s * 1000.0 / measured as f64;
    let busy_per_frame = busy_ms / measured as f64;
    Ok(SkipOutput {
        kinds,
        report: PipelineReport {
            stages,
            end_to_end_mean_ms: busy_per_frame,
            achieved_fps: measured as f64 / duration_s,
            frames_displayed: measured as u64,
            dropped_frames: 0,
            duration_s,
            warmup_frames: warmup,
            displayed_frame_ids: displayed,
        },
        measured_ms_per_frame,
        overhead_ms_per_frame: measured_ms_per_frame - busy_per_frame,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theoretical_values() {
        let v = theoretical_ms_per_frame(51.7, 6.6, 3).unwrap();
        assert!((v - 21.633_333).abs() < 1e-5);
        assert_eq!(format!("{v:.1}"), "21.6");
        assert!((theoretical_ms_per_frame(51.7, 22.3, 3).unwrap() - 32.1).abs() < 0.01);
        assert_eq!(theoretical_ms_per_frame(17.0, 3.0, 1).unwrap(), 17.0);
        assert!(theoretical_ms_per_frame(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn theoretical_monotone_in_n() {
        for n in 1..10 {
            let a = theoretical_ms_per_frame(50.0, 5.0, n).unwrap();
            let b = theoretical_ms_per_frame(50.0, 5.0, n + 1).unwrap();
            assert!(b < a);
            assert_eq!(theoretical_ms_per_frame(7.0, 7.0, n).unwrap(), 7.0);
        }
    }

    #[test]
    fn schedule_pattern() {
        let s = SkipSchedule::new(3, FlowResolution::Half).unwrap();
        let kinds: String = (0..9)
            .map(|i| match s.kind_of(i) {
                FrameKind::Unet => 'U',
                FrameKind::Warp => 'W',
            })
            .collect();
        assert_eq!(kinds, "UWWUWWUWW");
        assert!(SkipSchedule::new(0, FlowResolution::Full).is_err());
        assert!("quarter".parse::<FlowResolution>().is_err());
    }
}
