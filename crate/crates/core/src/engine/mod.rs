//! Pipeline scheduling: sequential single-thread execution and the
//! three-worker capture/infer/display architecture.

mod mailbox;
pub(crate) mod report;
mod threaded;

use std::collections::HashSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use mailbox::Mailbox;
pub use report::{PipelineReport, StageCsvRow, StageReport};
pub use threaded::run_threaded;

use crate::backend::{DelayStage, LatencyProfile, Payload, PayloadKind, Stage, StubStage};
use crate::bench::TimingStats;
use crate::coherence::{EmaStage, FeedbackStage, NoiseStage};
use crate::error::{ensure, Error, Result};
use crate::frame::Frame;
use crate::rng::Seed;
use crate::scalar::Real;
use crate::source::{FrameSink, FrameSource};

/// Frames at the start of every measured run excluded from statistics.
pub const WARMUP_FRAMES: usize = 3;

/// A named stage in a pipeline.
pub struct StageSpec<T> {
    pub name: String,
    pub executor: Box<dyn Stage<T>>,
    pub declared_latency_ms: Option<f64>,
}

impl<T: Real> StageSpec<T> {
    pub fn new(executor: Box<dyn Stage<T>>) -> Self {
        Self {
            name: executor.name().to_string(),
            declared_latency_ms: executor.declared_latency_ms(),
            executor,
        }
    }

    pub fn of<S: Stage<T> + 'static>(stage: S) -> Self {
        Self::new(Box::new(stage))
    }
}

macro_rules! stage_spec_from {
    ($($ty:ty),*) => {$(
        impl<T: Real> From<$ty> for StageSpec<T> {
            fn from(stage: $ty) -> Self {
                StageSpec::of(stage)
            }
        }
    )*};
}

stage_spec_from!(StubStage, DelayStage, NoiseStage, FeedbackStage<T>, EmaStage<T>);

/// An ordered, type-checked stage chain turning an image into an image.
pub struct Pipeline<T> {
    stages: Vec<StageSpec<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutionMode {
    Sequential,
    Threaded,
}

impl<T: Real> Pipeline<T> {
    pub fn new(stages: Vec<StageSpec<T>>) -> Result<Self> {
        ensure!(!stages.is_empty(), "pipeline needs at least one stage");
        let mut names = HashSet::new();
        for s in &stages {
            ensure!(names.insert(s.name.as_str()), "duplicate stage name {:?}", s.name);
        }
        let mut expected = PayloadKind::Image;
        for s in &stages {
            let input = s.executor.input_kind();
            ensure!(
                input == expected,
                "stage {:?} takes {input} but receives {expected}",
                s.name
            );
            expected = s.executor.output_kind();
        }
        ensure!(
            expected == PayloadKind::Image,
            "pipeline must end with an image, last stage yields {expected}"
        );
        Ok(Self { stages })
    }

    /// The five stub stages of `profile`.
    pub fn stub(profile: &LatencyProfile, seed: Seed) -> Result<Self> {
        profile.validate()?;
        let mut stages: Vec<StageSpec<T>> = StubStage::chain(profile, seed).into_iter().map(StageSpec::from).collect();
        if profile.overhead_ms > 0.0 {
            stages.push(DelayStage::new("overhead", profile.overhead_ms)?.into());
        }
        Self::new(stages)
    }

    pub fn stages(&self) -> &[StageSpec<T>] {
        &self.stages
    }

    pub fn stage_names(&self) -> Vec<String> {
        self.stages.iter().map(|s| s.name.clone()).collect()
    }

    pub fn declared_latencies(&self) -> Vec<Option<f64>> {
        self.stages.iter().map(|s| s.declared_latency_ms).collect()
    }

    pub fn predict_fps(&self, mode: ExecutionMode) -> Result<f64> {
        predict_fps(&self.declared_latencies(), mode)
    }

    /// Runs one frame through every stage, writing each stage's wall time in
    /// milliseconds into `timings_ms`.
    pub fn run_frame(&mut self, frame: Frame<T>, timings_ms: &mut [f64]) -> Result<Frame<T>> {
        debug_assert_eq!(timings_ms.len(), self.stages.len());
        let frame_id = frame.frame_id;
        let timestamp = frame.capture_timestamp;
        let mut payload = Payload::Image(frame);
        for (spec, slot) in self.stages.iter_mut().zip(timings_ms.iter_mut()) {
            let start = Instant::now();
            payload = spec.executor.process(payload).map_err(|e| Error::Stage {
                stage: spec.name.clone(),
                frame_id,
                source: Box::new(e),
            })?;
            *slot = start.elapsed().as_secs_f64() * 1000.0;
        }
        let mut out = payload.into_image()?;
        out.frame_id = frame_id;
        out.capture_timestamp = timestamp;
        Ok(out)
    }

    /// Runs one frame without collecting timings.
    pub fn process(&mut self, frame: Frame<T>) -> Result<Frame<T>> {
        let mut t = vec![0.0; self.stages.len()];
        self.run_frame(frame, &mut t)
    }
}

/// Analytic throughput: `1000 / Σ latency` when stages run back to back,
/// `1000 / max latency` when they overlap on separate workers.
pub fn predict_fps(latencies_ms: &[Option<f64>], mode: ExecutionMode) -> Result<f64> {
    ensure!(!latencies_ms.is_empty(), "no stage latencies given");
    let mut values = Vec::with_capacity(latencies_ms.len());
    for (i, l) in latencies_ms.iter().enumerate() {
        let v = l.ok_or_else(|| Error::InvalidArgument(format!("stage {i} has no declared latency")))?;
        ensure!(v >= 0.0 && v.is_finite(), "stage {i} latency must be >= 0, got {v}");
        values.push(v);
    }
    let ms = match mode {
        ExecutionMode::Sequential => values.iter().sum::<f64>(),
        ExecutionMode::Threaded => values.iter().copied().fold(0.0, f64::max),
    };
    ensure!(ms > 0.0, "total latency must be > 0 to predict a frame rate");
    Ok(1000.0 / ms)
}

/// Processes `n_frames` frames one at a time through the whole chain.
///
/// The first [`WARMUP_FRAMES`] frames are excluded from statistics when more
/// than that many frames are run. Frames are never dropped.
pub fn run_sequential<T: Real>(
    pipeline: &mut Pipeline<T>,
    source: &mut dyn FrameSource<T>,
    mut sink: Option<&mut dyn FrameSink<T>>,
    n_frames: usize,
) -> Result<PipelineReport> {
    ensure!(n_frames >= 1, "n_frames must be >= 1");
    let warmup = if n_frames > WARMUP_FRAMES { WARMUP_FRAMES } else { 0 };
    let n_stages = pipeline.stages.len();
    let mut per_stage: Vec<Vec<f64>> = vec![Vec::with_capacity(n_frames); n_stages];
    let mut end_to_end = Vec::with_capacity(n_frames);
    let mut displayed = Vec::with_capacity(n_frames);
    let mut timings = vec![0.0; n_stages];
    let mut window_start = Instant::now();

    for i in 0..n_frames {
        if i == warmup {
            window_start = Instant::now();
        }
        let Some(frame) = source.next_frame()? else {
            break;
        };
        let out = pipeline.run_frame(frame, &mut timings)?;
        if let Some(sink) = sink.as_deref_mut() {
            sink.show(&out)?;
        }
        displayed.push(out.frame_id);
        if i >= warmup {
            for (acc, t) in per_stage.iter_mut().zip(&timings) {
                acc.push(*t);
            }
            end_to_end.push(timings.iter().sum::<f64>());
        }
    }
    let duration_s = window_start.elapsed().as_secs_f64();
    ensure!(
        !end_to_end.is_empty(),
        "source produced {} frames, fewer than the {} needed for measurement",
        displayed.len(),
        warmup + 1
    );

    let stages = pipeline
        .stages
        .iter()
        .zip(per_stage)
        .map(|(spec, samples)| {
            Ok(StageReport {
                name: spec.name.clone(),
                stats: TimingStats::from_samples(&samples, warmup)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let frames = end_to_end.len() as u64;
    Ok(PipelineReport {
        stages,
        end_to_end_mean_ms: end_to_end.iter().sum::<f64>() / frames as f64,
        achieved_fps: frames as f64 / duration_s,
        frames_displayed: frames,
        dropped_frames: 0,
        duration_s,
        warmup_frames: warmup,
        displayed_frame_ids: displayed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{profile_preset, StageKind};
    use crate::source::{CollectSink, VecSource};

    fn frames(n: usize) -> Vec<Frame<f32>> {
        (0..n)
            .map(|i| Frame::filled(16, 16, 3, 0.25f32).unwrap().with_id(i as u64))
            .collect()
    }

    fn stub(kind: StageKind, ms: f64) -> StageSpec<f32> {
        StubStage::new(kind, ms, Seed(1)).unwrap().into()
    }

    #[test]
    fn chain_type_check() {
        assert!(Pipeline::new(vec![stub(StageKind::Encode, 0.0)]).is_err());
        assert!(Pipeline::new(vec![stub(StageKind::Denoise, 0.0)]).is_err());
        assert!(Pipeline::new(vec![
            stub(StageKind::Encode, 0.0),
            stub(StageKind::Decode, 0.0)
        ])
        .is_ok());
        let dup = Pipeline::new(vec![stub(StageKind::Preprocess, 0.0), stub(StageKind::Preprocess, 0.0)]);
        assert!(matches!(dup, Err(Error::InvalidArgument(m)) if m.contains("duplicate")));
    }

    #[test]
    fn predict_fps_examples() {
        let seq = predict_fps(&[Some(24.4), Some(5.0), Some(5.0), Some(10.0)], ExecutionMode::Sequential).unwrap();
        assert!((1000.0 / seq - 44.4).abs() < 1e-9);
        assert!((1000.0 / seq - 44.1).abs() <= 1.0);
        assert!((seq - 22.52).abs() < 0.01);
        let p2p = predict_fps(&[Some(53.0), Some(160.0), Some(37.0)], ExecutionMode::Sequential).unwrap();
        assert!((p2p - 4.0).abs() < 1e-12);
        for mode in [ExecutionMode::Sequential, ExecutionMode::Threaded] {
            assert!((predict_fps(&[Some(12.5)], mode).unwrap() - 80.0).abs() < 1e-12);
        }
        assert!(predict_fps(&[Some(1.0), None], ExecutionMode::Threaded).is_err());
        assert!(predict_fps(&[Some(0.0)], ExecutionMode::Threaded).is_err());
    }

    #[test]
    fn sequential_zero_latency_identity() {
        let mut p = Pipeline::new(vec![stub(StageKind::Preprocess, 0.0)]).unwrap();
        let mut src = VecSource::new(frames(20));
        let r = run_sequential(&mut p, &mut src, None, 20).unwrap();
        assert!(r.end_to_end_mean_ms < 1.0);
        assert_eq!(r.frames_displayed, 17);
        assert_eq!(r.dropped_frames, 0);
        assert_eq!(r.displayed_frame_ids, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn sequential_additive_sleeps() {
        let mut p = Pipeline::new(vec![
            stub(StageKind::Preprocess, 10.0),
            stub(StageKind::Postprocess, 10.0),
        ])
        .unwrap();
        let mut src = VecSource::new(frames(30));
        let r = run_sequential(&mut p, &mut src, None, 30).unwrap();
        assert!((r.end_to_end_mean_ms - 20.0).abs() / 20.0 < 0.05, "{} {:?}", r.end_to_end_mean_ms, r.stages);
        assert!((r.achieved_fps - 50.0).abs() / 50.0 < 0.05, "{}", r.achieved_fps);
        let invariant = r.frames_displayed as f64 / r.duration_s;
        assert!((r.achieved_fps - invariant).abs() < 1e-9);
        for s in &r.stages {
            assert!(s.stats.p50_ms <= s.stats.p95_ms);
        }
    }

    #[test]
    fn sequential_output_reaches_sink() {
        let profile = profile_preset("custom").unwrap();
        let mut p = Pipeline::<f32>::stub(&profile, Seed(4)).unwrap();
        let mut src = VecSource::new(frames(5));
        let mut sink = CollectSink::default();
        let r = run_sequential(&mut p, &mut src, Some(&mut sink), 5).unwrap();
        assert_eq!(sink.frames.len(), 5);
        assert_eq!(r.frames_displayed, 2);
        assert_eq!(sink.frames[3].frame_id, 3);
        assert_ne!(sink.frames[0].data, frames(1)[0].data, "denoiser must alter the frame");
    }

    #[test]
    fn stage_failure_names_stage_and_frame() {
        let mut p = Pipeline::new(vec![stub(StageKind::Encode, 0.0), stub(StageKind::Decode, 0.0)]).unwrap();
        let bad = Frame::filled(12, 12, 3, 0.5f32).unwrap().with_id(41);
        let mut src = VecSource::new(vec![bad]);
        match run_sequential(&mut p, &mut src, None, 1) {
            Err(Error::Stage { stage, frame_id, .. }) => {
                assert_eq!(stage, "encode");
                assert_eq!(frame_id, 41);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn report_serializations() {
        let mut p = Pipeline::new(vec![
            stub(StageKind::Preprocess, 1.0),
            stub(StageKind::Postprocess, 3.0),
        ])
        .unwrap();
        let r = run_sequential(&mut p, &mut VecSource::new(frames(8)), None, 8).unwrap();
        let md = r.to_markdown();
        assert!(md.starts_with("| Stage | Time | Proportion |"));
        assert!(md.contains("| preprocess |"));
        let total: f64 = r.proportions().iter().map(|(_, p)| p).sum();
        assert!((total - 100.0).abs() < 1e-9);
        let csv = r.to_csv().unwrap();
        assert!(csv.starts_with("stage,mean_ms,p50_ms,p95_ms\n"));
        let rows = PipelineReport::parse_csv(&csv).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].mean_ms, r.stages[1].stats.mean_ms);
        assert_eq!(rows[0].p95_ms, r.stages[0].stats.p95_ms);
    }
}
