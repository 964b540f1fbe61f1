//! Three-worker capture → infer → display execution.

use std::any::Any;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use super::{Mailbox, Pipeline, PipelineReport, StageReport, WARMUP_FRAMES};
use crate::bench::TimingStats;
use crate::error::{ensure, Error, Result};
use crate::frame::Frame;
use crate::scalar::Real;
use crate::source::{FrameSink, FrameSource};

struct Item<T> {
    frame: Frame<T>,
    captured_at: Instant,
}

struct Shared<T> {
    stop: AtomicBool,
    to_infer: Mailbox<Item<T>>,
    to_display: Mailbox<Item<T>>,
}

/// Closes downstream mailboxes when a worker exits. A worker that fails or
/// panics stops the whole run.
struct ExitGuard<'a, T> {
    shared: &'a Shared<T>,
    downstream: Option<&'a Mailbox<Item<T>>>,
    clean: bool,
}

impl<T> Drop for ExitGuard<'_, T> {
    fn drop(&mut self) {
        if !self.clean || thread::panicking() {
            self.shared.stop.store(true, Ordering::SeqCst);
            self.shared.to_infer.close();
            self.shared.to_display.close();
        } else if let Some(mb) = self.downstream {
            mb.close();
        }
    }
}

#[derive(Default)]
struct InferLog {
    stage_ms: Vec<Vec<f64>>,
    processed: usize,
}

#[derive(Default)]
struct DisplayLog {
    /// (display finished, capture instant, frame id)
    shown: Vec<(Instant, Instant, u64)>,
    sink_ms: Vec<f64>,
}

/// Runs capture, inference and display on three workers for `duration_s`
/// seconds, connected by two latest-wins mailboxes.
///
/// Inference always takes the newest captured frame; frames overwritten in
/// either mailbox are reported as dropped. The measured window starts when the
/// [`WARMUP_FRAMES`]-th frame has been displayed.
pub fn run_threaded<T: Real>(
    capture: &mut dyn FrameSource<T>,
    pipeline: &mut Pipeline<T>,
    display: &mut dyn FrameSink<T>,
    duration_s: f64,
) -> Result<PipelineReport> {
    ensure!(duration_s > 0.0 && duration_s.is_finite(), "duration_s must be > 0, got {duration_s}");
    let shared = Shared {
        stop: AtomicBool::new(false),
        to_infer: Mailbox::new(),
        to_display: Mailbox::new(),
    };
    let n_stages = pipeline.stages().len();
    let stage_names = pipeline.stage_names();
    let capture_ms = Mutex::new(Vec::new());
    let mut infer_log = InferLog {
        stage_ms: vec![Vec::new(); n_stages],
        processed: 0,
    };
    let mut display_log = DisplayLog::default();
    let started = Instant::now();
    let deadline = started + Duration::from_secs_f64(duration_s);

    let (results, stopped_at) = thread::scope(|scope| {
        let shared = &shared;
        let capture_ms = &capture_ms;
        let infer_log = &mut infer_log;
        let display_log = &mut display_log;

        let capture_h = scope.spawn(move || -> Result<()> {
            let mut guard = ExitGuard {
                shared,
                downstream: Some(&shared.to_infer),
                clean: false,
            };
            let mut seq = 0u64;
            let mut times = Vec::new();
            while !shared.stop.load(Ordering::SeqCst) {
                let t0 = Instant::now();
                let Some(frame) = capture_frame(capture)? else { break };
                times.push(t0.elapsed().as_secs_f64() * 1000.0);
                shared.to_infer.put(seq, Item { frame, captured_at: Instant::now() });
                seq += 1;
            }
            *capture_ms.lock().unwrap_or_else(|e| e.into_inner()) = times;
            guard.clean = true;
            Ok(())
        });

        let infer_h = scope.spawn(move || -> Result<()> {
            let mut guard = ExitGuard {
                shared,
                downstream: Some(&shared.to_display),
                clean: false,
            };
            let mut timings = vec![0.0; n_stages];
            while let Some((seq, item)) = shared.to_infer.take() {
                if shared.stop.load(Ordering::SeqCst) {
                    break;
                }
                let out = pipeline.run_frame(item.frame, &mut timings)?;
                if infer_log.processed >= WARMUP_FRAMES {
                    for (acc, t) in infer_log.stage_ms.iter_mut().zip(&timings) {
                        acc.push(*t);
                    }
                }
                infer_log.processed += 1;
                shared.to_display.put(seq, Item { frame: out, captured_at: item.captured_at });
            }
            guard.clean = true;
            Ok(())
        });

        let display_h = scope.spawn(move || -> Result<()> {
            let mut guard = ExitGuard {
                shared,
                downstream: None,
                clean: false,
            };
            while let Some((_, item)) = shared.to_display.take() {
                if shared.stop.load(Ordering::SeqCst) {
                    break;
                }
                let t0 = Instant::now();
                display.show(&item.frame)?;
                let done = Instant::now();
                display_log.sink_ms.push((done - t0).as_secs_f64() * 1000.0);
                display_log.shown.push((done, item.captured_at, item.frame.frame_id));
            }
            guard.clean = true;
            Ok(())
        });

        // Wait for the deadline, or for an early stop caused by a failure or
        // an exhausted source.
        while Instant::now() < deadline && !shared.stop.load(Ordering::SeqCst) && !display_h.is_finished() {
            thread::sleep(Duration::from_millis(2).min(deadline.saturating_duration_since(Instant::now())));
        }
        let stopped_at = Instant::now();
        shared.stop.store(true, Ordering::SeqCst);
        shared.to_infer.close();
        shared.to_display.close();

        let results = [
            ("capture", capture_h.join()),
            ("infer", infer_h.join()),
            ("display", display_h.join()),
        ];
        (results, stopped_at)
    });

    for (worker, res) in results {
        match res {
            Ok(Ok(())) => {}
            Ok(Err(e)) => {
                return Err(Error::Worker {
                    worker,
                    message: e.to_string(),
                })
            }
            Err(panic) => {
                return Err(Error::Worker {
                    worker,
                    message: format!("panicked: {}", panic_message(&panic)),
                })
            }
        }
    }

    let shown = &display_log.shown;
    ensure!(
        shown.len() > WARMUP_FRAMES,
        "only {} frames displayed in {duration_s} s; need more than {WARMUP_FRAMES} for measurement",
        shown.len()
    );
    let window_start = shown[WARMUP_FRAMES - 1].0;
    let measured = &shown[WARMUP_FRAMES..];
    let duration = (stopped_at - window_start).as_secs_f64();
    let latency_ms: Vec<f64> = measured
        .iter()
        .map(|(done, captured, _)| (*done - *captured).as_secs_f64() * 1000.0)
        .collect();

    let mut stages = Vec::with_capacity(n_stages + 2);
    let capture_samples = capture_ms.into_inner().unwrap_or_else(|e| e.into_inner());
    if capture_samples.len() > WARMUP_FRAMES {
        stages.push(StageReport {
            name: "capture".into(),
            stats: TimingStats::from_samples(&capture_samples[WARMUP_FRAMES..], WARMUP_FRAMES)?,
        });
    }
    for (name, samples) in stage_names.into_iter().zip(&infer_log.stage_ms) {
        if !samples.is_empty() {
            stages.push(StageReport {
                name,
                stats: TimingStats::from_samples(samples, WARMUP_FRAMES)?,
            });
        }
    }
    stages.push(StageReport {
        name: "display".into(),
        stats: TimingStats::from_samples(&display_log.sink_ms[WARMUP_FRAMES..], WARMUP_FRAMES)?,
    });

    Ok(PipelineReport {
        stages,
        end_to_end_mean_ms: latency_ms.iter().sum::<f64>() / latency_ms.len() as f64,
        achieved_fps: measured.len() as f64 / duration,
        frames_displayed: measured.len() as u64,
        dropped_frames: shared.to_infer.dropped() + shared.to_display.dropped(),
        duration_s: duration,
        warmup_frames: WARMUP_FRAMES,
        displayed_frame_ids: shown.iter().map(|s| s.2).collect(),
    })
}

fn capture_frame<T: Real>(capture: &mut dyn FrameSource<T>) -> Result<Option<Frame<T>>> {
    capture.next_frame()
}

fn panic_message(p: &Box<dyn Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Payload, PayloadKind, Stage, StageKind, StubStage};
    use crate::engine::{predict_fps, ExecutionMode, StageSpec};
    use crate::rng::Seed;
    use crate::source::{NullSink, PacedSource, VecSource};

    /// Endless constant-frame source with a fixed capture latency.
    struct Camera {
        next: u64,
        latency_ms: f64,
    }

    impl FrameSource<f32> for Camera {
        fn next_frame(&mut self) -> Result<Option<Frame<f32>>> {
            let start = Instant::now();
            let f = Frame::filled(16, 16, 3, 0.5f32).unwrap().with_id(self.next);
            self.next += 1;
            crate::backend::sleep_until(start + Duration::from_secs_f64(self.latency_ms / 1000.0));
            Ok(Some(f))
        }
    }

    fn infer(ms: f64) -> Pipeline<f32> {
        Pipeline::new(vec![StubStage::new(StageKind::Preprocess, ms, Seed(0)).unwrap().into()]).unwrap()
    }

    fn assert_strictly_increasing(ids: &[u64]) {
        assert!(ids.windows(2).all(|w| w[0] < w[1]), "{ids:?}");
    }

    #[test]
    fn compute_bound_by_slowest_stage() {
        let mut cam = Camera { next: 0, latency_ms: 10.0 };
        let mut p = infer(30.0);
        let mut sink = NullSink::new(10.0);
        let r = run_threaded(&mut cam, &mut p, &mut sink, 2.0).unwrap();
        let bound = predict_fps(&[Some(10.0), Some(30.0), Some(10.0)], ExecutionMode::Threaded).unwrap();
        assert!((r.achieved_fps - bound).abs() / bound < 0.15, "fps {} vs {bound}", r.achieved_fps);
        assert!(r.dropped_frames > 0);
        assert_strictly_increasing(&r.displayed_frame_ids);
        assert!((r.achieved_fps - r.frames_displayed as f64 / r.duration_s).abs() < 1e-9);
    }

    #[test]
    fn source_limited_run_drops_nothing() {
        let frames: Vec<_> = (0..100).map(|i| Frame::filled(8, 8, 3, 0.5f32).unwrap().with_id(i)).collect();
        let mut cam = PacedSource::from_fps(VecSource::new(frames), 20.0);
        let mut p = infer(1.0);
        let mut sink = NullSink::new(0.0);
        let r = run_threaded(&mut cam, &mut p, &mut sink, 1.5).unwrap();
        assert_eq!(r.dropped_frames, 0);
        assert!((r.achieved_fps - 20.0).abs() / 20.0 < 0.15, "fps {}", r.achieved_fps);
        let ids = &r.displayed_frame_ids;
        assert_eq!(ids, &(0..ids.len() as u64).collect::<Vec<_>>());
    }

    struct Failing;

    impl Stage<f32> for Failing {
        fn name(&self) -> &str {
            "boom"
        }
        fn kind(&self) -> StageKind {
            StageKind::Custom
        }
        fn input_kind(&self) -> PayloadKind {
            PayloadKind::Image
        }
        fn output_kind(&self) -> PayloadKind {
            PayloadKind::Image
        }
        fn process(&mut self, input: Payload<f32>) -> Result<Payload<f32>> {
            if input.frame_id() == 5 {
                return Err(Error::InvalidArgument("bad frame".into()));
            }
            Ok(input)
        }
    }

    struct Panicking;

    impl Stage<f32> for Panicking {
        fn name(&self) -> &str {
            "panic"
        }
        fn kind(&self) -> StageKind {
            StageKind::Custom
        }
        fn input_kind(&self) -> PayloadKind {
            PayloadKind::Image
        }
        fn output_kind(&self) -> PayloadKind {
            PayloadKind::Image
        }
        fn process(&mut self, _input: Payload<f32>) -> Result<Payload<f32>> {
            panic!("stage exploded")
        }
    }

    #[test]
    fn infer_failure_surfaces_worker() {
        let mut cam = PacedSource::new(Camera { next: 0, latency_ms: 0.0 }, 2.0);
        let mut p = Pipeline::new(vec![StageSpec::new(Box::new(Failing))]).unwrap();
        let start = Instant::now();
        let err = run_threaded(&mut cam, &mut p, &mut NullSink::new(0.0), 10.0).unwrap_err();
        assert!(start.elapsed() < Duration::from_secs(5), "failure must tear the run down early");
        match err {
            Error::Worker { worker, message } => {
                assert_eq!(worker, "infer");
                assert!(message.contains("boom"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn infer_panic_surfaces_worker() {
        let mut cam = Camera { next: 0, latency_ms: 1.0 };
        let mut p = Pipeline::new(vec![StageSpec::new(Box::new(Panicking))]).unwrap();
        let err = run_threaded(&mut cam, &mut p, &mut NullSink::new(0.0), 10.0).unwrap_err();
        assert!(matches!(err, Error::Worker { worker: "infer", ref message } if message.contains("stage exploded")));
    }

    #[test]
    fn rejects_non_positive_duration() {
        let mut cam = Camera { next: 0, latency_ms: 0.0 };
        assert!(run_threaded(&mut cam, &mut infer(0.0), &mut NullSink::new(0.0), 0.0).is_err());
    }
}
