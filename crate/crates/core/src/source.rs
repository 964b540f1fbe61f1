//! Frame sources and sinks feeding the engine.

use std::time::{Duration, Instant};

use crate::backend::sleep_until;
use crate::error::Result;
use crate::frame::Frame;
use crate::scalar::Real;

/// Produces frames in capture order. `Ok(None)` ends the stream.
pub trait FrameSource<T>: Send {
    fn next_frame(&mut self) -> Result<Option<Frame<T>>>;
}

/// Consumes displayed frames.
pub trait FrameSink<T>: Send {
    fn show(&mut self, frame: &Frame<T>) -> Result<()>;
}

/// Replays a fixed list of frames.
#[derive(Debug, Clone)]
pub struct VecSource<T> {
    frames: std::vec::IntoIter<Frame<T>>,
}

impl<T> VecSource<T> {
    pub fn new(frames: Vec<Frame<T>>) -> Self {
        Self { frames: frames.into_iter() }
    }
}

impl<T: Real> FrameSource<T> for VecSource<T> {
    fn next_frame(&mut self) -> Result<Option<Frame<T>>> {
        Ok(self.frames.next())
    }
}

/// Wraps another source and delivers at most one frame per `period`, like a
/// camera running at a fixed frame rate.
pub struct PacedSource<S> {
    inner: S,
    period: Duration,
    next_due: Option<Instant>,
}

impl<S> PacedSource<S> {
    pub fn new(inner: S, period_ms: f64) -> Self {
        Self {
            inner,
            period: Duration::from_secs_f64(period_ms.max(0.0) / 1000.0),
            next_due: None,
        }
    }

    pub fn from_fps(inner: S, fps: f64) -> Self {
        Self::new(inner, 1000.0 / fps)
    }
}

impl<T: Real, S: FrameSource<T>> FrameSource<T> for PacedSource<S> {
    fn next_frame(&mut self) -> Result<Option<Frame<T>>> {
        let now = Instant::now();
        let due = self.next_due.unwrap_or(now);
        sleep_until(due);
        // A late consumer does not earn a burst of catch-up frames.
        self.next_due = Some(due.max(now) + self.period);
        self.inner.next_frame()
    }
}

/// Discards frames after an artificial display latency.
#[derive(Debug, Clone, Default)]
pub struct NullSink {
    pub latency_ms: f64,
    pub shown: u64,
}

impl NullSink {
    pub fn new(latency_ms: f64) -> Self {
        Self { latency_ms, shown: 0 }
    }
}

impl<T: Real> FrameSink<T> for NullSink {
    fn show(&mut self, _frame: &Frame<T>) -> Result<()> {
        let start = Instant::now();
        self.shown += 1;
        sleep_until(start + Duration::from_secs_f64(self.latency_ms.max(0.0) / 1000.0));
        Ok(())
    }
}

/// Keeps every displayed frame.
#[derive(Debug, Clone, Default)]
pub struct CollectSink<T> {
    pub frames: Vec<Frame<T>>,
}

impl<T: Real> FrameSink<T> for CollectSink<T> {
    fn show(&mut self, frame: &Frame<T>) -> Result<()> {
        self.frames.push(frame.clone());
        Ok(())
    }
}
