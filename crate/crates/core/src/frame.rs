//! Raster and tensor value types.

use crate::error::{ensure, Result};
use crate::scalar::Real;

/// Latent tensors are this many times smaller than frames in each spatial axis.
pub const LATENT_SCALE: usize = 8;
/// Channel count of latent tensors.
pub const LATENT_CHANNELS: usize = 4;

/// An interleaved `height × width × channels` raster with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<T>,
    pub frame_id: u64,
    /// Monotonic-clock nanoseconds at capture, relative to the stream start.
    pub capture_timestamp: u64,
}

impl<T: Real> Frame<T> {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        ensure!(width >= 1 && height >= 1, "frame dimensions must be positive, got {width}x{height}");
        ensure!(channels == 1 || channels == 3, "frame channels must be 1 or 3, got {channels}");
        ensure!(
            data.len() == width * height * channels,
            "frame data length {} != {width}x{height}x{channels}",
            data.len()
        );
        ensure!(
            data.iter().all(|v| *v >= T::zero() && *v <= T::one()),
            "frame samples must lie in [0, 1]"
        );
        Ok(Self {
            width,
            height,
            channels,
            data,
            frame_id: 0,
            capture_timestamp: 0,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn with_id(mut self, frame_id: u64) -> Self {
        self.frame_id = frame_id;
        self
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn same_shape(&self, other: &Frame<T>) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.width, self.height, self.channels)
    }

    /// Converts the sample type, keeping metadata.
    pub fn cast<U: Real>(&self) -> Frame<U> {
        Frame {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
            frame_id: self.frame_id,
            capture_timestamp: self.capture_timestamp,
        }
    }
}

/// A planar `channels × height × width` tensor in latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
    pub source_frame_id: u64,
}

impl<T: Real> Latent<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        ensure!(
            channels >= 1 && height >= 1 && width >= 1,
            "latent dimensions must be positive, got {channels}x{height}x{width}"
        );
        ensure!(
            data.len() == channels * height * width,
            "latent data length {} != {channels}x{height}x{width}",
            data.len()
        );
        ensure!(data.iter().all(|v| v.is_finite()), "latent values must be finite");
        Ok(Self {
            channels,
            height,
            width,
            data,
            source_frame_id: 0,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
            source_frame_id: 0,
        }
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn same_shape(&self, other: &Latent<T>) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.channels, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Dense per-pixel displacement field.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow<T> {
    pub width: usize,
    pub height: usize,
    pub dx: Vec<T>,
    pub dy: Vec<T>,
}

impl<T: Real> Flow<T> {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            dx: vec![T::zero(); width * height],
            dy: vec![T::zero(); width * height],
        }
    }

    pub fn constant(width: usize, height: usize, dx: T, dy: T) -> Self {
        Self {
            width,
            height,
            dx: vec![dx; width * height],
            dy: vec![dy; width * height],
        }
    }

    /// Mean displacement over pixels at least `border` away from every edge.
    pub fn interior_mean(&self, border: usize) -> (f64, f64) {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for y in border..self.height.saturating_sub(border) {
            for x in border..self.width.saturating_sub(border) {
                let i = y * self.width + x;
                sx += self.dx[i].as_f64();
                sy += self.dy[i].as_f64();
                n += 1;
            }
        }
        if n == 0 {
            return (0.0, 0.0);
        }
        (sx / n as f64, sy / n as f64)
    }

    /// Mean displacement magnitude over the whole field.
    pub fn mean_magnitude(&self) -> f64 {
        let sum: f64 = self
            .dx
            .iter()
            .zip(&self.dy)
            .map(|(a, b)| a.as_f64().hypot(b.as_f64()))
            .sum();
        sum / self.dx.len().max(1) as f64
    }
}

/// A feature vector used as a retrieval key.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T> {
    pub data: Vec<T>,
    pub normalized: bool,
}

impl<T: Real> Embedding<T> {
    pub fn new(data: Vec<T>) -> Result<Self> {
        ensure!(!data.is_empty(), "embedding must have at least one dimension");
        ensure!(data.iter().all(|v| v.is_finite()), "embedding values must be finite");
        Ok(Self { data, normalized: false })
    }

    /// Scales to unit L2 norm. A zero vector is left unchanged and unflagged.
    pub fn normalize(mut self) -> Self {
        let norm = self.data.iter().map(|v| *v * *v).sum::<T>().sqrt();
        if norm > T::zero() {
            self.data.iter_mut().for_each(|v| *v /= norm);
            self.normalized = true;
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }
}
