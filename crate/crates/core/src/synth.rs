//! Deterministic synthetic frame streams standing in for a camera.

use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::raster::{gaussian_blur, sample_bilinear};
use crate::rng::{Seed, SplitMix64};
use crate::scalar::Real;
use crate::source::FrameSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    Gradient,
    Checker,
    BandlimitedNoise,
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient" => Ok(Pattern::Gradient),
            "checker" => Ok(Pattern::Checker),
            "bandlimited-noise" => Ok(Pattern::BandlimitedNoise),
            other => Err(Error::InvalidArgument(format!(
                "unknown pattern {other:?} (expected gradient, checker or bandlimited-noise)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub pattern: Pattern,
    /// Per-frame translation `(dx, dy)` in pixels.
    #[serde(default)]
    pub motion: (f64, f64),
    pub count: usize,
    #[serde(default = "default_side")]
    pub width: usize,
    #[serde(default = "default_side")]
    pub height: usize,
    #[serde(default)]
    pub seed: Seed,
}

fn default_side() -> usize {
    128
}

/// Gaussian blur radius applied to white noise for the band-limited texture.
pub const NOISE_BLUR_SIGMA: f64 = 2.5;

/// Renders the untranslated first frame of a pattern.
pub fn base_pattern<T: Real>(pattern: Pattern, width: usize, height: usize, seed: Seed) -> Result<Frame<T>> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument("synthetic frame size must be positive".into()));
    }
    let mut data = Vec::with_capacity(width * height * 3);
    match pattern {
        Pattern::Gradient => {
            for y in 0..height {
                for x in 0..width {
                    let u = x as f64 / (width.max(2) - 1) as f64;
                    let v = y as f64 / (height.max(2) - 1) as f64;
                    data.extend([u, v, 0.5 * (u + v)].map(T::lit));
                }
            }
        }
        Pattern::Checker => {
            let mut rng = seed.rng();
            let cell = 8 + rng.below(9) as usize;
            let tint = [rng.next_f64(), rng.next_f64(), rng.next_f64()];
            for y in 0..height {
                for x in 0..width {
                    let on = ((x / cell) + (y / cell)) % 2 == 0;
                    for t in tint {
                        data.push(T::lit(if on { 0.15 + 0.7 * t } else { 0.85 - 0.7 * t }));
                    }
                }
            }
        }
        Pattern::BandlimitedNoise => {
            let mut rng: SplitMix64 = seed.rng();
            data.extend((0..width * height * 3).map(|_| T::lit(rng.next_f64())));
            let noisy = Frame::new(width, height, 3, data)?;
            let mut smooth = gaussian_blur(&noisy, NOISE_BLUR_SIGMA);
            stretch_contrast(&mut smooth.data);
            return Ok(smooth);
        }
    }
    Frame::new(width, height, 3, data)
}

fn stretch_contrast<T: Real>(data: &mut [T]) {
    let lo = data.iter().copied().fold(T::infinity(), T::min);
    let hi = data.iter().copied().fold(T::neg_infinity(), T::max);
    let span = hi - lo;
    if span > T::zero() {
        for v in data.iter_mut() {
            *v = ((*v - lo) / span).max(T::zero()).min(T::one());
        }
    }
}

/// Translates `base` by `(dx, dy)` pixels: content at `p` moves to `p + d`.
/// Edge pixels are clamped.
pub fn translate<T: Real>(base: &Frame<T>, dx: f64, dy: f64) -> Frame<T> {
    let mut out = base.clone();
    let (w, h, c) = (base.width, base.height, base.channels);
    for y in 0..h {
        for x in 0..w {
            let sx = T::lit(x as f64 - dx);
            let sy = T::lit(y as f64 - dy);
            for ch in 0..c {
                out.data[(y * w + x) * c + ch] = sample_bilinear(&base.data, w, h, c, ch, sx, sy);
            }
        }
    }
    out
}

/// Generates the full stream eagerly.
pub fn synthetic_frames<T: Real>(spec: &SyntheticSpec) -> Result<Vec<Frame<T>>> {
    let mut src = SyntheticSource::new(spec)?;
    let mut frames = Vec::with_capacity(spec.count);
    while let Some(f) = src.next_frame()? {
        frames.push(f);
    }
    Ok(frames)
}

/// Lazily renders frame `t` as the base pattern translated by `t · motion`.
pub struct SyntheticSource<T> {
    base: Frame<T>,
    motion: (f64, f64),
    count: usize,
    next: usize,
    started: Instant,
}

impl<T: Real> SyntheticSource<T> {
    pub fn new(spec: &SyntheticSpec) -> Result<Self> {
        Ok(Self {
            base: base_pattern(spec.pattern, spec.width, spec.height, spec.seed)?,
            motion: spec.motion,
            count: spec.count,
            next: 0,
            started: Instant::now(),
        })
    }

    /// Endless variant for duration-bounded runs.
    pub fn endless(spec: &SyntheticSpec) -> Result<Self> {
        let mut s = Self::new(spec)?;
        s.count = usize::MAX;
        Ok(s)
    }
}

impl<T: Real> FrameSource<T> for SyntheticSource<T> {
    fn next_frame(&mut self) -> Result<Option<Frame<T>>> {
        if self.next >= self.count {
            return Ok(None);
        }
        let t = self.next as f64;
        let mut frame = if self.motion == (0.0, 0.0) {
            self.base.clone()
        } else {
            translate(&self.base, t * self.motion.0, t * self.motion.1)
        };
        frame.frame_id = self.next as u64;
        frame.capture_timestamp = self.started.elapsed().as_nanos() as u64;
        self.next += 1;
        Ok(Some(frame))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(pattern: Pattern, motion: (f64, f64), count: usize) -> SyntheticSpec {
        SyntheticSpec {
            pattern,
            motion,
            count,
            width: 32,
            height: 24,
            seed: Seed(9),
        }
    }

    #[test]
    fn static_scene_frames_identical() {
        for p in [Pattern::Gradient, Pattern::Checker, Pattern::BandlimitedNoise] {
            let frames = synthetic_frames::<f32>(&spec(p, (0.0, 0.0), 4)).unwrap();
            assert_eq!(frames.len(), 4);
            for f in &frames[1..] {
                assert_eq!(f.data, frames[0].data);
            }
            assert_eq!(frames.iter().map(|f| f.frame_id).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn integer_translation_moves_content() {
        let frames = synthetic_frames::<f64>(&spec(Pattern::BandlimitedNoise, (3.0, 1.0), 2)).unwrap();
        let (a, b) = (&frames[0], &frames[1]);
        for y in 1..a.height {
            for x in 3..a.width {
                assert_eq!(b.at(x, y, 1), a.at(x - 3, y - 1, 1));
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let s = spec(Pattern::BandlimitedNoise, (0.5, 0.25), 3);
        assert_eq!(
            synthetic_frames::<f32>(&s).unwrap().iter().map(|f| f.data.clone()).collect::<Vec<_>>(),
            synthetic_frames::<f32>(&s).unwrap().iter().map(|f| f.data.clone()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn empty_stream_and_unknown_pattern() {
        assert!(synthetic_frames::<f32>(&spec(Pattern::Checker, (0.0, 0.0), 0)).unwrap().is_empty());
        assert!("plaid".parse::<Pattern>().is_err());
        assert_eq!("bandlimited-noise".parse::<Pattern>().unwrap(), Pattern::BandlimitedNoise);
    }

    #[test]
    fn samples_in_unit_range() {
        for p in [Pattern::Gradient, Pattern::Checker, Pattern::BandlimitedNoise] {
            let f = base_pattern::<f32>(p, 17, 9, Seed(1)).unwrap();
            assert!(f.data.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
