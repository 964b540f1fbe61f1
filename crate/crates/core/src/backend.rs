//! Pluggable stage abstraction, deterministic stub stages and latency presets.
//!
//! Stub stages stand in for the neural components of a latent img2img
//! pipeline. Each does a cheap, deterministic transform with the right
//! input/output types and then pads its wall-clock time up to a configured
//! latency, so the scheduling and throughput behaviour of a real pipeline can
//! be reproduced without an accelerator.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::frame::{Frame, Latent, LATENT_CHANNELS, LATENT_SCALE};
use crate::rng::{hash_unit, Seed};
use crate::scalar::Real;

/// Data flowing between stages.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload<T> {
    Image(Frame<T>),
    Latent(Latent<T>),
}

impl<T: Real> Payload<T> {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::Image(_) => PayloadKind::Image,
            Payload::Latent(_) => PayloadKind::Latent,
        }
    }

    pub fn frame_id(&self) -> u64 {
        match self {
            Payload::Image(f) => f.frame_id,
            Payload::Latent(l) => l.source_frame_id,
        }
    }

    pub fn into_image(self) -> Result<Frame<T>> {
        match self {
            Payload::Image(f) => Ok(f),
            Payload::Latent(l) => Err(Error::invalid(format!(
                "expected an image, got latent {}",
                l.shape_string()
            ))),
        }
    }

    pub fn into_latent(self) -> Result<Latent<T>> {
        match self {
            Payload::Latent(l) => Ok(l),
            Payload::Image(f) => Err(Error::invalid(format!(
                "expected a latent, got image {}",
                f.shape_string()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    Image,
    Latent,
}

impl fmt::Display for PayloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PayloadKind::Image => "image",
            PayloadKind::Latent => "latent",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageKind {
    Preprocess,
    Encode,
    Denoise,
    Decode,
    Postprocess,
    Custom,
}

impl StageKind {
    pub const PIPELINE: [StageKind; 5] = [
        StageKind::Preprocess,
        StageKind::Encode,
        StageKind::Denoise,
        StageKind::Decode,
        StageKind::Postprocess,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageKind::Preprocess => "preprocess",
            StageKind::Encode => "encode",
            StageKind::Denoise => "denoise",
            StageKind::Decode => "decode",
            StageKind::Postprocess => "postprocess",
            StageKind::Custom => "custom",
        }
    }

    /// Input and output payload kinds for the built-in stage kinds.
    pub fn signature(self) -> Option<(PayloadKind, PayloadKind)> {
        use PayloadKind::*;
        match self {
            StageKind::Preprocess | StageKind::Postprocess => Some((Image, Image)),
            StageKind::Encode => Some((Image, Latent)),
            StageKind::Denoise => Some((Latent, Latent)),
            StageKind::Decode => Some((Latent, Image)),
            StageKind::Custom => None,
        }
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One step of an inference chain.
///
/// Implementations must be deterministic: the same input and internal seed
/// give a bitwise-identical output. They are moved to the worker thread that
/// runs them and are never invoked concurrently.
pub trait Stage<T: Real>: Send {
    fn name(&self) -> &str;
    fn kind(&self) -> StageKind;
    fn input_kind(&self) -> PayloadKind;
    fn output_kind(&self) -> PayloadKind;
    fn process(&mut self, input: Payload<T>) -> Result<Payload<T>>;

    /// Latency used for analytic throughput prediction, if known.
    fn declared_latency_ms(&self) -> Option<f64> {
        None
    }
}

/// Final stretch before a deadline spent yielding instead of sleeping, to
/// absorb the scheduler's wake-up latency.
const YIELD_TAIL: Duration = Duration::from_millis(2);

/// Waits until `deadline`: sleeps for most of the interval, then yields the
/// CPU until the deadline passes.
pub fn sleep_until(deadline: Instant) {
    loop {
        let now = Instant::now();
        if now >= deadline {
            return;
        }
        let remaining = deadline - now;
        if remaining > YIELD_TAIL {
            std::thread::sleep(remaining - YIELD_TAIL);
        } else {
            std::thread::yield_now();
        }
    }
}

pub(crate) fn ms_to_duration(ms: f64) -> Duration {
    Duration::from_secs_f64(ms.max(0.0) / 1000.0)
}

/// `8×8` box-averages each RGB channel into latent channels 0–2, mapped from
/// `[0, 1]` to `[-1, 1]`. Channel 3 is zero.
pub fn stub_encode<T: Real>(img: &Frame<T>) -> Result<Latent<T>> {
    ensure!(img.channels == 3, "encode needs a 3-channel image, got {}", img.channels);
    ensure!(
        img.width % LATENT_SCALE == 0 && img.height % LATENT_SCALE == 0,
        "encode needs dimensions divisible by {LATENT_SCALE}, got {}x{}",
        img.width,
        img.height
    );
    let (lw, lh) = (img.width / LATENT_SCALE, img.height / LATENT_SCALE);
    let mut sums = vec![T::zero(); 3 * lh * lw];
    for y in 0..img.height {
        let ly = y / LATENT_SCALE;
        for x in 0..img.width {
            let lx = x / LATENT_SCALE;
            for c in 0..3 {
                sums[(c * lh + ly) * lw + lx] += img.at(x, y, c);
            }
        }
    }
    let inv = T::lit(1.0 / (LATENT_SCALE * LATENT_SCALE) as f64);
    let two = T::lit(2.0);
    let mut data: Vec<T> = sums.into_iter().map(|s| two * (s * inv) - T::one()).collect();
    data.resize(LATENT_CHANNELS * lh * lw, T::zero());
    Ok(Latent {
        channels: LATENT_CHANNELS,
        height: lh,
        width: lw,
        data,
        source_frame_id: img.frame_id,
    })
}

/// Nearest-neighbour `8×` upsample of latent channels 0–2, mapped back to
/// `[0, 1]` and clamped.
pub fn stub_decode<T: Real>(lat: &Latent<T>) -> Result<Frame<T>> {
    ensure!(
        lat.channels == LATENT_CHANNELS,
        "decode needs a {LATENT_CHANNELS}-channel latent, got {}",
        lat.channels
    );
    let (w, h) = (lat.width * LATENT_SCALE, lat.height * LATENT_SCALE);
    let half = T::lit(0.5);
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = (lat.at(c, y / LATENT_SCALE, x / LATENT_SCALE) + T::one()) * half;
                data.push(v.max(T::zero()).min(T::one()));
            }
        }
    }
    Ok(Frame {
        width: w,
        height: h,
        channels: 3,
        data,
        frame_id: lat.source_frame_id,
        capture_timestamp: 0,
    })
}

/// Amplitude of the seeded spatial pattern added by [`stub_denoise`].
pub const DENOISE_PATTERN_AMPLITUDE: f64 = 0.05;

/// Per-channel `(gain, bias)` used by [`stub_denoise`] for `seed`.
pub fn denoise_channel_affine(seed: Seed, channels: usize) -> Vec<(f64, f64)> {
    let mut rng = seed.rng();
    (0..channels)
        .map(|_| {
            let gain = 0.8 + 0.4 * rng.next_f64();
            let bias = 0.3 * (rng.next_f64() - 0.5);
            (gain, bias)
        })
        .collect()
}

/// Deterministic stand-in for a one-step denoiser: a seeded per-channel affine
/// map plus a low-amplitude seeded spatial pattern.
pub fn stub_denoise<T: Real>(lat: &Latent<T>, seed: Seed) -> Result<Latent<T>> {
    ensure!(
        lat.data.len() == lat.channels * lat.height * lat.width,
        "latent data length does not match its shape {}",
        lat.shape_string()
    );
    let affine = denoise_channel_affine(seed, lat.channels);
    let pattern_seed = seed.derive(0x5041_5454).0;
    let mut out = lat.clone();
    for c in 0..lat.channels {
        let (gain, bias) = affine[c];
        let gain = T::lit(gain);
        for y in 0..lat.height {
            for x in 0..lat.width {
                let cell = ((c as u64) << 40) | ((y as u64) << 20) | x as u64;
                let pattern = DENOISE_PATTERN_AMPLITUDE * (2.0 * hash_unit(pattern_seed, cell) - 1.0);
                let i = (c * lat.height + y) * lat.width + x;
                out.data[i] = gain * lat.data[i] + T::lit(bias + pattern);
            }
        }
    }
    ensure!(out.data.iter().all(|v| v.is_finite()), "denoised latent is not finite");
    Ok(out)
}

/// Stage that performs its kind's stub transform and pads its wall time to
/// `latency_ms`.
#[derive(Debug, Clone)]
pub struct StubStage {
    pub kind: StageKind,
    pub latency_ms: f64,
    pub transform_seed: Seed,
    name: String,
}

impl StubStage {
    pub fn new(kind: StageKind, latency_ms: f64, transform_seed: Seed) -> Result<Self> {
        ensure!(kind != StageKind::Custom, "stub stages need a built-in kind");
        ensure!(latency_ms >= 0.0 && latency_ms.is_finite(), "latency must be >= 0, got {latency_ms}");
        Ok(Self {
            kind,
            latency_ms,
            transform_seed,
            name: kind.as_str().to_string(),
        })
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// The five stub stages of a profile in pipeline order.
    pub fn chain(profile: &LatencyProfile, seed: Seed) -> Vec<StubStage> {
        StageKind::PIPELINE
            .iter()
            .map(|k| StubStage::new(*k, profile.latency(*k), seed).expect("profile latencies validated"))
            .collect()
    }

    fn transform<T: Real>(&self, input: Payload<T>) -> Result<Payload<T>> {
        Ok(match self.kind {
            StageKind::Preprocess | StageKind::Postprocess => Payload::Image(input.into_image()?),
            StageKind::Encode => Payload::Latent(stub_encode(&input.into_image()?)?),
            StageKind::Denoise => Payload::Latent(stub_denoise(&input.into_latent()?, self.transform_seed)?),
            StageKind::Decode => {
                let lat = input.into_latent()?;
                Payload::Image(stub_decode(&lat)?)
            }
            StageKind::Custom => unreachable!("rejected in constructor"),
        })
    }
}

/// Image pass-through that only pads wall time, for per-frame costs outside
/// the model stages.
#[derive(Debug, Clone)]
pub struct DelayStage {
    pub latency_ms: f64,
    name: String,
}

impl DelayStage {
    pub fn new(name: impl Into<String>, latency_ms: f64) -> Result<Self> {
        ensure!(latency_ms >= 0.0 && latency_ms.is_finite(), "latency must be >= 0, got {latency_ms}");
        Ok(Self {
            latency_ms,
            name: name.into(),
        })
    }
}

impl<T: Real> Stage<T> for DelayStage {
    fn name(&self) -> &str {
        &self.name
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

    fn process(&mut self, input: Payload<T>) -> Result<Payload<T>> {
        let start = Instant::now();
        let out = Payload::Image(input.into_image()?);
        sleep_until(start + ms_to_duration(self.latency_ms));
        Ok(out)
    }

    fn declared_latency_ms(&self) -> Option<f64> {
        Some(self.latency_ms)
    }
}

impl<T: Real> Stage<T> for StubStage {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> StageKind {
        self.kind
    }

    fn input_kind(&self) -> PayloadKind {
        self.kind.signature().expect("built-in kind").0
    }

    fn output_kind(&self) -> PayloadKind {
        self.kind.signature().expect("built-in kind").1
    }

    fn process(&mut self, input: Payload<T>) -> Result<Payload<T>> {
        let start = Instant::now();
        let out = self.transform(input)?;
        sleep_until(start + ms_to_duration(self.latency_ms));
        Ok(out)
    }

    fn declared_latency_ms(&self) -> Option<f64> {
        Some(self.latency_ms)
    }
}

/// Per-stage latencies in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyProfile {
    pub name: String,
    pub preprocess_ms: f64,
    pub encode_ms: f64,
    pub denoise_ms: f64,
    pub decode_ms: f64,
    pub postprocess_ms: f64,
    /// Per-frame time not attributed to any stage.
    #[serde(default)]
    pub overhead_ms: f64,
}

/// Names accepted by [`profile_preset`].
pub const PRESET_NAMES: [&str; 4] = ["sdturbo-coreml", "sdxs-coreml", "pix2pix-turbo", "custom"];

impl LatencyProfile {
    pub fn validate(&self) -> Result<()> {
        for (k, v) in self.stages() {
            ensure!(v >= 0.0 && v.is_finite(), "profile {:?}: {k} latency must be >= 0, got {v}", self.name);
        }
        let o = self.overhead_ms;
        ensure!(o >= 0.0 && o.is_finite(), "profile {:?}: overhead must be >= 0, got {o}", self.name);
        Ok(())
    }

    pub fn latency(&self, kind: StageKind) -> f64 {
        match kind {
            StageKind::Preprocess => self.preprocess_ms,
            StageKind::Encode => self.encode_ms,
            StageKind::Denoise => self.denoise_ms,
            StageKind::Decode => self.decode_ms,
            StageKind::Postprocess => self.postprocess_ms,
            StageKind::Custom => 0.0,
        }
    }

    pub fn stages(&self) -> [(StageKind, f64); 5] {
        StageKind::PIPELINE.map(|k| (k, self.latency(k)))
    }

    /// Stage latencies plus unattributed overhead.
    pub fn total_ms(&self) -> f64 {
        self.stages().iter().map(|(_, v)| v).sum::<f64>() + self.overhead_ms
    }

    /// Every latency multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            name: self.name.clone(),
            preprocess_ms: self.preprocess_ms * factor,
            encode_ms: self.encode_ms * factor,
            denoise_ms: self.denoise_ms * factor,
            decode_ms: self.decode_ms * factor,
            postprocess_ms: self.postprocess_ms * factor,
            overhead_ms: self.overhead_ms * factor,
        }
    }
}

impl FromStr for LatencyProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        profile_preset(s)
    }
}

/// Compiled-in latency presets.
///
/// * `sdturbo-coreml`: the measured single-thread camera pipeline breakdown,
///   plus 1.2 ms of per-frame time no stage accounts for.
/// * `sdxs-coreml`: 24.4 ms denoiser, ~5 ms each for encode and decode and
///   ~10 ms of pre/postprocessing split evenly.
/// * `pix2pix-turbo`: 53 ms denoiser, 160 ms of VAE split evenly across
///   encode/decode and 37 ms of pre/postprocessing split evenly.
/// * `custom`: all zero, to be overridden from configuration.
///
/// Where only an aggregate is known the split affects per-stage attribution,
/// never the total.
pub fn profile_preset(name: &str) -> Result<LatencyProfile> {
    let p = |pre, enc, den, dec, post| LatencyProfile {
        name: name.to_string(),
        preprocess_ms: pre,
        encode_ms: enc,
        denoise_ms: den,
        decode_ms: dec,
        postprocess_ms: post,
        overhead_ms: 0.0,
    };
    match name {
        // The five stages sum to 76.5 ms against a 77.7 ms frame total.
        "sdturbo-coreml" => Ok(LatencyProfile {
            overhead_ms: 1.2,
            ..p(7.9, 6.5, 53.2, 6.5, 2.4)
        }),
        "sdxs-coreml" => Ok(p(5.0, 5.0, 24.4, 5.0, 5.0)),
        "pix2pix-turbo" => Ok(p(18.5, 80.0, 53.0, 80.0, 18.5)),
        "custom" => Ok(p(0.0, 0.0, 0.0, 0.0, 0.0)),
        other => Err(Error::NotFound(format!(
            "unknown latency preset {other:?}; valid presets: {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}
