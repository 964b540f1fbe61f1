//! Temporal-coherence operators: fixed-seed noise, latent feedback, EMA
//! smoothing of output frames and linear frame interpolation.
//!
//! The stateful operators are also available as [`Stage`]s so they can be
//! spliced into an inference chain.

use serde::{Deserialize, Serialize};

use crate::backend::{Payload, PayloadKind, Stage, StageKind};
use crate::error::{ensure, Result};
use crate::frame::{Frame, Latent};
use crate::rng::Seed;
use crate::scalar::Real;

pub const DEFAULT_FEEDBACK_ALPHA: f64 = 0.3;
pub const DEFAULT_EMA_BETA: f64 = 0.4;
pub const DEFAULT_NOISE_STRENGTH: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub seed: Seed,
    pub strength: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            seed: Seed(0),
            strength: DEFAULT_NOISE_STRENGTH,
        }
    }
}

/// The standard-normal tensor for `seed` and a latent shape. Identical for
/// every call with the same arguments.
pub fn noise_tensor<T: Real>(seed: Seed, channels: usize, height: usize, width: usize) -> Vec<T> {
    let mut rng = seed.rng();
    (0..channels * height * width).map(|_| T::lit(rng.next_normal())).collect()
}

/// `lat + strength · n(seed, shape)`.
pub fn add_noise<T: Real>(lat: &Latent<T>, cfg: &NoiseConfig) -> Result<Latent<T>> {
    ensure!(cfg.strength >= 0.0 && cfg.strength.is_finite(), "noise strength must be >= 0");
    if cfg.strength == 0.0 {
        return Ok(lat.clone());
    }
    let noise = noise_tensor::<T>(cfg.seed, lat.channels, lat.height, lat.width);
    let s = T::lit(cfg.strength);
    let mut out = lat.clone();
    for (o, n) in out.data.iter_mut().zip(noise) {
        *o += s * n;
    }
    Ok(out)
}

/// Output-feedback state: the previous blended latent.
#[derive(Debug, Clone)]
pub struct FeedbackState<T> {
    alpha: f64,
    pub prev_latent: Option<Latent<T>>,
}

impl<T: Real> FeedbackState<T> {
    pub fn new(alpha: f64) -> Result<Self> {
        ensure!((0.0..=1.0).contains(&alpha), "feedback alpha must be in [0, 1], got {alpha}");
        Ok(Self { alpha, prev_latent: None })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// `(1 − α)·new + α·prev`, storing the result as the next `prev`.
pub fn feedback_blend<T: Real>(new_lat: &Latent<T>, state: &mut FeedbackState<T>) -> Result<Latent<T>> {
    let out = match &state.prev_latent {
        None => new_lat.clone(),
        Some(prev) => {
            ensure!(
                prev.same_shape(new_lat),
                "feedback shape mismatch: previous {} vs new {}",
                prev.shape_string(),
                new_lat.shape_string()
            );
            let mut out = new_lat.clone();
            out.data = convex_blend(&new_lat.data, &prev.data, state.alpha);
            out
        }
    };
    state.prev_latent = Some(out.clone());
    Ok(out)
}

/// `(1 − w)·a + w·b`, exact at `w ∈ {0, 1}`.
fn convex_blend<T: Real>(a: &[T], b: &[T], w: f64) -> Vec<T> {
    if w == 0.0 {
        return a.to_vec();
    }
    if w == 1.0 {
        return b.to_vec();
    }
    let (wa, wb) = (T::lit(1.0 - w), T::lit(w));
    a.iter().zip(b).map(|(x, y)| wa * *x + wb * *y).collect()
}

#[derive(Debug, Clone)]
pub struct EmaState<T> {
    beta: f64,
    pub accum: Option<Frame<T>>,
}

impl<T: Real> EmaState<T> {
    /// `beta` is the weight on the incoming frame.
    pub fn new(beta: f64) -> Result<Self> {
        ensure!(beta > 0.0 && beta <= 1.0, "ema beta must be in (0, 1], got {beta}");
        Ok(Self { beta, accum: None })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// `accum ← β·frame + (1 − β)·accum`; the first frame initializes `accum`.
pub fn ema_update<T: Real>(state: &mut EmaState<T>, frame: &Frame<T>) -> Result<Frame<T>> {
    let next = match &state.accum {
        None => frame.clone(),
        Some(acc) => {
            ensure!(
                acc.same_shape(frame),
                "ema shape mismatch: accumulator {} vs frame {}",
                acc.shape_string(),
                frame.shape_string()
            );
            let mut out = frame.clone();
            out.data = convex_blend(&acc.data, &frame.data, state.beta)
                .into_iter()
                .map(|v| v.max(T::zero()).min(T::one()))
                .collect();
            out
        }
    };
    state.accum = Some(next.clone());
    Ok(next)
}

/// `(1 − t)·a + t·b` per sample.
pub fn linear_interpolate<T: Real>(a: &Frame<T>, b: &Frame<T>, t: f64) -> Result<Frame<T>> {
    ensure!(a.same_shape(b), "interpolation shape mismatch: {} vs {}", a.shape_string(), b.shape_string());
    ensure!((0.0..=1.0).contains(&t), "interpolation t must be in [0, 1], got {t}");
    let mut out = a.clone();
    out.data = convex_blend(&a.data, &b.data, t)
        .into_iter()
        .map(|v| v.max(T::zero()).min(T::one()))
        .collect();
    Ok(out)
}

/// Adds the fixed-seed noise tensor to every latent.
pub struct NoiseStage {
    pub cfg: NoiseConfig,
}

impl<T: Real> Stage<T> for NoiseStage {
    fn name(&self) -> &str {
        "noise"
    }
    fn kind(&self) -> StageKind {
        StageKind::Custom
    }
    fn input_kind(&self) -> PayloadKind {
        PayloadKind::Latent
    }
    fn output_kind(&self) -> PayloadKind {
        PayloadKind::Latent
    }
    fn process(&mut self, input: Payload<T>) -> Result<Payload<T>> {
        Ok(Payload::Latent(add_noise(&input.into_latent()?, &self.cfg)?))
    }
}

pub struct FeedbackStage<T> {
    pub state: FeedbackState<T>,
}

impl<T: Real> Stage<T> for FeedbackStage<T> {
    fn name(&self) -> &str {
        "feedback"
    }
    fn kind(&self) -> StageKind {
        StageKind::Custom
    }
    fn input_kind(&self) -> PayloadKind {
        PayloadKind::Latent
    }
    fn output_kind(&self) -> PayloadKind {
        PayloadKind::Latent
    }
    fn process(&mut self, input: Payload<T>) -> Result<Payload<T>> {
        Ok(Payload::Latent(feedback_blend(&input.into_latent()?, &mut self.state)?))
    }
}

pub struct EmaStage<T> {
    pub state: EmaState<T>,
}

impl<T: Real> Stage<T> for EmaStage<T> {
    fn name(&self) -> &str {
        "ema"
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
        Ok(Payload::Image(ema_update(&mut self.state, &input.into_image()?)?))
    }
}
