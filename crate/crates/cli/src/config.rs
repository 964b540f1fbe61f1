//! Strict JSON application config. Every section and key is optional;
//! anything unrecognised is rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use streamskip::bench::BenchScenario;
use streamskip::coherence::{DEFAULT_EMA_BETA, DEFAULT_FEEDBACK_ALPHA, DEFAULT_NOISE_STRENGTH};
use streamskip::flowskip::FlowResolution;
use streamskip::knn::IvfPqParams;
use streamskip::{profile_preset, FlowParams, LatencyProfile, Pattern, Seed, SyntheticSpec};

use crate::error::{CliError, CliResult, Classify};

/// Overrides every seed in a config or scenario.
pub const SEED_ENV: &str = "STREAMSKIP_SEED";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub pipeline: PipelineConfig,
    pub flow: FlowConfig,
    pub knn: KnnConfig,
    pub io: IoConfig,
    pub bench: BenchConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Plain,
    Flowskip,
    Knn,
    Hybrid,
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::Plain => "plain",
            RunMode::Flowskip => "flowskip",
            RunMode::Knn => "knn",
            RunMode::Hybrid => "hybrid",
        })
    }
}

impl std::str::FromStr for RunMode {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "plain" => Ok(RunMode::Plain),
            "flowskip" => Ok(RunMode::Flowskip),
            "knn" => Ok(RunMode::Knn),
            "hybrid" => Ok(RunMode::Hybrid),
            other => Err(CliError::usage(format!(
                "unknown mode {other:?} (expected plain, flowskip, knn or hybrid)"
            ))),
        }
    }
}

/// A preset name or an inline profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileRef {
    Preset(String),
    Inline(LatencyProfile),
}

impl ProfileRef {
    pub fn resolve(&self) -> CliResult<LatencyProfile> {
        let p = match self {
            ProfileRef::Preset(name) => profile_preset(name).usage_err()?,
            ProfileRef::Inline(p) => p.clone(),
        };
        p.validate().usage_err()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mode: RunMode,
    pub profile: ProfileRef,
    /// Multiplies every profile latency.
    pub latency_scale: f64,
    /// Frames to process; defaults to the whole input.
    pub frames: Option<usize>,
    pub coherence: CoherenceConfig,
    pub seed: Seed,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: RunMode::Plain,
            profile: ProfileRef::Preset("sdturbo-coreml".into()),
            latency_scale: 1.0,
            frames: None,
            coherence: CoherenceConfig::default(),
            seed: Seed(0),
        }
    }
}

/// `null` disables a filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoherenceConfig {
    pub noise_strength: Option<f64>,
    pub feedback_alpha: Option<f64>,
    pub ema_beta: Option<f64>,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        Self {
            noise_strength: Some(DEFAULT_NOISE_STRENGTH),
            feedback_alpha: Some(DEFAULT_FEEDBACK_ALPHA),
            ema_beta: Some(DEFAULT_EMA_BETA),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub params: FlowParams,
    /// The full chain runs on every `n`-th frame.
    pub n: usize,
    pub resolution: FlowResolution,
    /// Minimum wall time of a warped frame.
    pub warp_latency_ms: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            params: FlowParams::default(),
            n: 3,
            resolution: FlowResolution::Half,
            warp_latency_ms: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Flat,
    Ivfpq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnConfig {
    pub index: IndexKind,
    pub k: usize,
    /// Softmax temperature over neighbour distances; mean distance if unset.
    pub temperature: Option<f64>,
    /// Reference frames in the retrieval store.
    pub store_size: usize,
    /// Frames are embedded as a `embed_side²` grayscale thumbnail.
    pub embed_side: usize,
    /// Largest translation of a reference frame, in pixels.
    pub max_offset: f64,
    pub ivfpq: IvfPqParams,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            index: IndexKind::Flat,
            k: 4,
            temperature: None,
            store_size: 512,
            embed_side: 16,
            max_offset: 12.0,
            ivfpq: IvfPqParams {
                nlist: 16,
                m: 16,
                nprobe: 4,
                ..IvfPqParams::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    /// Directory of `.ppm` frames, read in name order. Replaces the
    /// synthetic source when set.
    pub input_dir: Option<PathBuf>,
    pub synthetic: SyntheticSpec,
    pub output_dir: PathBuf,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            input_dir: None,
            synthetic: SyntheticSpec {
                pattern: Pattern::BandlimitedNoise,
                motion: (1.0, 0.5),
                count: 64,
                width: 128,
                height: 128,
                seed: Seed(0),
            },
            output_dir: PathBuf::from("streamskip-out"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub scenarios: Vec<BenchScenario>,
}

impl AppConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Replaces every seed with `seed`.
    pub fn override_seeds(&mut self, seed: u64) {
        self.pipeline.seed = Seed(seed);
        self.io.synthetic.seed = Seed(seed);
        for s in &mut self.bench.scenarios {
            s.seed = Some(seed);
        }
    }

    /// Checks values and that referenced paths exist.
    pub fn validate(&self) -> CliResult<()> {
        let p = &self.pipeline;
        if !(p.latency_scale >= 0.0 && p.latency_scale.is_finite()) {
            return Err(CliError::usage(format!("pipeline.latency_scale must be >= 0, got {}", p.latency_scale)));
        }
        p.profile.resolve()?;
        if p.frames == Some(0) {
            return Err(CliError::usage("pipeline.frames must be >= 1"));
        }
        let c = &p.coherence;
        for (key, v) in [
            ("noise_strength", c.noise_strength),
            ("feedback_alpha", c.feedback_alpha),
            ("ema_beta", c.ema_beta),
        ] {
            if let Some(v) = v {
                let ok = if key == "noise_strength" { v >= 0.0 && v.is_finite() } else { (0.0..=1.0).contains(&v) };
                if !ok {
                    return Err(CliError::usage(format!("pipeline.coherence.{key} out of range: {v}")));
                }
            }
        }
        self.flow.params.validate().usage_err()?;
        if self.flow.n == 0 {
            return Err(CliError::usage("flow.n must be >= 1"));
        }
        if !(self.flow.warp_latency_ms >= 0.0 && self.flow.warp_latency_ms.is_finite()) {
            return Err(CliError::usage("flow.warp_latency_ms must be >= 0"));
        }
        let k = &self.knn;
        if k.k == 0 || k.store_size == 0 || k.embed_side == 0 {
            return Err(CliError::usage("knn.k, knn.store_size and knn.embed_side must be >= 1"));
        }
        if k.k > k.store_size {
            return Err(CliError::usage(format!("knn.k = {} exceeds knn.store_size = {}", k.k, k.store_size)));
        }
        if let Some(t) = k.temperature {
            if !(t > 0.0 && t.is_finite()) {
                return Err(CliError::usage(format!("knn.temperature must be > 0, got {t}")));
            }
        }
        if k.index == IndexKind::Ivfpq {
            k.ivfpq.validate(k.embed_side * k.embed_side).usage_err()?;
            if k.store_size < k.ivfpq.min_train() {
                return Err(CliError::usage(format!(
                    "knn.store_size = {} is below the {} vectors ivfpq training needs",
                    k.store_size,
                    k.ivfpq.min_train()
                )));
            }
        }
        if let Some(dir) = &self.io.input_dir {
            if !dir.is_dir() {
                return Err(CliError::usage(format!("input directory {} does not exist", dir.display())));
            }
        }
        for s in &self.bench.scenarios {
            s.validate().usage_err()?;
        }
        Ok(())
    }
}

/// Reads [`SEED_ENV`]; unset means no override.
pub fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| CliError::usage(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::usage(format!("{SEED_ENV}: {e}"))),
    }
}
