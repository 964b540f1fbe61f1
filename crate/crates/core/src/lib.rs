//! Real-time streaming img2img building blocks: a staged inference engine
//! with latest-frame scheduling, temporal coherence filters, optical-flow
//! frame skipping, nearest-neighbour latent retrieval, and a benchmark
//! harness.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the common `f32` instantiations.

pub mod backend;
pub mod bench;
pub mod coherence;
pub mod engine;
mod error;
pub mod flowskip;
pub mod frame;
pub mod io;
pub mod knn;
pub mod raster;
pub mod rng;
mod scalar;
pub mod source;
pub mod synth;

pub use backend::{
    profile_preset, stub_decode, stub_denoise, stub_encode, LatencyProfile, Payload, PayloadKind, Stage, StageKind,
    StubStage, PRESET_NAMES,
};
pub use bench::{emit_table, measure, run_scenario, BenchScenario, ScenarioResult, TableFormat, TimingStats};
pub use coherence::{add_noise, ema_update, feedback_blend, EmaState, FeedbackState, NoiseConfig};
pub use engine::{
    predict_fps, run_sequential, run_threaded, ExecutionMode, Pipeline, PipelineReport, StageReport, StageSpec,
};
pub use error::{Error, Result};
pub use flowskip::{
    farneback_flow, skip_pipeline, theoretical_ms_per_frame, warp_bilinear, FlowParams, FlowResolution, SkipSchedule,
};
pub use frame::{Embedding, Flow, Frame, Latent};
pub use knn::{
    flat_search, hybrid_synthesize, ivfpq_build, ivfpq_search, weighted_latent_average, FlatIndex, IvfPqIndex,
    NeighborSet, VectorSet, VectorStore,
};
pub use rng::Seed;
pub use scalar::Real;
pub use synth::{synthetic_frames, Pattern, SyntheticSpec};

pub type FrameImage = Frame<f32>;
pub type LatentTensor = Latent<f32>;
pub type FlowField = Flow<f32>;
pub type EmbeddingVector = Embedding<f32>;
