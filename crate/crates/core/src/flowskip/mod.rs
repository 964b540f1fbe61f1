//! Optical-flow frame skipping.

mod farneback;
mod schedule;
mod warp;

pub use farneback::{farneback_flow, FlowParams};
pub use schedule::{
    skip_pipeline, theoretical_ms_per_frame, FlowResolution, FlowWarper, FrameKind, FrameWarper, SkipOutput,
    SkipSchedule,
};
pub use warp::{half_res_flow, upscale_half_res, warp_bilinear};
