//! Timing statistics, benchmark scenarios and report tables.

use std::fmt::{self, Write as _};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::backend::{profile_preset, LatencyProfile, StageKind, StubStage};
use crate::engine::{
    predict_fps, report::csv_err, run_sequential, run_threaded, ExecutionMode, Pipeline, PipelineReport, StageReport,
    WARMUP_FRAMES,
};
use crate::error::{ensure, Error, Result};
use crate::flowskip::{skip_pipeline, theoretical_ms_per_frame, FlowParams, FlowResolution, FlowWarper, SkipSchedule};
use crate::knn::{flat_search, ClusteredSpec, FlatIndex, IvfPqIndex, IvfPqParams, VectorSet};
use crate::rng::Seed;
use crate::source::{NullSink, PacedSource};
use crate::synth::{Pattern, SyntheticSource, SyntheticSpec};

/// Summary of latency samples in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub samples: usize,
    pub warmup_excluded: usize,
}

impl TimingStats {
    /// Percentiles use the nearest-rank definition, so each one is an
    /// observed sample.
    pub fn from_samples(samples: &[f64], warmup_excluded: usize) -> Result<Self> {
        ensure!(!samples.is_empty(), "timing statistics need at least one sample");
        ensure!(samples.iter().all(|s| s.is_finite()), "timing samples must be finite");
        let mut sorted = samples.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let rank = |p: f64| {
            let r = (p * sorted.len() as f64).ceil() as usize;
            sorted[r.clamp(1, sorted.len()) - 1]
        };
        Ok(Self {
            mean_ms: samples.iter().sum::<f64>() / samples.len() as f64,
            p50_ms: rank(0.50),
            p95_ms: rank(0.95),
            min_ms: sorted[0],
            max_ms: sorted[sorted.len() - 1],
            samples: samples.len(),
            warmup_excluded,
        })
    }
}

pub const DEFAULT_WARMUP: usize = 3;
/// Samples shorter than this many clock ticks are batched.
pub const GRANULARITY_FACTOR: f64 = 50.0;

/// Smallest observable step of the monotonic clock.
pub fn clock_granularity() -> Duration {
    static GRAN: OnceLock<Duration> = OnceLock::new();
    *GRAN.get_or_init(|| {
        let mut best = Duration::from_secs(1);
        for _ in 0..200 {
            let a = Instant::now();
            let mut b = Instant::now();
            while b == a {
                b = Instant::now();
            }
            best = best.min(b - a);
        }
        best
    })
}

/// Times `iters` calls of `f`; the first `warmup` are discarded.
///
/// When one call is shorter than [`GRANULARITY_FACTOR`] clock ticks, each
/// sample times a batch of calls and reports the per-call mean.
pub fn measure<F: FnMut()>(mut f: F, warmup: usize, iters: usize) -> Result<TimingStats> {
    ensure!(iters >= 1, "iters must be >= 1");
    ensure!(warmup < iters, "warmup ({warmup}) must be smaller than iters ({iters})");
    let floor = clock_granularity().as_secs_f64() * GRANULARITY_FACTOR;

    let t0 = Instant::now();
    f();
    let first = t0.elapsed().as_secs_f64();
    let batch = if first >= floor {
        1
    } else {
        (floor / first.max(1e-9)).ceil().min(1e6) as usize
    };

    let mut samples = Vec::with_capacity(iters - warmup);
    for i in 1..iters {
        let t = Instant::now();
        for _ in 0..batch {
            f();
        }
        let ms = t.elapsed().as_secs_f64() * 1000.0 / batch as f64;
        if i >= warmup {
            samples.push(ms);
        }
    }
    // The probe call counts as the first iteration.
    if warmup == 0 {
        samples.insert(0, first * 1000.0);
    }
    TimingStats::from_samples(&samples, warmup)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchMode {
    Sequential,
    Threaded,
    Flowskip,
    Knn,
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchMode::Sequential => "sequential",
            BenchMode::Threaded => "threaded",
            BenchMode::Flowskip => "flowskip",
            BenchMode::Knn => "knn",
        })
    }
}

/// Inline stage latencies, all defaulting to zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageLatencies {
    pub preprocess_ms: f64,
    pub encode_ms: f64,
    pub denoise_ms: f64,
    pub decode_ms: f64,
    pub postprocess_ms: f64,
    pub overhead_ms: f64,
}

/// Mode-specific settings. Which keys are required depends on the mode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    /// Skip interval (flowskip).
    pub n: Option<usize>,
    pub unet_ms: Option<f64>,
    pub warp_ms: Option<f64>,
    pub flow_resolution: Option<FlowResolution>,
    /// Stored vectors (knn).
    pub store_size: Option<usize>,
    pub dim: Option<usize>,
    pub k: Option<usize>,
    /// `flat` or `ivfpq`.
    pub index: Option<String>,
    pub nlist: Option<usize>,
    pub m: Option<usize>,
    pub nprobe: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchScenario {
    pub name: String,
    pub mode: BenchMode,
    /// Preset name.
    #[serde(default)]
    pub profile: Option<String>,
    #[serde(default)]
    pub stages: Option<StageLatencies>,
    #[serde(default)]
    pub parameters: ScenarioParams,
    /// Frame count (sequential, flowskip) or query count (knn).
    #[serde(default)]
    pub frames: Option<usize>,
    /// Run length (threaded).
    #[serde(default)]
    pub duration_s: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// A scenario file holds a bare list or `{"scenarios": [...]}`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Wrapped {
    scenarios: Vec<BenchScenario>,
}

/// Parses and validates a scenario file. Unknown keys are errors.
pub fn parse_scenarios(text: &str) -> Result<Vec<BenchScenario>> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("scenario file: {e}")))?;
    let list = if value.is_array() {
        serde_json::from_value::<Vec<BenchScenario>>(value)
    } else {
        serde_json::from_value::<Wrapped>(value).map(|w| w.scenarios)
    }
    .map_err(|e| Error::Format(format!("scenario file: {e}")))?;
    ensure!(!list.is_empty(), "scenario list is empty");
    for s in &list {
        s.validate()?;
    }
    Ok(list)
}

impl BenchScenario {
    pub fn validate(&self) -> Result<()> {
        let p = &self.parameters;
        let name = &self.name;
        match self.mode {
            BenchMode::Sequential | BenchMode::Threaded => {
                ensure!(
                    self.profile.is_some() != self.stages.is_some(),
                    "scenario {name:?}: give exactly one of profile or stages"
                );
                self.latency_profile()?.validate()?;
                if self.mode == BenchMode::Sequential {
                    ensure!(
                        self.frames.is_some_and(|f| f > WARMUP_FRAMES),
                        "scenario {name:?}: sequential mode needs frames > {WARMUP_FRAMES}"
                    );
                } else {
                    ensure!(
                        self.duration_s.is_some_and(|d| d > 0.0),
                        "scenario {name:?}: threaded mode needs duration_s > 0"
                    );
                }
            }
            BenchMode::Flowskip => {
                ensure!(p.n.is_some_and(|n| n >= 1), "scenario {name:?}: flowskip needs parameters.n >= 1");
                ensure!(
                    p.unet_ms.is_some_and(|v| v >= 0.0) && p.warp_ms.is_some_and(|v| v >= 0.0),
                    "scenario {name:?}: flowskip needs parameters.unet_ms and parameters.warp_ms"
                );
                ensure!(
                    self.frames.is_some_and(|f| f >= 1),
                    "scenario {name:?}: flowskip needs frames >= 1"
                );
            }
            BenchMode::Knn => {
                ensure!(
                    p.store_size.is_some_and(|v| v >= 1) && p.dim.is_some_and(|v| v >= 1) && p.k.is_some_and(|v| v >= 1),
                    "scenario {name:?}: knn needs parameters.store_size, dim and k"
                );
                ensure!(
                    self.frames.is_some_and(|f| f >= 2),
                    "scenario {name:?}: knn needs frames (queries) >= 2"
                );
                match p.index.as_deref().unwrap_or("flat") {
                    "flat" => {}
                    "ivfpq" => self.ivfpq_params()?.validate(p.dim.unwrap_or(0))?,
                    other => return Err(Error::invalid(format!("scenario {name:?}: unknown index {other:?}"))),
                }
            }
        }
        Ok(())
    }

    pub fn latency_profile(&self) -> Result<LatencyProfile> {
        match (&self.profile, &self.stages) {
            (Some(name), None) => profile_preset(name),
            (None, Some(s)) => Ok(LatencyProfile {
                name: self.name.clone(),
                preprocess_ms: s.preprocess_ms,
                encode_ms: s.encode_ms,
                denoise_ms: s.denoise_ms,
                decode_ms: s.decode_ms,
                postprocess_ms: s.postprocess_ms,
                overhead_ms: s.overhead_ms,
            }),
            _ => Err(Error::invalid(format!(
                "scenario {:?}: give exactly one of profile or stages",
                self.name
            ))),
        }
    }

    fn ivfpq_params(&self) -> Result<IvfPqParams> {
        let p = &self.parameters;
        let d = IvfPqParams::default();
        Ok(IvfPqParams {
            nlist: p.nlist.unwrap_or(d.nlist),
            m: p.m.unwrap_or(d.m),
            nprobe: p.nprobe.unwrap_or(d.nprobe),
            ..d
        })
    }

    fn seed(&self) -> Seed {
        Seed(self.seed.unwrap_or(0))
    }
}

/// Outcome of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub name: String,
    pub mode: BenchMode,
    pub predicted_fps: Option<f64>,
    pub measured_fps: f64,
    /// measured / predicted.
    pub ratio: Option<f64>,
    /// Set when a sequential ratio falls outside [`SEQUENTIAL_RATIO_RANGE`].
    pub flagged: bool,
    pub predicted_ms_per_frame: Option<f64>,
    pub measured_ms_per_frame: f64,
    /// Flowskip only: measured minus predicted ms/frame.
    pub overhead_ms_per_frame: Option<f64>,
    pub report: PipelineReport,
}

pub const SEQUENTIAL_RATIO_RANGE: (f64, f64) = (0.85, 1.05);

fn bench_source_spec(seed: Seed, count: usize) -> SyntheticSpec {
    SyntheticSpec {
        pattern: Pattern::BandlimitedNoise,
        motion: (1.0, 0.5),
        count,
        width: 64,
        height: 64,
        seed,
    }
}

/// Runs one scenario on sleep-padded stub stages.
pub fn run_scenario(s: &BenchScenario) -> Result<ScenarioResult> {
    s.validate()?;
    let seed = s.seed();
    match s.mode {
        BenchMode::Sequential => {
            let profile = s.latency_profile()?;
            let frames = s.frames.unwrap_or_default();
            let mut pipeline = Pipeline::<f32>::stub(&profile, seed)?;
            let predicted = pipeline.predict_fps(ExecutionMode::Sequential)?;
            let mut src = SyntheticSource::new(&bench_source_spec(seed, frames))?;
            let report = run_sequential(&mut pipeline, &mut src, None, frames)?;
            Ok(finish(s, Some(predicted), report, None))
        }
        BenchMode::Threaded => {
            // Capture carries preprocessing and encoding, display carries
            // decoding, postprocessing and overhead, inference runs the
            // denoiser.
            let profile = s.latency_profile()?;
            let capture_ms = profile.preprocess_ms + profile.encode_ms;
            let display_ms = profile.decode_ms + profile.postprocess_ms + profile.overhead_ms;
            let predicted = predict_fps(
                &[Some(capture_ms), Some(profile.denoise_ms), Some(display_ms)],
                ExecutionMode::Threaded,
            )?;
            let mut pipeline = Pipeline::<f32>::new(vec![
                StubStage::new(StageKind::Encode, 0.0, seed)?.into(),
                StubStage::new(StageKind::Denoise, profile.denoise_ms, seed)?.into(),
                StubStage::new(StageKind::Decode, 0.0, seed)?.into(),
            ])?;
            let mut capture = PacedSource::new(SyntheticSource::endless(&bench_source_spec(seed, 0))?, capture_ms);
            let mut display = NullSink::new(display_ms);
            let report = run_threaded(&mut capture, &mut pipeline, &mut display, s.duration_s.unwrap_or(1.0))?;
            Ok(finish(s, Some(predicted), report, None))
        }
        BenchMode::Flowskip => {
            let p = &s.parameters;
            let (n, unet, warp) = (p.n.unwrap_or(1), p.unet_ms.unwrap_or(0.0), p.warp_ms.unwrap_or(0.0));
            let predicted_ms = theoretical_ms_per_frame(unet, warp, n)?;
            let profile = LatencyProfile {
                name: s.name.clone(),
                preprocess_ms: 0.0,
                encode_ms: 0.0,
                denoise_ms: unet,
                decode_ms: 0.0,
                postprocess_ms: 0.0,
                overhead_ms: 0.0,
            };
            let mut chain = Pipeline::<f32>::stub(&profile, seed)?;
            let resolution = p.flow_resolution.unwrap_or(FlowResolution::Half);
            let schedule = SkipSchedule::new(n, resolution)?;
            let mut warper = FlowWarper::new(FlowParams::default(), resolution).with_min_latency(warp);
            let frames = s.frames.unwrap_or(1);
            let mut src = SyntheticSource::new(&bench_source_spec(seed, frames))?;
            let out = skip_pipeline(&schedule, &mut chain, &mut src, &mut warper, None, frames)?;
            let mut r = finish(s, Some(1000.0 / predicted_ms), out.report, Some(predicted_ms));
            r.measured_ms_per_frame = out.measured_ms_per_frame;
            r.overhead_ms_per_frame = Some(out.measured_ms_per_frame - predicted_ms);
            Ok(r)
        }
        BenchMode::Knn => run_knn(s, seed),
    }
}

fn run_knn(s: &BenchScenario, seed: Seed) -> Result<ScenarioResult> {
    let p = &s.parameters;
    let (n, dim, k) = (p.store_size.unwrap_or(1), p.dim.unwrap_or(1), p.k.unwrap_or(1));
    ensure!(k <= n, "scenario {:?}: k = {k} exceeds store_size {n}", s.name);
    let queries = s.frames.unwrap_or(2);
    let gen = ClusteredSpec::for_size(n, dim, seed).generator::<f32>()?;
    let data = gen.rows(0, n);
    let qs = gen.rows(n as u64, queries);
    let mut next = 0usize;
    let mut pick = || {
        let q = &qs[(next % queries) * dim..(next % queries + 1) * dim];
        next += 1;
        q
    };
    let stats = match p.index.as_deref().unwrap_or("flat") {
        "ivfpq" => {
            let params = s.ivfpq_params()?;
            let index = IvfPqIndex::build(&data, dim, &params, seed)?;
            let mut err = None;
            let stats = measure(
                || {
                    if let Err(e) = index.search(pick(), k, params.nprobe) {
                        err.get_or_insert(e);
                    }
                },
                DEFAULT_WARMUP.min(queries - 1),
                queries,
            )?;
            if let Some(e) = err {
                return Err(e);
            }
            stats
        }
        _ => {
            let set = VectorSet::new(dim, data)?;
            let flat = FlatIndex::new(&set);
            let mut err = None;
            let stats = measure(
                || {
                    if let Err(e) = flat_search(&flat, pick(), k) {
                        err.get_or_insert(e);
                    }
                },
                DEFAULT_WARMUP.min(queries - 1),
                queries,
            )?;
            if let Some(e) = err {
                return Err(e);
            }
            stats
        }
    };
    let report = PipelineReport {
        end_to_end_mean_ms: stats.mean_ms,
        achieved_fps: 1000.0 / stats.mean_ms,
        frames_displayed: stats.samples as u64,
        dropped_frames: 0,
        duration_s: stats.mean_ms * stats.samples as f64 / 1000.0,
        warmup_frames: stats.warmup_excluded,
        stages: vec![StageReport {
            name: "search".into(),
            stats,
        }],
        displayed_frame_ids: Vec::new(),
    };
    Ok(finish(s, None, report, None))
}

fn finish(s: &BenchScenario, predicted_fps: Option<f64>, report: PipelineReport, predicted_ms: Option<f64>) -> ScenarioResult {
    let measured_fps = report.achieved_fps;
    let ratio = predicted_fps.map(|p| measured_fps / p);
    let flagged = s.mode == BenchMode::Sequential
        && ratio.is_some_and(|r| !(SEQUENTIAL_RATIO_RANGE.0..=SEQUENTIAL_RATIO_RANGE.1).contains(&r));
    ScenarioResult {
        name: s.name.clone(),
        mode: s.mode,
        predicted_fps,
        measured_fps,
        ratio,
        flagged,
        predicted_ms_per_frame: predicted_ms.or(predicted_fps.map(|p| 1000.0 / p)),
        measured_ms_per_frame: 1000.0 / measured_fps,
        overhead_ms_per_frame: None,
        report,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
}

pub const REPORT_FOOTER: &str = "Stage latencies are sleep-padded stubs set to measured per-stage device times; \
predicted FPS applies the throughput model to those times, so agreement checks the pipeline arithmetic and \
scheduling, not the hardware.";

/// One row of the long-format CSV: scenario columns repeated per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCsvRow {
    pub scenario: String,
    pub mode: BenchMode,
    pub predicted_fps: Option<f64>,
    pub measured_fps: f64,
    pub ratio: Option<f64>,
    pub stage: String,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub samples: usize,
    pub proportion_pct: f64,
}

/// The CSV rows `emit_table` writes for `results`.
pub fn csv_rows(results: &[ScenarioResult]) -> Vec<BenchCsvRow> {
    let mut rows = Vec::new();
    for r in results {
        for (st, (_, pct)) in r.report.stages.iter().zip(r.report.proportions()) {
            rows.push(BenchCsvRow {
                scenario: r.name.clone(),
                mode: r.mode,
                predicted_fps: r.predicted_fps,
                measured_fps: r.measured_fps,
                ratio: r.ratio,
                stage: st.name.clone(),
                mean_ms: st.stats.mean_ms,
                p50_ms: st.stats.p50_ms,
                p95_ms: st.stats.p95_ms,
                samples: st.stats.samples,
                proportion_pct: pct,
            });
        }
    }
    rows
}

pub fn parse_bench_csv(text: &str) -> Result<Vec<BenchCsvRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.prec$}"))
}

/// Renders results as a summary table plus per-scenario stage tables, or as
/// long-format CSV.
pub fn emit_table(results: &[ScenarioResult], format: TableFormat) -> Result<String> {
    ensure!(!results.is_empty(), "no scenario results to tabulate");
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in csv_rows(results) {
                w.serialize(row).map_err(csv_err)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        TableFormat::Markdown => {
            let mut out = String::from(
                "| Scenario | Mode | Predicted FPS | Measured FPS | Ratio | Predicted ms/frame | Measured ms/frame |\n\
                 |---|---|---:|---:|---:|---:|---:|\n",
            );
            for r in results {
                let ratio = match (r.ratio, r.flagged) {
                    (Some(x), true) => format!("{x:.3} (outside {}-{})", SEQUENTIAL_RATIO_RANGE.0, SEQUENTIAL_RATIO_RANGE.1),
                    (x, _) => opt(x, 3),
                };
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {:.2} | {} | {} | {:.2} |",
                    r.name,
                    r.mode,
                    opt(r.predicted_fps, 2),
                    r.measured_fps,
                    ratio,
                    opt(r.predicted_ms_per_frame, 2),
                    r.measured_ms_per_frame
                );
            }
            for r in results {
                let _ = writeln!(out, "\n### {}\n", r.name);
                out.push_str(&r.report.to_markdown());
                if let Some(o) = r.overhead_ms_per_frame {
                    let _ = writeln!(
                        out,
                        "\nSchedule overhead: {o:+.2} ms/frame (measured {:.2} vs model {:.2}).",
                        r.measured_ms_per_frame,
                        r.predicted_ms_per_frame.unwrap_or(f64::NAN)
                    );
                }
                if r.report.dropped_frames > 0 {
                    let _ = writeln!(out, "\nDropped frames: {}.", r.report.dropped_frames);
                }
            }
            let _ = writeln!(out, "\n{REPORT_FOOTER}");
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_stats() {
        let s = TimingStats::from_samples(&[4.5], 0).unwrap();
        assert_eq!((s.mean_ms, s.p50_ms, s.p95_ms, s.min_ms, s.max_ms), (4.5, 4.5, 4.5, 4.5, 4.5));
    }

    #[test]
    fn nearest_rank_percentiles() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        let s = TimingStats::from_samples(&v, 3).unwrap();
        assert_eq!((s.p50_ms, s.p95_ms, s.samples, s.warmup_excluded), (10.0, 19.0, 20, 3));
        assert_eq!(s.mean_ms, 10.5);
        assert!(TimingStats::from_samples(&[], 0).is_err());
    }

    #[test]
    fn measure_counts_and_rejects() {
        let mut calls = 0;
        let s = measure(|| calls += 1, 2, 10).unwrap();
        assert_eq!(s.samples, 8);
        assert!(calls >= 10);
        assert!(measure(|| (), 5, 5).is_err());
        assert!(measure(|| (), 0, 0).is_err());
        let one = measure(|| std::thread::sleep(Duration::from_millis(2)), 0, 1).unwrap();
        assert_eq!(one.samples, 1);
        assert_eq!(one.p50_ms, one.mean_ms);
    }

    #[test]
    fn sleep_calibration() {
        let s = measure(|| std::thread::sleep(Duration::from_millis(10)), DEFAULT_WARMUP, 50).unwrap();
        assert!(s.mean_ms >= 10.0 && s.mean_ms <= 12.0, "{s:?}");
    }

    #[test]
    fn scenario_parsing() {
        let text = r#"[{"name": "a", "mode": "sequential", "profile": "sdxs-coreml", "frames": 10}]"#;
        let list = parse_scenarios(text).unwrap();
        assert_eq!(list[0].latency_profile().unwrap().denoise_ms, 24.4);
        let unknown = r#"[{"name": "a", "mode": "sequential", "profile": "sdxs-coreml", "frames": 10, "fps": 3}]"#;
        assert!(parse_scenarios(unknown).unwrap_err().to_string().contains("fps"));
        assert!(parse_scenarios("[]").is_err());
        let both = r#"[{"name": "a", "mode": "sequential", "profile": "custom", "stages": {}, "frames": 10}]"#;
        assert!(parse_scenarios(both).is_err());
        let incomplete = r#"{"scenarios": [{"name": "f", "mode": "flowskip", "parameters": {"n": 3}, "frames": 9}]}"#;
        assert!(parse_scenarios(incomplete).is_err());
    }

    fn quick() -> BenchScenario {
        BenchScenario {
            name: "quick".into(),
            mode: BenchMode::Sequential,
            profile: None,
            stages: Some(StageLatencies {
                preprocess_ms: 1.0,
                denoise_ms: 3.0,
                ..StageLatencies::default()
            }),
            parameters: ScenarioParams::default(),
            frames: Some(20),
            duration_s: None,
            seed: None,
        }
    }

    #[test]
    fn table_shapes_and_csv_roundtrip() {
        let r = run_scenario(&quick()).unwrap();
        assert!(emit_table(&[], TableFormat::Markdown).is_err());
        let md = emit_table(std::slice::from_ref(&r), TableFormat::Markdown).unwrap();
        let summary_rows = md.lines().take_while(|l| l.starts_with('|')).count();
        assert_eq!(summary_rows, 3);
        assert!(md.contains("| Stage | Time | Proportion |"));
        let pct: f64 = r.report.proportions().iter().map(|(_, p)| p).sum();
        assert!((pct - 100.0).abs() < 1.0);

        let csv = emit_table(std::slice::from_ref(&r), TableFormat::Csv).unwrap();
        assert_eq!(parse_bench_csv(&csv).unwrap(), csv_rows(&[r]));
    }
}
