//! `streamskip run`: push a frame stream through the configured mode and write
//! numbered PPM frames plus a timing report.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use streamskip::backend::{DelayStage, Payload, PayloadKind, Stage, StageKind, StubStage};
use streamskip::coherence::{EmaStage, EmaState, FeedbackStage, FeedbackState, NoiseConfig, NoiseStage};
use streamskip::engine::{run_sequential, Pipeline, PipelineReport, StageSpec};
use streamskip::frame::LATENT_SCALE;
use streamskip::flowskip::{skip_pipeline, theoretical_ms_per_frame, FlowWarper, SkipSchedule};
use streamskip::io::{read_ppm, write_ppm};
use streamskip::knn::{flat_search, weighted_latent_average, FlatIndex, IvfPqIndex, VectorSet, VectorStore};
use streamskip::raster::{resize_bilinear, to_grayscale};
use streamskip::source::{FrameSink, VecSource};
use streamskip::synth::{synthetic_frames, translate};
use streamskip::{stub_denoise, stub_encode, FrameImage, LatencyProfile, LatentTensor, Seed};

use crate::config::{AppConfig, IndexKind, IoConfig, KnnConfig, RunMode};
use crate::error::{CliError, CliResult, Classify};

const STUB_STREAM: u64 = 0x5354_5542;
const NOISE_STREAM: u64 = 0x4e4f_4953;
const REFERENCE_STREAM: u64 = 0x5245_4653;
const INDEX_STREAM: u64 = 0x494e_4458;

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub mode: RunMode,
    pub frames_written: usize,
    pub report: PipelineReport,
    /// From declared latencies; unknown when a stage has none.
    pub predicted_fps: Option<f64>,
    pub output_dir: PathBuf,
    /// Flow-skip runs only: wall time per frame spent outside chain and warper.
    pub skip_overhead_ms: Option<f64>,
}

pub fn cmd_run(cfg: &AppConfig) -> CliResult<RunSummary> {
    cfg.validate()?;
    let frames = load_frames(&cfg.io)?;
    let count = cfg.pipeline.frames.map_or(frames.len(), |n| n.min(frames.len()));
    let frames: Vec<FrameImage> = frames.into_iter().take(count).collect();

    let profile = cfg
        .pipeline
        .profile
        .resolve()?
        .scaled(cfg.pipeline.latency_scale);
    let mut chain = build_chain(cfg, &profile, &frames[0])?;
    let mode = cfg.pipeline.mode;
    let dir = cfg.io.output_dir.clone();
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::runtime(format!("cannot create output directory {}: {e}", dir.display())))?;
    let mut sink = DirSink::new(&dir);
    let mut source = VecSource::new(frames);

    let total = profile.total_ms();
    let (report, predicted_fps, skip_overhead_ms) = match mode {
        RunMode::Flowskip => {
            let schedule = SkipSchedule::new(cfg.flow.n, cfg.flow.resolution).usage_err()?;
            let mut warper =
                FlowWarper::new(cfg.flow.params.clone(), cfg.flow.resolution).with_min_latency(cfg.flow.warp_latency_ms);
            let out = skip_pipeline(&schedule, &mut chain, &mut source, &mut warper, Some(&mut sink), count)
                .runtime_err()?;
            let ms = theoretical_ms_per_frame(total, cfg.flow.warp_latency_ms, cfg.flow.n).runtime_err()?;
            let predicted = (ms > 0.0).then(|| 1000.0 / ms);
            (out.report, predicted, Some(out.overhead_ms_per_frame))
        }
        _ => {
            let report = run_sequential(&mut chain, &mut source, Some(&mut sink), count).runtime_err()?;
            let predicted = (mode == RunMode::Plain && total > 0.0).then(|| 1000.0 / total);
            (report, predicted, None)
        }
    };

    let summary = RunSummary {
        mode,
        frames_written: sink.written,
        report,
        predicted_fps,
        output_dir: dir,
        skip_overhead_ms,
    };
    write_reports(&summary, &profile, cfg)?;
    Ok(summary)
}

/// Input frames from `input_dir` (every `.ppm`, in name order) or the
/// synthetic generator.
pub fn load_frames(io: &IoConfig) -> CliResult<Vec<FrameImage>> {
    let frames = match &io.input_dir {
        Some(dir) => {
            let entries = std::fs::read_dir(dir)
                .map_err(|e| CliError::usage(format!("cannot read input directory {}: {e}", dir.display())))?;
            let mut paths: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("ppm")))
                .collect();
            paths.sort();
            paths
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let file = File::open(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
                    let f: FrameImage = read_ppm(BufReader::new(file))
                        .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
                    Ok(f.with_id(i as u64))
                })
                .collect::<CliResult<Vec<_>>>()?
        }
        None => synthetic_frames(&io.synthetic).usage_err()?,
    };
    let Some(first) = frames.first() else {
        return Err(CliError::usage("input stream is empty"));
    };
    if first.channels != 3 || first.width % LATENT_SCALE != 0 || first.height % LATENT_SCALE != 0 {
        return Err(CliError::usage(format!(
            "frames must be RGB with sides divisible by {LATENT_SCALE}, got {}",
            first.shape_string()
        )));
    }
    if let Some(odd) = frames.iter().find(|f| !f.same_shape(first)) {
        return Err(CliError::usage(format!(
            "frame {} has shape {}, expected {}",
            odd.frame_id,
            odd.shape_string(),
            first.shape_string()
        )));
    }
    Ok(frames)
}

/// Stage order: preprocess, then encode (plain, flowskip) or retrieval (knn,
/// hybrid), optional noise, denoise (not knn), optional feedback, decode,
/// optional EMA, postprocess, and the profile's unattributed overhead.
pub fn build_chain(cfg: &AppConfig, profile: &LatencyProfile, first: &FrameImage) -> CliResult<Pipeline<f32>> {
    let seed = cfg.pipeline.seed;
    let stub_seed = seed.derive(STUB_STREAM);
    let stub = |kind: StageKind| -> CliResult<StageSpec<f32>> {
        Ok(StubStage::new(kind, profile.latency(kind), stub_seed).usage_err()?.into())
    };
    let coh = &cfg.pipeline.coherence;
    let noise = |stages: &mut Vec<StageSpec<f32>>| {
        if let Some(strength) = coh.noise_strength {
            stages.push(
                NoiseStage {
                    cfg: NoiseConfig {
                        seed: seed.derive(NOISE_STREAM),
                        strength,
                    },
                }
                .into(),
            );
        }
    };

    let mut stages = vec![stub(StageKind::Preprocess)?];
    match cfg.pipeline.mode {
        RunMode::Plain | RunMode::Flowskip => {
            stages.push(stub(StageKind::Encode)?);
            noise(&mut stages);
            stages.push(stub(StageKind::Denoise)?);
        }
        RunMode::Knn => stages.push(StageSpec::of(RetrievalStage::build(&cfg.knn, first, stub_seed, seed)?)),
        RunMode::Hybrid => {
            stages.push(StageSpec::of(RetrievalStage::build(&cfg.knn, first, stub_seed, seed)?));
            noise(&mut stages);
            stages.push(stub(StageKind::Denoise)?);
        }
    }
    if let Some(alpha) = coh.feedback_alpha {
        stages.push(
            FeedbackStage {
                state: FeedbackState::new(alpha).usage_err()?,
            }
            .into(),
        );
    }
    stages.push(stub(StageKind::Decode)?);
    if let Some(beta) = coh.ema_beta {
        stages.push(
            EmaStage {
                state: EmaState::new(beta).usage_err()?,
            }
            .into(),
        );
    }
    stages.push(stub(StageKind::Postprocess)?);
    if profile.overhead_ms > 0.0 {
        stages.push(DelayStage::new("overhead", profile.overhead_ms).usage_err()?.into());
    }
    Pipeline::new(stages).usage_err()
}

/// Grayscale thumbnail of `side × side` pixels, flattened.
pub fn embed(frame: &FrameImage, side: usize) -> streamskip::Result<Vec<f32>> {
    let gray = if frame.channels == 3 { to_grayscale(frame)? } else { frame.clone() };
    Ok(resize_bilinear(&gray, side, side)?.data)
}

/// Reference frames are `base` translated by seeded offsets; each stores the
/// denoised latent the full chain would have produced for it.
pub fn reference_store(
    knn: &KnnConfig,
    base: &FrameImage,
    denoise_seed: Seed,
    seed: Seed,
) -> streamskip::Result<VectorStore<f32>> {
    let dim = knn.embed_side * knn.embed_side;
    let mut keys = VectorSet::with_capacity(dim, knn.store_size);
    let mut latents = Vec::with_capacity(knn.store_size);
    let stream = seed.derive(REFERENCE_STREAM);
    for i in 0..knn.store_size {
        let mut rng = stream.derive(i as u64).rng();
        let dx = knn.max_offset * (2.0 * rng.next_f64() - 1.0);
        let dy = knn.max_offset * (2.0 * rng.next_f64() - 1.0);
        let frame = translate(base, dx, dy);
        keys.push(&embed(&frame, knn.embed_side)?)?;
        latents.push(stub_denoise(&stub_encode(&frame)?, denoise_seed)?);
    }
    VectorStore::new(keys, latents)
}

/// Replaces encode and denoise: embeds the frame, finds its nearest reference
/// frames and blends their stored latents.
pub struct RetrievalStage {
    store: VectorStore<f32>,
    index: Option<IvfPqIndex<f32>>,
    k: usize,
    temperature: Option<f32>,
    embed_side: usize,
}

impl RetrievalStage {
    pub fn build(knn: &KnnConfig, base: &FrameImage, denoise_seed: Seed, seed: Seed) -> CliResult<Self> {
        let store = reference_store(knn, base, denoise_seed, seed).usage_err()?;
        let index = match knn.index {
            IndexKind::Flat => None,
            IndexKind::Ivfpq => {
                let v = &store.vectors;
                let index = IvfPqIndex::build(v.as_slice(), v.dim(), &knn.ivfpq, seed.derive(INDEX_STREAM))
                    .runtime_err()?;
                Some(index)
            }
        };
        Ok(Self {
            store,
            index,
            k: knn.k,
            temperature: knn.temperature.map(|t| t as f32),
            embed_side: knn.embed_side,
        })
    }
}

impl Stage<f32> for RetrievalStage {
    fn name(&self) -> &str {
        "retrieve"
    }

    fn kind(&self) -> StageKind {
        StageKind::Custom
    }

    fn input_kind(&self) -> PayloadKind {
        PayloadKind::Image
    }

    fn output_kind(&self) -> PayloadKind {
        PayloadKind::Latent
    }

    fn process(&mut self, input: Payload<f32>) -> streamskip::Result<Payload<f32>> {
        let frame = input.into_image()?;
        let key = embed(&frame, self.embed_side)?;
        let neighbors = match &self.index {
            Some(ix) => ix.search(&key, self.k, ix.nprobe())?,
            None => flat_search(&FlatIndex::new(&self.store.vectors), &key, self.k)?,
        };
        let mut lat: LatentTensor = weighted_latent_average(&neighbors, &self.store, self.temperature)?;
        lat.source_frame_id = frame.frame_id;
        Ok(Payload::Latent(lat))
    }
}

/// Writes each shown frame as `frame_%06d.ppm`, numbered in display order.
pub struct DirSink {
    dir: PathBuf,
    pub written: usize,
}

impl DirSink {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            written: 0,
        }
    }
}

impl FrameSink<f32> for DirSink {
    fn show(&mut self, frame: &FrameImage) -> streamskip::Result<()> {
        let path = self.dir.join(frame_file_name(self.written));
        let mut w = BufWriter::new(File::create(&path)?);
        write_ppm(frame, &mut w)?;
        w.flush()?;
        self.written += 1;
        Ok(())
    }
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.ppm")
}

fn write_reports(s: &RunSummary, profile: &LatencyProfile, cfg: &AppConfig) -> CliResult<()> {
    let r = &s.report;
    let mut md = String::new();
    md.push_str("# streamskip run\n\n");
    md.push_str(&format!(
        "Mode: {} | Profile: {} (latency x{}) | Frames written: {}\n\n",
        s.mode, profile.name, cfg.pipeline.latency_scale, s.frames_written
    ));
    if s.mode == RunMode::Flowskip {
        md.push_str(&format!(
            "Skip interval: {} | Flow resolution: {:?}\n\n",
            cfg.flow.n, cfg.flow.resolution
        ));
    }
    match s.predicted_fps {
        Some(p) => md.push_str(&format!(
            "Predicted FPS: {p:.2} | Measured FPS: {:.2} | Ratio: {:.3}\n\n",
            r.achieved_fps,
            r.achieved_fps / p
        )),
        None => md.push_str(&format!(
            "Predicted FPS: n/a (stage without declared latency) | Measured FPS: {:.2}\n\n",
            r.achieved_fps
        )),
    }
    md.push_str(&r.to_markdown());
    if let Some(o) = s.skip_overhead_ms {
        md.push_str(&format!("\nSchedule overhead: {o:.3} ms/frame\n"));
    }
    let csv = r.to_csv().runtime_err()?;
    let write = |name: &str, text: &str| {
        let path = s.output_dir.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
    };
    write("report.md", &md)?;
    write("report.csv", &csv)
}
