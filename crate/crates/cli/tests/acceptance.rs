//! End-to-end acceptance checks. Runs without the libtest harness so every
//! check prints one PASS/FAIL line; exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use streamskip::bench::{parse_scenarios, run_scenario, ScenarioResult};
use streamskip::coherence::noise_tensor;
use streamskip::engine::ExecutionMode;
use streamskip::flowskip::{farneback_flow, half_res_flow, theoretical_ms_per_frame, warp_bilinear};
use streamskip::knn::{flat_search, weighted_latent_average, FlatIndex, NeighborSet, VectorSet, VectorStore};
use streamskip::raster::{psnr, to_grayscale};
use streamskip::synth::{base_pattern, translate, Pattern};
use streamskip::{
    add_noise, ema_update, feedback_blend, profile_preset, EmaState, FeedbackState, Flow, Frame, Latent, NoiseConfig,
    Pipeline, Seed,
};
use streamskip_cli::index::{
    build_synthetic, flat_truth, held_out_queries, index_params, latency_trend, recall_sweep, synthetic_generator,
    NPROBE_SWEEP,
};

type Check = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

fn scenario(json: &str) -> ScenarioResult {
    let list = parse_scenarios(json).expect("scenario parses");
    run_scenario(&list[0]).expect("scenario runs")
}

fn budget(start: Instant, limit_s: f64) -> Check {
    let t = start.elapsed().as_secs_f64();
    check!(t < limit_s, "took {t:.1} s, limit {limit_s} s");
    Ok(format!("{t:.1} s"))
}

fn sequential_arithmetic() -> Check {
    let start = Instant::now();
    let profile = profile_preset("sdturbo-coreml").map_err(|e| e.to_string())?;
    let predicted = Pipeline::<f32>::stub(&profile, Seed(0))
        .and_then(|p| p.predict_fps(ExecutionMode::Sequential))
        .map_err(|e| e.to_string())?;
    check!(within(predicted, 12.87, 0.005), "predicted {predicted:.4} FPS, want 12.87");

    let r = scenario(r#"[{"name": "sdturbo", "mode": "sequential", "profile": "sdturbo-coreml", "frames": 200}]"#);
    check!(
        within(r.measured_fps, 12.9, 0.05 * 12.9),
        "measured {:.3} FPS, want 12.9 ± 5%",
        r.measured_fps
    );
    let denoise = r
        .report
        .proportions()
        .into_iter()
        .find(|(name, _)| name == "denoise")
        .map(|(_, pct)| pct)
        .ok_or("no denoise stage in report")?;
    check!(within(denoise, 68.0, 1.0), "denoise share {denoise:.2}%, want 68 ± 1%");
    let t = budget(start, 30.0)?;
    Ok(format!(
        "predicted {predicted:.2}, measured {:.2} FPS, denoise {denoise:.1}%, {t}",
        r.measured_fps
    ))
}

fn threaded_bound() -> Check {
    let start = Instant::now();
    let threaded =
        scenario(r#"[{"name": "sdxs", "mode": "threaded", "profile": "sdxs-coreml", "duration_s": 5.0}]"#);
    let denoise = threaded.report.stage("denoise").ok_or("no denoise stage")?.stats.p50_ms;
    check!(within(denoise, 24.4, 0.5), "denoise stage p50 {denoise:.2} ms, want 24.4");
    check!(
        within(threaded.measured_fps, 41.0, 0.15 * 41.0),
        "threaded {:.2} FPS, want 41.0 ± 15%",
        threaded.measured_fps
    );
    let seq = scenario(r#"[{"name": "sdxs", "mode": "sequential", "profile": "sdxs-coreml", "frames": 100}]"#);
    check!(
        within(seq.measured_fps, 22.5, 0.05 * 22.5),
        "sequential {:.3} FPS, want 22.5 ± 5%",
        seq.measured_fps
    );
    let t = budget(start, 20.0)?;
    Ok(format!(
        "threaded {:.2} FPS, sequential {:.2} FPS, {t}",
        threaded.measured_fps, seq.measured_fps
    ))
}

fn pix2pix_preset() -> Check {
    let profile = profile_preset("pix2pix-turbo").map_err(|e| e.to_string())?;
    let fps = Pipeline::<f32>::stub(&profile, Seed(0))
        .and_then(|p| p.predict_fps(ExecutionMode::Sequential))
        .map_err(|e| e.to_string())?;
    check!(within(fps, 4.0, 0.05), "predicted {fps:.4} FPS, want 4.0 ± 0.05");
    Ok(format!("predicted {fps:.3} FPS"))
}

fn flow_skip_model() -> Check {
    let start = Instant::now();
    let half = theoretical_ms_per_frame(51.7, 6.6, 3).map_err(|e| e.to_string())?;
    check!(within(half, 21.63, 0.01), "n=3 half-res warp {half:.4} ms, want 21.63");
    let full = theoretical_ms_per_frame(51.7, 22.3, 3).map_err(|e| e.to_string())?;
    check!(within(full, 32.1, 0.1), "n=3 full-res warp {full:.4} ms, want 32.1");

    let r = scenario(
        r#"[{"name": "skip", "mode": "flowskip", "frames": 30,
             "parameters": {"n": 3, "unet_ms": 51.7, "warp_ms": 6.6, "flow_resolution": "half"}}]"#,
    );
    let predicted = r.predicted_ms_per_frame.ok_or("no predicted ms/frame")?;
    check!(within(predicted, half, 1e-9), "scenario predicts {predicted} ms, model says {half}");
    check!(
        within(r.measured_ms_per_frame, predicted, 0.10 * predicted),
        "measured {:.3} ms/frame, want {predicted:.2} ± 10%",
        r.measured_ms_per_frame
    );
    let overhead = r.overhead_ms_per_frame.ok_or("overhead delta not reported")?;
    check!(
        within(overhead, r.measured_ms_per_frame - predicted, 1e-9),
        "overhead {overhead} is not measured minus predicted"
    );
    let table = streamskip::emit_table(&[r.clone()], streamskip::TableFormat::Markdown).map_err(|e| e.to_string())?;
    check!(table.contains("overhead"), "markdown table does not surface the overhead:\n{table}");
    let t = budget(start, 20.0)?;
    Ok(format!(
        "model {half:.2} / {full:.2} ms, measured {:.2} ms/frame (overhead {overhead:+.2}), {t}",
        r.measured_ms_per_frame
    ))
}

fn flow_accuracy() -> Check {
    let start = Instant::now();
    let side = 256;
    let border = 16;
    let base: Frame<f32> = base_pattern(Pattern::BandlimitedNoise, side, side, Seed(11)).map_err(|e| e.to_string())?;
    let shifted = translate(&base, 4.0, 2.0);
    let params = streamskip::FlowParams::default();

    let err = |flow: &Flow<f32>| {
        let (mx, my) = flow.interior_mean(border);
        (mx - 4.0).hypot(my - 2.0)
    };
    let gray = |f: &Frame<f32>| to_grayscale(f).map_err(|e| e.to_string());
    let full = farneback_flow(&gray(&base)?, &gray(&shifted)?, &params).map_err(|e| e.to_string())?;
    let full_err = err(&full);
    check!(full_err < 0.5, "full-res mean flow error {full_err:.3} px");
    let half = half_res_flow(&base, &shifted, &params).map_err(|e| e.to_string())?;
    let half_err = err(&half);
    check!(half_err < 0.8, "half-res mean flow error {half_err:.3} px");

    let back = warp_bilinear(&shifted, &Flow::constant(side, side, -4.0, -2.0)).map_err(|e| e.to_string())?;
    let roundtrip = psnr(&back, &base, border).map_err(|e| e.to_string())?;
    check!(roundtrip >= 25.0, "translate/unwarp roundtrip PSNR {roundtrip:.2} dB");
    let predicted = warp_bilinear(&base, &full).map_err(|e| e.to_string())?;
    let predicted_psnr = psnr(&predicted, &shifted, border).map_err(|e| e.to_string())?;
    check!(predicted_psnr >= 25.0, "warp along estimated flow PSNR {predicted_psnr:.2} dB");

    let same = warp_bilinear(&base, &Flow::zeros(side, side)).map_err(|e| e.to_string())?;
    check!(
        same.data.iter().zip(&base.data).all(|(a, b)| a.to_bits() == b.to_bits()),
        "zero-flow warp changed pixels"
    );
    let t = budget(start, 10.0)?;
    Ok(format!(
        "error {full_err:.3} px full / {half_err:.3} px half, PSNR {roundtrip:.1} / {predicted_psnr:.1} dB, {t}"
    ))
}

fn knn_exactness() -> Check {
    let start = Instant::now();
    let (n, dim, queries, k) = (10_000, 768, 100, 10);
    let mut rng = Seed(606).rng();
    let data: Vec<f32> = (0..n * dim).map(|_| rng.next_normal() as f32).collect();
    let q: Vec<f32> = (0..queries * dim).map(|_| rng.next_normal() as f32).collect();
    let set = VectorSet::new(dim, data).map_err(|e| e.to_string())?;
    let index = FlatIndex::new(&set);
    for (qi, query) in q.chunks_exact(dim).enumerate() {
        let got = flat_search(&index, query, k).map_err(|e| e.to_string())?;
        let mut all: Vec<(f64, u64)> = set
            .rows()
            .enumerate()
            .map(|(i, row)| {
                let d: f64 = row.iter().zip(query).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum();
                (d, i as u64)
            })
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let want: Vec<u64> = all[..k].iter().map(|p| p.1).collect();
        check!(got.ids == want, "query {qi}: got {:?}, brute force {:?}", got.ids, want);
    }
    let t = budget(start, 10.0)?;
    Ok(format!("{queries} queries x {n} x {dim}, all id-for-id, {t}"))
}

fn ivfpq_quality() -> Check {
    let start = Instant::now();
    let (dim, n, k) = (768, 100_000, 10);
    let gen = synthetic_generator(dim, Seed(7)).map_err(|e| e.to_string())?;
    let params = index_params(dim, 256, 48, 8).map_err(|e| e.to_string())?;
    let mut index = build_synthetic(&gen, n, &params, Seed(8)).map_err(|e| e.to_string())?;
    let queries = held_out_queries(&gen, 100);
    let truth = {
        let base = VectorSet::new(dim, gen.rows(0, n)).map_err(|e| e.to_string())?;
        flat_truth(&base, &queries, k).map_err(|e| e.to_string())?
    };
    let rows = recall_sweep(&index, &truth, &queries, k, &NPROBE_SWEEP).map_err(|e| e.to_string())?;
    let recalls: Vec<f64> = rows.iter().map(|r| r.recall).collect();
    let at8 = rows.iter().find(|r| r.nprobe == 8).ok_or("nprobe 8 missing")?.recall;
    check!(at8 >= 0.8, "recall@10 at nprobe 8 is {at8:.3}; sweep {recalls:?}");
    check!(
        recalls.windows(2).all(|w| w[1] >= w[0]),
        "recall decreases with nprobe: {recalls:?}"
    );
    let trend = latency_trend(&mut index, &gen, &queries, k, 8, &[1_000_000]).map_err(|e| e.to_string())?;
    let (small, large) = (trend[0].latency.p50_ms, trend[trend.len() - 1].latency.p50_ms);
    check!(trend.len() == 2 && index.len() == 1_000_000, "index did not grow to 10^6");
    check!(
        large < 3.0 * small,
        "median latency {large:.3} ms at 10^6 vs {small:.3} ms at 10^5 (ratio {:.2})",
        large / small
    );
    let t = budget(start, 300.0)?;
    let sweep: Vec<String> = recalls.iter().map(|r| format!("{r:.3}")).collect();
    Ok(format!(
        "recall {} over nprobe {NPROBE_SWEEP:?}, p50 {small:.3} -> {large:.3} ms ({:.2}x), {t}",
        sweep.join("/"),
        large / small
    ))
}

fn coherence_algebra() -> Check {
    let lat = |v: &[f64]| Latent::new(1, 1, v.len(), v.to_vec()).unwrap();
    let (a, b) = (lat(&[0.25, -1.5, 3.0]), lat(&[1.0, 0.5, -2.0]));
    for (alpha, want) in [(0.0, &a), (1.0, &b)] {
        let mut st = FeedbackState::new(alpha).map_err(|e| e.to_string())?;
        feedback_blend(&b, &mut st).map_err(|e| e.to_string())?;
        let out = feedback_blend(&a, &mut st).map_err(|e| e.to_string())?;
        check!(out.data == want.data, "alpha {alpha}: {:?}", out.data);
    }
    let mut st = FeedbackState::new(0.3).map_err(|e| e.to_string())?;
    feedback_blend(&lat(&[0.0, 1.0, 2.0]), &mut st).map_err(|e| e.to_string())?;
    let out = feedback_blend(&lat(&[1.0, 0.0, 2.0]), &mut st).map_err(|e| e.to_string())?;
    check!(out.data == [0.7, 0.3, 2.0], "alpha 0.3 blend {:?}", out.data);

    let beta = 0.4;
    let (x0, target) = (0.9, 0.1);
    let mut ema = EmaState::new(beta).map_err(|e| e.to_string())?;
    ema_update(&mut ema, &Frame::filled(2, 2, 1, x0).unwrap()).map_err(|e| e.to_string())?;
    let input = Frame::filled(2, 2, 1, target).unwrap();
    let mut worst = 0.0f64;
    for step in 1..=20 {
        let out = ema_update(&mut ema, &input).map_err(|e| e.to_string())?;
        let closed = target + (1.0f64 - beta).powi(step) * (x0 - target);
        worst = out.data.iter().map(|v| (v - closed).abs()).fold(worst, f64::max);
    }
    check!(worst <= 1e-6, "EMA deviates from closed form by {worst:e}");

    let cfg = NoiseConfig { seed: Seed(99), strength: 0.1 };
    let zero = Latent::<f32>::zeros(4, 8, 8);
    let first = add_noise(&zero, &cfg).map_err(|e| e.to_string())?;
    for _ in 0..5 {
        let again = add_noise(&zero, &cfg).map_err(|e| e.to_string())?;
        check!(
            again.data.iter().zip(&first.data).all(|(x, y)| x.to_bits() == y.to_bits()),
            "noise differs between frames"
        );
    }
    let tensor = noise_tensor::<f32>(cfg.seed, 4, 8, 8);
    check!(
        first.data.iter().zip(&tensor).all(|(x, n)| x.to_bits() == (0.1f32 * n).to_bits()),
        "added noise is not strength times the seeded tensor"
    );
    Ok(format!("blend endpoints exact, EMA max deviation {worst:.1e}"))
}

fn synthesis_invariants() -> Check {
    let start = Instant::now();
    let mut rng = Seed(909).rng();
    let shape = (4, 3, 5);
    let random_latent = |rng: &mut streamskip::rng::SplitMix64| {
        let data = (0..shape.0 * shape.1 * shape.2).map(|_| rng.next_normal() as f32 * 3.0).collect();
        Latent::new(shape.0, shape.1, shape.2, data).unwrap()
    };
    let store_of = |latents: Vec<Latent<f32>>| VectorStore::from_latents(latents).unwrap();

    for trial in 0..1000 {
        let count = 2 + rng.below(7) as usize;
        let latents: Vec<Latent<f32>> = (0..count).map(|_| random_latent(&mut rng)).collect();
        let store = store_of(latents.clone());

        let pick = rng.below(count as u64);
        let one = NeighborSet { ids: vec![pick], distances: vec![rng.next_f64() as f32 * 10.0] };
        let got = weighted_latent_average(&one, &store, None).map_err(|e| e.to_string())?;
        check!(got.data == latents[pick as usize].data, "trial {trial}: k=1 is not the neighbour's latent");

        let d = rng.next_f64() as f32 * 5.0;
        let pair = NeighborSet { ids: vec![0, 1], distances: vec![d, d] };
        let got = weighted_latent_average(&pair, &store, None).map_err(|e| e.to_string())?;
        let mean: Vec<f32> = latents[0]
            .data
            .iter()
            .zip(&latents[1].data)
            .map(|(a, b)| ((*a as f64 + *b as f64) / 2.0) as f32)
            .collect();
        check!(got.data == mean, "trial {trial}: equal-distance pair is not the exact mean");

        let k = 1 + rng.below(count as u64) as usize;
        let ids: Vec<u64> = (0..k as u64).collect();
        let distances: Vec<f32> = (0..k).map(|_| rng.next_f64() as f32 * 20.0).collect();
        let temp = if rng.below(2) == 0 { None } else { Some(0.01 + rng.next_f64() as f32) };
        let got = weighted_latent_average(&NeighborSet { ids, distances }, &store, temp).map_err(|e| e.to_string())?;
        for (i, v) in got.data.iter().enumerate() {
            let lo = latents[..k].iter().map(|l| l.data[i]).fold(f32::INFINITY, f32::min);
            let hi = latents[..k].iter().map(|l| l.data[i]).fold(f32::NEG_INFINITY, f32::max);
            check!(*v >= lo && *v <= hi, "trial {trial}: element {i} = {v} outside [{lo}, {hi}]");
        }
    }
    let t = budget(start, 10.0)?;
    Ok(format!("1000 trials, {t}"))
}

fn run_binary(args: &[&str], out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_streamskip"))
        .args(args)
        .arg("--output")
        .arg(out)
        .env("STREAMSKIP_SEED", "4242")
        .output()
        .map_err(|e| e.to_string())?;
    check!(
        status.status.success(),
        "streamskip {args:?} failed: {}",
        String::from_utf8_lossy(&status.stderr)
    );
    Ok(())
}

fn frames_in(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "ppm"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn determinism() -> Check {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let modes: [&[&str]; 3] = [
        &["run", "--mode", "plain"],
        &["run", "--mode", "flowskip", "--skip-n", "3"],
        &["run", "--mode", "knn"],
    ];
    let mut summary = Vec::new();
    for (m, args) in modes.iter().enumerate() {
        let mut args = args.to_vec();
        args.extend(["--frames", "24", "--latency-scale", "0.25"]);
        let dirs = [tmp.path().join(format!("{m}-a")), tmp.path().join(format!("{m}-b"))];
        for d in &dirs {
            run_binary(&args, d)?;
        }
        let (a, b) = (frames_in(&dirs[0]), frames_in(&dirs[1]));
        check!(a.len() == 24, "{args:?} wrote {} frames", a.len());
        check!(a == b, "{args:?}: outputs differ between runs");
        summary.push(format!("{} {}", args[2], a.len()));
    }
    let t = budget(start, 60.0)?;
    Ok(format!("{} frames bitwise equal, {t}", summary.join(", ")))
}

fn main() {
    let checks: [(&str, fn() -> Check); 10] = [
        ("sequential pipeline arithmetic", sequential_arithmetic),
        ("threaded throughput bound", threaded_bound),
        ("pix2pix preset", pix2pix_preset),
        ("flow-skip model", flow_skip_model),
        ("flow accuracy", flow_accuracy),
        ("knn exactness", knn_exactness),
        ("ivf-pq quality", ivfpq_quality),
        ("coherence algebra", coherence_algebra),
        ("synthesis invariants", synthesis_invariants),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in checks.iter().enumerate() {
        let label = format!("{:>2} {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|p| label.contains(p.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {label}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {label}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
