use proptest::prelude::*;

use streamskip::coherence::noise_tensor;
use streamskip::engine::ExecutionMode;
use streamskip::flowskip::{theoretical_ms_per_frame, warp_bilinear};
use streamskip::knn::synthesis::softmax_weights;
use streamskip::knn::{flat_search, FlatIndex, IvfPqIndex, IvfPqParams, VectorSet};
use streamskip::synth::translate;
use streamskip::{
    add_noise, ema_update, feedback_blend, predict_fps, EmaState, FeedbackState, Flow, Frame, Latent, NoiseConfig,
    Seed, TimingStats,
};

fn latent_of(values: Vec<f64>) -> Latent<f64> {
    let n = values.len();
    Latent::new(1, 1, n, values).unwrap()
}

fn pair_of_vectors(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..max).prop_flat_map(|n| (prop::collection::vec(-1e3..1e3f64, n), prop::collection::vec(-1e3..1e3f64, n)))
}

proptest! {
    #[test]
    fn feedback_stays_between_inputs((prev, new) in pair_of_vectors(32), alpha in 0.0..=1.0f64) {
        let mut st = FeedbackState::new(alpha).unwrap();
        feedback_blend(&latent_of(prev.clone()), &mut st).unwrap();
        let out = feedback_blend(&latent_of(new.clone()), &mut st).unwrap();
        for ((o, p), n) in out.data.iter().zip(&prev).zip(&new) {
            let (lo, hi) = (p.min(*n), p.max(*n));
            prop_assert!(*o >= lo - 1e-9 && *o <= hi + 1e-9, "{o} outside [{lo}, {hi}]");
        }
        prop_assert_eq!(&st.prev_latent.unwrap().data, &out.data);
    }

    #[test]
    fn ema_output_is_a_clamped_convex_mix(
        frames in prop::collection::vec(prop::collection::vec(0.0..=1.0f64, 6), 1..8),
        beta in 0.01..=1.0f64,
    ) {
        let mut st = EmaState::new(beta).unwrap();
        let mut prev: Option<Vec<f64>> = None;
        for f in &frames {
            let out = ema_update(&mut st, &Frame::new(3, 2, 1, f.clone()).unwrap()).unwrap();
            for (i, v) in out.data.iter().enumerate() {
                prop_assert!((0.0..=1.0).contains(v));
                if let Some(p) = &prev {
                    let (lo, hi) = (p[i].min(f[i]), p[i].max(f[i]));
                    prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
                }
            }
            prev = Some(out.data);
        }
    }

    #[test]
    fn noise_depends_only_on_seed_and_shape(seed in any::<u64>(), c in 1..5usize, h in 1..6usize, w in 1..6usize) {
        let a = noise_tensor::<f32>(Seed(seed), c, h, w);
        let b = noise_tensor::<f32>(Seed(seed), c, h, w);
        prop_assert_eq!(a.len(), c * h * w);
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        let cfg = NoiseConfig { seed: Seed(seed), strength: 0.0 };
        let lat = Latent::new(c, h, w, a.clone()).unwrap();
        prop_assert_eq!(add_noise(&lat, &cfg).unwrap().data, a);
    }

    #[test]
    fn softmax_weights_form_a_distribution(
        d in prop::collection::vec(0.0..1e4f64, 1..20),
        t in prop::option::of(1e-3..1e3f64),
    ) {
        let w = softmax_weights(&d, t).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(w.iter().all(|x| *x >= 0.0));
        // Closer neighbours never weigh less.
        for i in 0..d.len() {
            for j in 0..d.len() {
                if d[i] < d[j] {
                    prop_assert!(w[i] >= w[j]);
                }
            }
        }
    }

    #[test]
    fn threaded_prediction_is_never_slower(lat in prop::collection::vec(0.1..500.0f64, 1..8)) {
        let l: Vec<Option<f64>> = lat.iter().copied().map(Some).collect();
        let seq = predict_fps(&l, ExecutionMode::Sequential).unwrap();
        let thr = predict_fps(&l, ExecutionMode::Threaded).unwrap();
        prop_assert!(thr >= seq);
        prop_assert!((seq - 1000.0 / lat.iter().sum::<f64>()).abs() < 1e-9);
    }

    #[test]
    fn skipping_helps_only_when_warping_is_cheaper(unet in 1.0..200.0f64, warp in 0.0..200.0f64, n in 1..10usize) {
        let t = theoretical_ms_per_frame(unet, warp, n).unwrap();
        let t_next = theoretical_ms_per_frame(unet, warp, n + 1).unwrap();
        prop_assert!((theoretical_ms_per_frame(unet, warp, 1).unwrap() - unet).abs() < 1e-12);
        if warp < unet {
            prop_assert!(t_next < t);
        } else {
            prop_assert!(t_next >= t - 1e-12);
        }
        prop_assert!(t >= warp.min(unet) - 1e-12 && t <= warp.max(unet) + 1e-12);
    }

    #[test]
    fn timing_percentiles_are_ordered(s in prop::collection::vec(0.0..1e3f64, 1..60)) {
        let t = TimingStats::from_samples(&s, 0).unwrap();
        prop_assert!(t.min_ms <= t.p50_ms && t.p50_ms <= t.p95_ms && t.p95_ms <= t.max_ms);
        prop_assert!(t.min_ms <= t.mean_ms + 1e-9 && t.mean_ms <= t.max_ms + 1e-9);
        prop_assert!(s.contains(&t.p50_ms) && s.contains(&t.p95_ms));
    }

    #[test]
    fn zero_flow_warp_is_identity(w in 1..12usize, h in 1..12usize, seed in any::<u64>()) {
        let mut rng = Seed(seed).rng();
        let f = Frame::new(w, h, 3, (0..w * h * 3).map(|_| rng.next_f64() as f32).collect()).unwrap();
        let out = warp_bilinear(&f, &Flow::zeros(w, h)).unwrap();
        prop_assert!(out.data.iter().zip(&f.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn integer_translation_is_undone_by_constant_flow(dx in -3i32..=3, dy in -3i32..=3, seed in any::<u64>()) {
        let (w, h) = (16, 12);
        let mut rng = Seed(seed).rng();
        let base = Frame::new(w, h, 1, (0..w * h).map(|_| rng.next_f64()).collect()).unwrap();
        let moved = translate(&base, dx as f64, dy as f64);
        let back = warp_bilinear(&moved, &Flow::constant(w, h, -dx as f64, -dy as f64)).unwrap();
        let m = 3;
        for y in m..h - m {
            for x in m..w - m {
                prop_assert_eq!(back.at(x, y, 0), base.at(x, y, 0));
            }
        }
    }

    #[test]
    fn flat_search_is_sorted_and_exact(n in 1..60usize, dim in 1..9usize, k in 1..8usize, seed in any::<u64>()) {
        let mut rng = Seed(seed).rng();
        let data: Vec<f64> = (0..n * dim).map(|_| rng.next_normal()).collect();
        let q: Vec<f64> = (0..dim).map(|_| rng.next_normal()).collect();
        let set = VectorSet::new(dim, data).unwrap();
        if k > n {
            prop_assert!(flat_search(&FlatIndex::new(&set), &q, k).is_err());
            return Ok(());
        }
        let got = flat_search(&FlatIndex::new(&set), &q, k).unwrap();
        prop_assert_eq!(got.len(), k);
        prop_assert!(got.distances.windows(2).all(|p| p[0] <= p[1]));
        let mut all: Vec<(f64, u64)> = set
            .rows()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum(), i as u64))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let want: Vec<u64> = all[..k].iter().map(|p| p.1).collect();
        prop_assert_eq!(got.ids, want);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ivfpq_save_load_preserves_search(seed in any::<u64>(), nprobe in 1..=8usize) {
        let mut rng = Seed(seed).rng();
        let dim = 16;
        let data: Vec<f32> = (0..600 * dim).map(|_| rng.next_normal() as f32).collect();
        let params = IvfPqParams { nlist: 8, m: 4, nbits: 4, nprobe: 4, ..IvfPqParams::default() };
        let index = IvfPqIndex::build(&data, dim, &params, Seed(seed)).unwrap();
        let mut bytes = Vec::new();
        index.save(&mut bytes).unwrap();
        let loaded = IvfPqIndex::<f32>::load(bytes.as_slice()).unwrap();
        prop_assert_eq!(loaded.len(), 600);
        for q in data.chunks_exact(dim).take(20) {
            let a = index.search(q, 5, nprobe).unwrap();
            let b = loaded.search(q, 5, nprobe).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.distances.windows(2).all(|p| p[0] <= p[1]));
        }
        // Probing every list sees every vector.
        let all = index.search(&data[..dim], 600, 8).unwrap();
        prop_assert_eq!(all.len(), 600);
    }
}
