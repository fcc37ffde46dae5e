use ajfuse_core::diffusion::{ddim_transition, denoise_estimate, rectify};
use ajfuse_core::metrics::{fusion_ssim, ssim_map, ssim_pair, SsimParams};
use ajfuse_core::registration::{TimedHeightMap, TimedImage};
use ajfuse_core::{
    align_translation, fuse_rois, gaussian_score, gmm_empirical_score, heightmap_to_image, register_corpus,
    AlignParams, FusionConfig, GaussianScoreParams, GmmScoreParams, HeightMap, Image, NoiseSchedule,
    ProximalBlend, RegistrationParams, Rng, ScoreModel,
};
use proptest::prelude::*;

fn random_image(seed: u64, h: usize, w: usize) -> Image {
    let mut rng = Rng::new(seed);
    Image::from_fn(h, w, 1.0, |_, _| rng.uniform()).unwrap()
}

fn random_grid(seed: u64, h: usize, w: usize, scale: f64) -> Image {
    let mut rng = Rng::new(seed);
    let pixels = (0..h * w).map(|_| scale * rng.normal()).collect();
    Image::grid(h, w, pixels, 1.0).unwrap()
}

fn max_diff(a: &Image, b: &Image) -> f64 {
    a.max_abs_diff(b).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn height_conversion_is_monotone(z1 in -50.0f64..50.0, z2 in -50.0f64..50.0, lo in -20.0f64..0.0, span in 0.0f64..30.0) {
        let hm = HeightMap::new(1, 2, vec![z1.min(z2), z1.max(z2)], 1.0).unwrap();
        let img = heightmap_to_image(&hm, lo, lo + span).unwrap();
        prop_assert!(img.get(0, 0) <= img.get(0, 1));
    }

    #[test]
    fn alignment_recovers_any_in_window_shift(seed in any::<u64>(), dy in -6i64..=6, dx in -6i64..=6) {
        let reference = random_image(seed, 32, 32);
        let moving = reference.shifted_circular(dy, dx);
        let params = AlignParams { max_shift: 6, ..AlignParams::default() };
        let a = align_translation(&reference, &moving, &params).unwrap();
        prop_assert_eq!((a.dy, a.dx), (dy, dx));
        prop_assert!(a.score > 0.999);
    }

    #[test]
    fn ssim_is_symmetric_and_bounded(seed in any::<u64>()) {
        let a = random_image(seed, 14, 17);
        let b = random_image(seed.wrapping_add(1), 14, 17);
        let p = SsimParams { window: 5, ..SsimParams::default() };
        prop_assert_eq!(ssim_pair(&a, &b, &p).unwrap(), ssim_pair(&b, &a, &p).unwrap());
        let map = ssim_map(&a, &b, &p).unwrap();
        prop_assert!(map.pixels().iter().all(|v| v.abs() <= 1.0));
        let f = random_image(seed.wrapping_add(2), 14, 17);
        let total = fusion_ssim(&a, &b, &f, &p).unwrap().total;
        prop_assert!((-2.0..=2.0).contains(&total));
    }

    #[test]
    fn ssim_ignores_common_translation(seed in any::<u64>(), dy in 0usize..4, dx in 0usize..4) {
        let (a, b) = (random_image(seed, 20, 20), random_image(!seed, 20, 20));
        let (sa, sb) = (a.shifted_circular(dy as i64, dx as i64), b.shifted_circular(dy as i64, dx as i64));
        let p = SsimParams { window: 7, ..SsimParams::default() };
        let direct = ssim_pair(&a.crop(0..16, 0..16).unwrap(), &b.crop(0..16, 0..16).unwrap(), &p).unwrap();
        let moved = ssim_pair(
            &sa.crop(dy..dy + 16, dx..dx + 16).unwrap(),
            &sb.crop(dy..dy + 16, dx..dx + 16).unwrap(),
            &p,
        )
        .unwrap();
        prop_assert!((direct - moved).abs() < 1e-12);
    }

    #[test]
    fn responsibilities_sum_to_one(seed in any::<u64>(), t in 1usize..=100, scale in 0.01f64..1e3) {
        let sched = NoiseSchedule::linear(100).unwrap();
        let patches = (0..4).map(|k| random_image(seed ^ k, 6, 6)).collect();
        let model = gmm_empirical_score(GmmScoreParams { patches, bandwidth_sq: 0.0025 }).unwrap();
        let f = random_grid(seed.rotate_left(7), 6, 6, scale);
        let r = model.responsibilities(&f, t, &sched).unwrap();
        prop_assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(model.score(&f, t, &sched).unwrap().all_finite());
    }

    #[test]
    fn rectify_moves_toward_the_optical_roi(seed in any::<u64>(), e1 in 0.0f64..100.0, e2 in 0.0f64..100.0) {
        let (f, om, cp) = (random_image(seed, 5, 5), random_image(!seed, 5, 5), random_image(seed ^ 3, 5, 5));
        let (lo, hi) = (e1.min(e2), e1.max(e2));
        let d_lo = max_diff(&rectify(&f, &om, &cp, lo, 0.0).unwrap(), &om);
        let d_hi = max_diff(&rectify(&f, &om, &cp, hi, 0.0).unwrap(), &om);
        prop_assert!(d_hi <= d_lo + 1e-15);
    }

    #[test]
    fn loop_operators_are_affine(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, t in 1usize..=100) {
        let sched = NoiseSchedule::linear(100).unwrap();
        let (x, y) = (random_grid(seed, 6, 6, 1.0), random_grid(!seed, 6, 6, 1.0));
        let zero = Image::grid(6, 6, vec![0.0; 36], 1.0).unwrap();
        let combo = x.zip_map(&y, |u, v| a * u + b * v).unwrap();
        // An affine map g satisfies g(ax + by) = a g(x) + b g(y) + (1 - a - b) g(0).
        let check = |g: &dyn Fn(&Image) -> Image| {
            let (gx, gy, g0) = (g(&x), g(&y), g(&zero));
            let want = Image::from_fn(6, 6, 1.0, |r, c| {
                a * gx.get(r, c) + b * gy.get(r, c) + (1.0 - a - b) * g0.get(r, c)
            })
            .unwrap();
            max_diff(&g(&combo), &want)
        };
        let mu = random_image(seed ^ 9, 6, 6);
        let model = gaussian_score(GaussianScoreParams { mu, sigma0_sq: 0.02 }).unwrap();
        let (om, cp) = (random_image(seed ^ 10, 6, 6), random_image(seed ^ 11, 6, 6));
        let f_hat = random_grid(seed ^ 12, 6, 6, 1.0);
        let tol = 1e-9 * (1.0 + a.abs() + b.abs());
        prop_assert!(check(&|g| denoise_estimate(g, t, &sched, &model).unwrap()) < tol * 20.0);
        prop_assert!(check(&|g| rectify(g, &om, &cp, 2.5, 0.7).unwrap()) < tol);
        prop_assert!(check(&|g| ddim_transition(g, &f_hat, t, &sched).unwrap()) < tol);
        prop_assert!(check(&|g| ddim_transition(&f_hat, g, t, &sched).unwrap()) < tol);
    }

    #[test]
    fn point_mass_prior_is_exact(seed in any::<u64>(), steps in prop::sample::select(vec![1usize, 10, 100])) {
        let mu = random_image(seed, 16, 16);
        let model = gaussian_score(GaussianScoreParams { mu: mu.clone(), sigma0_sq: 0.0 }).unwrap();
        let cfg = FusionConfig { steps, eta: 0.0, psi: 0.0, seed, ..FusionConfig::default() };
        let out = fuse_rois(&mu, &mu, &cfg, &model, &ProximalBlend, &mut Rng::new(seed)).unwrap();
        prop_assert!(max_diff(&out.fused, &mu) <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn registration_ignores_input_order(perm in Just((0..3usize).collect::<Vec<_>>()).prop_shuffle()) {
        let corpus = shared_corpus();
        let om: Vec<TimedImage> = perm.iter().map(|&i| corpus.0[i].clone()).collect();
        let cp: Vec<TimedHeightMap> = perm.iter().rev().map(|&i| corpus.1[i].clone()).collect();
        let params = RegistrationParams::default();
        let a = register_corpus(&corpus.0, &corpus.1, &params).unwrap();
        let b = register_corpus(&om, &cp, &params).unwrap();
        prop_assert_eq!(a.pairs, b.pairs);
    }
}

fn shared_corpus() -> &'static (Vec<TimedImage>, Vec<TimedHeightMap>) {
    use std::sync::OnceLock;
    static CORPUS: OnceLock<(Vec<TimedImage>, Vec<TimedHeightMap>)> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let spec = ajfuse_core::CorpusSpec {
            n_frames: 3,
            seed: 12,
            injected_offsets: vec![(1, 2), (-3, 0), (4, -4)],
            ..ajfuse_core::CorpusSpec::default()
        };
        let c = ajfuse_core::generate_corpus(&spec).unwrap();
        (c.om_frames, c.cp_maps)
    })
}

#[test]
fn strong_optical_weight_pins_the_output() {
    let om = random_image(1, 12, 12);
    let cp = random_image(2, 12, 12);
    let mu = random_image(3, 12, 12);
    let model = gaussian_score(GaussianScoreParams { mu, sigma0_sq: 0.01 }).unwrap();
    let cfg = FusionConfig {
        eta: 1e6,
        psi: 0.0,
        ..FusionConfig::default()
    };
    let out = fuse_rois(&om, &cp, &cfg, &model, &ProximalBlend, &mut Rng::new(4)).unwrap();
    assert!(max_diff(&out.fused, &om) < 1e-3);
}
