//! Independent oracles for the numeric core: exact rational arithmetic,
//! finite differences, and a naive sliding-window SSIM.

use ajfuse_core::diffusion::{baseline_rois, ddim_transition, transition_coefficients};
use ajfuse_core::metrics::{average_ssim, fusion_ssim, ssim_pair, SsimParams};
use ajfuse_core::schedule::{NoiseSchedule, ScheduleKind};
use ajfuse_core::scores::{gaussian_score, gmm_empirical_score, GaussianScoreParams, GmmScoreParams, ScoreModel};
use ajfuse_core::{Image, Rng};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, ToPrimitive, Zero};

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("representable")
}

/// sqrt of a rational to ~40 decimal digits.
fn rat_sqrt(r: &BigRational) -> BigRational {
    let scale = BigInt::from(10).pow(80u32);
    let scaled = r.numer() * &scale / r.denom();
    BigRational::new(scaled.sqrt(), BigInt::from(10).pow(40u32))
}

fn random_image(rng: &mut Rng, h: usize, w: usize) -> Image {
    Image::from_fn(h, w, 1.0, |_, _| rng.uniform()).unwrap()
}

#[test]
fn alpha_bar_matches_exact_rational_product() {
    // beta_t = 1e-4 + (t - 1) * (0.02 - 1e-4) / 99 = (99 + 199 (t - 1)) / 990000
    let sched = NoiseSchedule::build(100, 1e-4, 0.02, ScheduleKind::Linear).unwrap();
    let mut prod = BigRational::one();
    for t in 1..=100i64 {
        let beta = rat(99 + 199 * (t - 1), 990_000);
        prod *= BigRational::one() - beta;
        let want = to_f64(&prod);
        let got = sched.alpha_bar(t as usize);
        assert!(((got - want) / want).abs() < 1e-12, "t={t}: {got} vs {want}");
        let want_om = to_f64(&(BigRational::one() - prod.clone()));
        let got_om = sched.one_minus_alpha_bar(t as usize);
        assert!(((got_om - want_om) / want_om).abs() < 1e-12, "t={t}: {got_om} vs {want_om}");
    }
}

#[test]
fn transition_coefficients_match_rational_oracle() {
    // constant beta = 0.02, t = 2: both coefficients equal sqrt(0.98) * 0.02 / (1 - 0.9604)
    let sched = NoiseSchedule::build(5, 0.02, 0.02, ScheduleKind::Linear).unwrap();
    let sqrt_098 = rat_sqrt(&rat(98, 100));
    let one_minus_ab2 = BigRational::one() - rat(98, 100) * rat(98, 100);
    let expected = sqrt_098 * rat(2, 100) / one_minus_ab2;
    let want = to_f64(&expected);
    let (a, b) = transition_coefficients(2, &sched).unwrap();
    assert!((a - want).abs() < 1e-12, "{a} vs {want}");
    assert!((b - want).abs() < 1e-12, "{b} vs {want}");

    // f_t = f^ = g: output is (a + b) g
    let g = random_image(&mut Rng::new(8), 4, 4);
    let out = ddim_transition(&g, &g, 2, &sched).unwrap();
    let c = 2.0 * want;
    for (o, x) in out.pixels().iter().zip(g.pixels()) {
        assert!((o - c * x).abs() < 1e-12);
    }
}

#[test]
fn transition_coefficient_sum_matches_oracle_for_linear_schedule() {
    let sched = NoiseSchedule::build(100, 1e-4, 0.02, ScheduleKind::Linear).unwrap();
    let beta = |t: i64| rat(99 + 199 * (t - 1), 990_000);
    let mut abar = vec![BigRational::one()];
    for t in 1..=100 {
        let next = abar.last().unwrap() * (BigRational::one() - beta(t));
        abar.push(next);
    }
    for t in [2usize, 17, 50, 100] {
        let ti = t as i64;
        let om_t = BigRational::one() - abar[t].clone();
        let om_prev = BigRational::one() - abar[t - 1].clone();
        let a = rat_sqrt(&(BigRational::one() - beta(ti))) * om_prev / om_t.clone();
        let b = rat_sqrt(&abar[t - 1]) * beta(ti) / om_t;
        let c = to_f64(&(a + b));
        let g = Image::filled(2, 2, 0.75, 1.0).unwrap();
        let out = ddim_transition(&g, &g, t, &sched).unwrap();
        for o in out.pixels() {
            assert!((o - 0.75 * c).abs() < 1e-12, "t={t}");
        }
    }
}

fn gaussian_log_density(f: &Image, mu: &Image, sigma0_sq: f64, t: usize, sched: &NoiseSchedule) -> f64 {
    let ab = sched.alpha_bars()[t];
    let v = ab * sigma0_sq + (1.0 - ab);
    let s = ab.sqrt();
    let n = f.len() as f64;
    let d2: f64 = f.pixels().iter().zip(mu.pixels()).map(|(x, m)| (x - s * m).powi(2)).sum();
    -0.5 * d2 / v - 0.5 * n * (2.0 * std::f64::consts::PI * v).ln()
}

fn gmm_log_density(f: &Image, patches: &[Image], bw_sq: f64, t: usize, sched: &NoiseSchedule) -> f64 {
    let logs: Vec<f64> = patches
        .iter()
        .map(|p| gaussian_log_density(f, p, bw_sq, t, sched))
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln() - (patches.len() as f64).ln()
}

fn finite_difference(f: &Image, h: f64, log_p: impl Fn(&Image) -> f64) -> Vec<f64> {
    (0..f.len())
        .map(|i| {
            let mut plus = f.clone();
            plus.pixels_mut()[i] += h;
            let mut minus = f.clone();
            minus.pixels_mut()[i] -= h;
            (log_p(&plus) - log_p(&minus)) / (2.0 * h)
        })
        .collect()
}

fn relative_error(got: &Image, want: &[f64]) -> f64 {
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = got
        .pixels()
        .iter()
        .zip(want)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    err / scale
}

#[test]
fn gaussian_score_matches_finite_differences() {
    let sched = NoiseSchedule::linear(100).unwrap();
    let mut rng = Rng::new(31);
    let mu = random_image(&mut rng, 8, 8);
    let sigma0_sq = 0.01;
    let model = gaussian_score(GaussianScoreParams {
        mu: mu.clone(),
        sigma0_sq,
    })
    .unwrap();
    for t in [1, 50, 100] {
        let f = random_image(&mut rng, 8, 8);
        let fd = finite_difference(&f, 1e-5, |g| gaussian_log_density(g, &mu, sigma0_sq, t, &sched));
        let err = relative_error(&model.score(&f, t, &sched).unwrap(), &fd);
        assert!(err <= 1e-6, "t={t}: relative error {err}");
    }
}

#[test]
fn gmm_score_matches_finite_differences() {
    let sched = NoiseSchedule::linear(100).unwrap();
    let mut rng = Rng::new(32);
    let patches: Vec<Image> = (0..5).map(|_| random_image(&mut rng, 8, 8)).collect();
    let bw_sq = 0.05f64.powi(2);
    let model = gmm_empirical_score(GmmScoreParams {
        patches: patches.clone(),
        bandwidth_sq: bw_sq,
    })
    .unwrap();
    for t in [1, 50, 100] {
        // Start near a blend of two patches so more than one component matters.
        let s = sched.alpha_bar(t).sqrt();
        let f = Image::from_fn(8, 8, 1.0, |r, c| {
            let i = r * 8 + c;
            s * (0.5 * patches[0].pixels()[i] + 0.5 * patches[1].pixels()[i]) + 0.05 * rng.normal()
        })
        .unwrap();
        let fd = finite_difference(&f, 1e-5, |g| gmm_log_density(g, &patches, bw_sq, t, &sched));
        let err = relative_error(&model.score(&f, t, &sched).unwrap(), &fd);
        assert!(err <= 1e-4, "t={t}: relative error {err}");
    }
}

/// Direct per-window SSIM with two-pass statistics.
fn naive_ssim(a: &Image, b: &Image, p: &SsimParams) -> f64 {
    let w = p.window;
    let mut total = 0.0;
    let mut count = 0usize;
    let mut r = 0;
    while r + w <= a.height() {
        let mut c = 0;
        while c + w <= a.width() {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for i in r..r + w {
                for j in c..c + w {
                    xs.push(a.get(i, j));
                    ys.push(b.get(i, j));
                }
            }
            let n = xs.len() as f64;
            let ma = xs.iter().sum::<f64>() / n;
            let mb = ys.iter().sum::<f64>() / n;
            let va = xs.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
            let vb = ys.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n;
            let cov = xs.iter().zip(&ys).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
            let l = (2.0 * ma * mb + p.c1) / (ma * ma + mb * mb + p.c1);
            let con = (2.0 * va.sqrt() * vb.sqrt() + p.c2) / (va + vb + p.c2);
            let s = (cov + p.c3) / (va.sqrt() * vb.sqrt() + p.c3);
            total += l * con * s;
            count += 1;
            c += p.stride;
        }
        r += p.stride;
    }
    total / count as f64
}

#[test]
fn ssim_matches_naive_window_oracle() {
    let mut rng = Rng::new(41);
    let a = random_image(&mut rng, 16, 16);
    let b = random_image(&mut rng, 16, 16);
    let p = SsimParams::default();
    let got = ssim_pair(&a, &b, &p).unwrap();
    let want = naive_ssim(&a, &b, &p);
    assert!((got - want).abs() < 1e-10, "{got} vs {want}");

    let strided = SsimParams {
        window: 5,
        stride: 3,
        ..p
    };
    let got = ssim_pair(&a, &b, &strided).unwrap();
    assert!((got - naive_ssim(&a, &b, &strided)).abs() < 1e-10);
}

#[test]
fn fusion_ssim_is_two_oracle_runs() {
    let mut rng = Rng::new(42);
    let (om, cp, f) = (
        random_image(&mut rng, 16, 16),
        random_image(&mut rng, 16, 16),
        random_image(&mut rng, 16, 16),
    );
    let p = SsimParams::default();
    let r = fusion_ssim(&om, &cp, &f, &p).unwrap();
    let want = naive_ssim(&om, &f, &p) + naive_ssim(&cp, &f, &p);
    assert!((r.total - want).abs() < 1e-10);
}

#[test]
fn average_matches_exact_rational_mean() {
    let mut rng = Rng::new(43);
    let values: Vec<f64> = (0..30).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
    let mut sum = BigRational::zero();
    for v in &values {
        sum += BigRational::from_float(*v).unwrap();
    }
    let want = to_f64(&(sum / BigRational::from_integer(BigInt::from(30))));
    let got = average_ssim(&values).unwrap();
    assert!((got - want).abs() < 1e-12);
}

#[test]
fn baseline_with_unit_weights_matches_elementwise_oracle() {
    let mut rng = Rng::new(44);
    let (om, cp) = (random_image(&mut rng, 6, 7), random_image(&mut rng, 6, 7));
    let got = baseline_rois(&om, &cp, 1.0, 1.0).unwrap();
    for i in 0..om.len() {
        let (o, c) = (om.pixels()[i], cp.pixels()[i]);
        let m = (o + c) / 2.0;
        assert!((got.pixels()[i] - (m + o + c) / 3.0).abs() < 1e-15);
    }
}
