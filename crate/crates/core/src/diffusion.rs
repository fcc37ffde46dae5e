//! Diffusion-based fusion of a registered optical/profilometry pair.
//!
//! Each reverse step runs three stages:
//!
//! 1. denoise: `f~ = (f_t + (1 - abar_t) s(f_t, t)) / sqrt(abar_t)`
//! 2. rectify: pull `f~` toward both source ROIs, weighted by `eta` and `psi`
//! 3. transition: `f_{t-1} = a_t f_t + b_t f^`, with
//!    `a_t = sqrt(alpha_t) (1 - abar_{t-1}) / (1 - abar_t)` and
//!    `b_t = sqrt(abar_{t-1}) beta_t / (1 - abar_t)`
//!
//! The transition has no stochastic term, so the whole loop is a
//! deterministic function of the initial noise `f_T`.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::registration::RoiPair;
use crate::rng::Rng;
use crate::schedule::{NoiseSchedule, ScheduleKind, DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_STEPS};
use crate::scores::ScoreModel;

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub eta: f64,
    pub psi: f64,
    pub seed: u64,
    pub clamp_output: bool,
    /// Keep every `stride`-th rectified estimate (and the last one) when set.
    pub trajectory_stride: Option<usize>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            steps: DEFAULT_STEPS,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
            eta: 0.0,
            psi: 0.0,
            seed: 0,
            clamp_output: true,
            trajectory_stride: None,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidScheduleParams("T must be at least 1".into()));
        }
        check_weights(self.eta, self.psi)?;
        if self.trajectory_stride == Some(0) {
            return Err(Error::InvalidScheduleParams("trajectory stride must be positive".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::build(self.steps, self.beta_start, self.beta_end, ScheduleKind::Linear)
    }

    pub fn with_weights(&self, eta: f64, psi: f64) -> FusionConfig {
        FusionConfig {
            eta,
            psi,
            ..self.clone()
        }
    }
}

fn check_weights(eta: f64, psi: f64) -> Result<()> {
    if !(eta >= 0.0 && psi >= 0.0 && eta.is_finite() && psi.is_finite()) {
        return Err(Error::InvalidScheduleParams(format!(
            "eta and psi must be finite and nonnegative, got {eta} and {psi}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct FusionResult {
    pub fused: Image,
    /// `(t, f^_{0|t})` snapshots, newest step last.
    pub trajectory: Vec<(usize, Image)>,
    pub config: FusionConfig,
    pub wall_time: Duration,
}

/// Predicted clean data from the noisy state at step `t`.
pub fn denoise_estimate(
    f_t: &Image,
    t: usize,
    sched: &NoiseSchedule,
    score: &dyn ScoreModel,
) -> Result<Image> {
    sched.check_step(t, false)?;
    let s = score.score(f_t, t, sched)?;
    f_t.same_dims(&s)?;
    if !s.all_finite() {
        return Err(Error::NonFiniteScore { t });
    }
    let om = sched.one_minus_alpha_bar(t);
    let inv = 1.0 / sched.alpha_bar(t).sqrt();
    f_t.zip_map(&s, |x, g| (x + om * g) * inv)
}

/// Cross-modality correction of a denoised estimate.
pub trait Rectifier: Send + Sync {
    fn rectify(&self, f_tilde: &Image, roi_om: &Image, roi_cp: &Image, eta: f64, psi: f64) -> Result<Image>;
}

/// Closed-form minimizer of
/// `1/2 |f - f~|^2 + eta/2 |f - ROI_OM|^2 + psi/2 |f - ROI_CP|^2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProximalBlend;

impl Rectifier for ProximalBlend {
    fn rectify(&self, f_tilde: &Image, roi_om: &Image, roi_cp: &Image, eta: f64, psi: f64) -> Result<Image> {
        rectify(f_tilde, roi_om, roi_cp, eta, psi)
    }
}

/// `(f~ + eta ROI_OM + psi ROI_CP) / (1 + eta + psi)`, pixelwise.
pub fn rectify(f_tilde: &Image, roi_om: &Image, roi_cp: &Image, eta: f64, psi: f64) -> Result<Image> {
    f_tilde.same_dims(roi_om)?;
    f_tilde.same_dims(roi_cp)?;
    check_weights(eta, psi)?;
    let denom = 1.0 + eta + psi;
    let w_self = 1.0 / denom;
    let w_om = eta / denom;
    let w_cp = psi / denom;
    let pixels = f_tilde
        .pixels()
        .iter()
        .zip(roi_om.pixels())
        .zip(roi_cp.pixels())
        .map(|((&f, &o), &c)| w_self * f + w_om * o + w_cp * c)
        .collect();
    Image::grid(f_tilde.height(), f_tilde.width(), pixels, f_tilde.pitch_um())
}

/// Coefficients `(a_t, b_t)` of `f_{t-1} = a_t f_t + b_t f^_{0|t}`.
pub fn transition_coefficients(t: usize, sched: &NoiseSchedule) -> Result<(f64, f64)> {
    sched.check_step(t, false)?;
    let om_t = sched.one_minus_alpha_bar(t);
    let a = sched.alpha(t).sqrt() * sched.one_minus_alpha_bar(t - 1) / om_t;
    let b = sched.alpha_bar(t - 1).sqrt() * sched.beta(t) / om_t;
    Ok((a, b))
}

pub fn ddim_transition(f_t: &Image, f_hat0: &Image, t: usize, sched: &NoiseSchedule) -> Result<Image> {
    let (a, b) = transition_coefficients(t, sched)?;
    f_t.zip_map(f_hat0, |x, y| a * x + b * y)
}

/// Runs the reverse loop from `f_T ~ N(0, I)` down to `f_0`.
pub fn fuse_rois(
    roi_om: &Image,
    roi_cp: &Image,
    cfg: &FusionConfig,
    score: &dyn ScoreModel,
    rectifier: &dyn Rectifier,
    rng: &mut Rng,
) -> Result<FusionResult> {
    roi_om.same_dims(roi_cp)?;
    cfg.validate()?;
    let start = Instant::now();
    let sched = cfg.schedule()?;
    let f_t = rng.normal_grid(roi_om.height(), roi_om.width(), roi_om.pitch_um());
    let (fused, trajectory) = reverse_loop(f_t, roi_om, roi_cp, cfg, &sched, score, rectifier)?;
    Ok(FusionResult {
        fused,
        trajectory,
        config: cfg.clone(),
        wall_time: start.elapsed(),
    })
}

/// The reverse loop from a given initial state.
pub fn reverse_loop(
    mut f: Image,
    roi_om: &Image,
    roi_cp: &Image,
    cfg: &FusionConfig,
    sched: &NoiseSchedule,
    score: &dyn ScoreModel,
    rectifier: &dyn Rectifier,
) -> Result<(Image, Vec<(usize, Image)>)> {
    f.same_dims(roi_om)?;
    let mut trajectory = Vec::new();
    for t in (1..=sched.steps()).rev() {
        let f_tilde = denoise_estimate(&f, t, sched, score)?;
        let f_hat = rectifier.rectify(&f_tilde, roi_om, roi_cp, cfg.eta, cfg.psi)?;
        f = ddim_transition(&f, &f_hat, t, sched)?;
        if !f.all_finite() {
            return Err(Error::NonFiniteState { t });
        }
        if let Some(stride) = cfg.trajectory_stride {
            if t % stride == 0 || t == 1 {
                trajectory.push((t, f_hat));
            }
        }
    }
    let fused = if cfg.clamp_output { f.clamp01() } else { f };
    Ok((fused, trajectory))
}

pub fn fuse_pair(pair: &RoiPair, cfg: &FusionConfig, score: &dyn ScoreModel, rng: &mut Rng) -> Result<FusionResult> {
    fuse_rois(&pair.roi_om, &pair.roi_cp, cfg, score, &ProximalBlend, rng)
}

/// Non-generative fusion: the rectifier applied once to the mean of the two ROIs.
pub fn fuse_baseline(pair: &RoiPair, eta: f64, psi: f64) -> Result<Image> {
    baseline_rois(&pair.roi_om, &pair.roi_cp, eta, psi)
}

pub fn baseline_rois(roi_om: &Image, roi_cp: &Image, eta: f64, psi: f64) -> Result<Image> {
    let mean = roi_om.zip_map(roi_cp, |a, b| 0.5 * (a + b))?;
    rectify(&mean, roi_om, roi_cp, eta, psi)
}
