//! Analytic score functions `s(f_t, t) = grad log p_t(f_t)`.
//!
//! These stand in for a learned denoiser: each model is the exact score of a
//! data distribution pushed through the forward process, so every step of the
//! sampler can be checked against closed forms.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::schedule::NoiseSchedule;

/// Default mixture bandwidth, in normalized intensity units.
pub const DEFAULT_BANDWIDTH: f64 = 0.05;

pub trait ScoreModel: Send + Sync {
    /// Gradient of the log-density of the `t`-step diffused data distribution at `f`.
    fn score(&self, f: &Image, t: usize, sched: &NoiseSchedule) -> Result<Image>;
}

impl<S: ScoreModel + ?Sized> ScoreModel for &S {
    fn score(&self, f: &Image, t: usize, sched: &NoiseSchedule) -> Result<Image> {
        (**self).score(f, t, sched)
    }
}

impl<S: ScoreModel + ?Sized> ScoreModel for Box<S> {
    fn score(&self, f: &Image, t: usize, sched: &NoiseSchedule) -> Result<Image> {
        (**self).score(f, t, sched)
    }
}

/// Variance of the diffused marginal for data variance `data_var`.
fn diffused_variance(data_var: f64, t: usize, sched: &NoiseSchedule) -> Result<f64> {
    sched.check_step(t, true)?;
    let v = sched.alpha_bar(t) * data_var + sched.one_minus_alpha_bar(t);
    if v > 0.0 {
        Ok(v)
    } else {
        // A point mass has no score at t = 0.
        Err(Error::StepOutOfRange {
            t,
            steps: sched.steps(),
        })
    }
}

/// The score of a flat prior: identically zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroScore;

impl ScoreModel for ZeroScore {
    fn score(&self, f: &Image, t: usize, sched: &NoiseSchedule) -> Result<Image> {
        sched.check_step(t, true)?;
        Ok(f.map(|_| 0.0))
    }
}

#[derive(Debug, Clone)]
pub struct GaussianScoreParams {
    pub mu: Image,
    pub sigma0_sq: f64,
}

/// Data distribution `N(mu, sigma0^2 I)`, diffused to
/// `N(sqrt(abar_t) mu, (abar_t sigma0^2 + 1 - abar_t) I)`.
#[derive(Debug, Clone)]
pub struct GaussianScore {
    params: GaussianScoreParams,
}

pub fn gaussian_score(params: GaussianScoreParams) -> Result<GaussianScore> {
    if !(params.sigma0_sq >= 0.0 && params.sigma0_sq.is_finite()) {
        return Err(Error::InvalidImage(format!(
            "sigma0^2 = {} must be nonnegative",
            params.sigma0_sq
        )));
    }
    Ok(GaussianScore { params })
}

impl GaussianScore {
    pub fn mu(&self) -> &Image {
        &self.params.mu
    }

    pub fn sigma0_sq(&self) -> f64 {
        self.params.sigma0_sq
    }
}

impl ScoreModel for GaussianScore {
    fn score(&self, f: &Image, t: usize, sched: &NoiseSchedule) -> Result<Image> {
        self.params.mu.same_dims(f)?;
        let v = diffused_variance(self.params.sigma0_sq, t, sched)?;
        let s = sched.alpha_bar(t).sqrt();
        f.zip_map(&self.params.mu, |x, m| -(x - s * m) / v)
    }
}

#[derive(Debug, Clone)]
pub struct GmmScoreParams {
    pub patches: Vec<Image>,
    pub bandwidth_sq: f64,
}

/// Uniform mixture of isotropic Gaussians centred on `patches`, each with
/// variance `bandwidth_sq`, pushed through the forward process.
#[derive(Debug, Clone)]
pub struct GmmScore {
    params: GmmScoreParams,
}

pub fn gmm_empirical_score(params: GmmScoreParams) -> Result<GmmScore> {
    let first = params.patches.first().ok_or(Error::EmptyCorpus)?;
    for p in &params.patches[1..] {
        first.same_dims(p)?;
    }
    if !(params.bandwidth_sq >= 0.0 && params.bandwidth_sq.is_finite()) {
        return Err(Error::InvalidImage(format!(
            "bandwidth^2 = {} must be nonnegative",
            params.bandwidth_sq
        )));
    }
    Ok(GmmScore { params })
}

impl GmmScore {
    pub fn patches(&self) -> &[Image] {
        &self.params.patches
    }

    pub fn bandwidth_sq(&self) -> f64 {
        self.params.bandwidth_sq
    }

    /// Posterior component weights at `f`, via log-sum-exp.
    pub fn responsibilities(&self, f: &Image, t: usize, sched: &NoiseSchedule) -> Result<Vec<f64>> {
        self.params.patches[0].same_dims(f)?;
        let v = diffused_variance(self.params.bandwidth_sq, t, sched)?;
        let s = sched.alpha_bar(t).sqrt();
        let logits: Vec<f64> = self
            .params
            .patches
            .iter()
            .map(|p| {
                let d2: f64 = f
                    .pixels()
                    .iter()
                    .zip(p.pixels())
                    .map(|(x, m)| (x - s * m).powi(2))
                    .sum();
                -0.5 * d2 / v
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        Ok(weights.into_iter().map(|w| w / total).collect())
    }
}

impl ScoreModel for GmmScore {
    fn score(&self, f: &Image, t: usize, sched: &NoiseSchedule) -> Result<Image> {
        let resp = self.responsibilities(f, t, sched)?;
        let v = diffused_variance(self.params.bandwidth_sq, t, sched)?;
        let s = sched.alpha_bar(t).sqrt();
        // sum_k r_k * (-(f - s m_k) / v) = -(f - s * sum_k r_k m_k) / v
        let mut center = vec![0.0; f.len()];
        for (r, p) in resp.iter().zip(&self.params.patches) {
            if *r == 0.0 {
                continue;
            }
            for (c, m) in center.iter_mut().zip(p.pixels()) {
                *c += r * m;
            }
        }
        let pixels = f
            .pixels()
            .iter()
            .zip(&center)
            .map(|(x, c)| -(x - s * c) / v)
            .collect();
        Image::grid(f.height(), f.width(), pixels, f.pitch_um())
    }
}
