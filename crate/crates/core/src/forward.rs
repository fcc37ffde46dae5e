//! Forward (noising) process.

use crate::error::Result;
use crate::image::Image;
use crate::rng::Rng;
use crate::schedule::NoiseSchedule;

/// Draws `f_t = sqrt(abar_t) * f0 + sqrt(1 - abar_t) * eps` with `eps` standard normal.
///
/// This is the closed-form marginal of `t` single-step transitions
/// `q(f_t | f_{t-1}) = N(sqrt(1 - beta_t) f_{t-1}, beta_t I)`.
pub fn forward_marginal_sample(
    f0: &Image,
    t: usize,
    sched: &NoiseSchedule,
    rng: &mut Rng,
) -> Result<Image> {
    sched.check_step(t, true)?;
    if t == 0 {
        return Ok(f0.clone());
    }
    let eps = rng.normal_grid(f0.height(), f0.width(), f0.pitch_um());
    forward_marginal_with_noise(f0, t, sched, &eps)
}

/// Same as [`forward_marginal_sample`] with caller-supplied noise.
pub fn forward_marginal_with_noise(
    f0: &Image,
    t: usize,
    sched: &NoiseSchedule,
    eps: &Image,
) -> Result<Image> {
    sched.check_step(t, true)?;
    if t == 0 {
        return Ok(f0.clone());
    }
    let signal = sched.alpha_bar(t).sqrt();
    let noise = sched.one_minus_alpha_bar(t).sqrt();
    f0.zip_map(eps, |x, e| signal * x + noise * e)
}

/// One transition of the forward chain, `f_t ~ q(f_t | f_{t-1})`.
pub fn forward_step(f_prev: &Image, t: usize, sched: &NoiseSchedule, rng: &mut Rng) -> Result<Image> {
    sched.check_step(t, false)?;
    let keep = sched.alpha(t).sqrt();
    let sd = sched.beta(t).sqrt();
    let eps = rng.normal_grid(f_prev.height(), f_prev.width(), f_prev.pitch_um());
    f_prev.zip_map(&eps, |x, e| keep * x + sd * e)
}
