//! Variance schedule of the forward noising process.

use crate::error::{Error, Result};

pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;
pub const DEFAULT_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScheduleKind {
    #[default]
    Linear,
}

/// Per-step `beta`, `alpha = 1 - beta` and cumulative `alpha_bar`.
///
/// Steps are 1-based: `beta(t)` is defined for `1 <= t <= T`, while
/// `alpha_bar(t)` is defined for `0 <= t <= T` with `alpha_bar(0) == 1`.
/// `one_minus_alpha_bar` is accumulated as
/// `(1 - abar_t) = (1 - abar_{t-1}) + abar_{t-1} * beta_t`, which avoids the
/// cancellation of `1.0 - abar_t` for small `t`; in particular
/// `one_minus_alpha_bar(1) == beta(1)` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    one_minus_alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn build(steps: usize, beta_start: f64, beta_end: f64, kind: ScheduleKind) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidScheduleParams("T must be at least 1".into()));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::InvalidScheduleParams(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start} and {beta_end}"
            )));
        }
        let beta: Vec<f64> = match kind {
            ScheduleKind::Linear if steps == 1 => vec![beta_start],
            ScheduleKind::Linear => {
                let span = beta_end - beta_start;
                let last = (steps - 1) as f64;
                (0..steps)
                    .map(|i| {
                        if i == steps - 1 {
                            beta_end
                        } else {
                            beta_start + span * (i as f64) / last
                        }
                    })
                    .collect()
            }
        };
        Self::from_betas(beta)
    }

    /// Default linear schedule from `1e-4` to `0.02`.
    pub fn linear(steps: usize) -> Result<Self> {
        Self::build(steps, DEFAULT_BETA_START, DEFAULT_BETA_END, ScheduleKind::Linear)
    }

    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::InvalidScheduleParams("T must be at least 1".into()));
        }
        if let Some(b) = beta.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::InvalidScheduleParams(format!("beta {b} outside (0, 1)")));
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(beta.len() + 1);
        let mut one_minus = Vec::with_capacity(beta.len() + 1);
        alpha_bar.push(1.0);
        one_minus.push(0.0);
        for (a, b) in alpha.iter().zip(&beta) {
            let prev = *alpha_bar.last().unwrap();
            let prev_om = *one_minus.last().unwrap();
            alpha_bar.push(prev * a);
            one_minus.push(prev_om + prev * b);
        }
        Ok(NoiseSchedule {
            beta,
            alpha,
            alpha_bar,
            one_minus_alpha_bar: one_minus,
        })
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn check_step(&self, t: usize, allow_zero: bool) -> Result<()> {
        if t > self.steps() || (t == 0 && !allow_zero) {
            return Err(Error::StepOutOfRange {
                t,
                steps: self.steps(),
            });
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn one_minus_alpha_bar(&self, t: usize) -> f64 {
        self.one_minus_alpha_bar[t]
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    /// `alpha_bar` for `t = 0..=T`.
    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }
}
