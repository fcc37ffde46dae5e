//! Two-stage coordinate grid search over the rectification weights.
//!
//! Stage 1 scans `eta` with `psi` held at `psi0`; stage 2 scans `psi` with
//! `eta` fixed at the stage-1 winner. Each candidate is scored by the mean
//! fusion SSIM over all pairs, and ties go to the smallest candidate.

use std::str::FromStr;

use rayon::prelude::*;

use crate::diffusion::{fuse_pair, FusionConfig};
use crate::error::{Error, Result};
use crate::metrics::{average_ssim, fusion_ssim, SsimParams};
use crate::registration::RoiPair;
use crate::rng::{derive_seed, Rng};
use crate::scores::ScoreModel;

/// Evenly spaced candidates from `lo` to `hi`, both included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningGrid {
    pub lo: f64,
    pub hi: f64,
    pub n_points: usize,
}

impl Default for TuningGrid {
    fn default() -> Self {
        TuningGrid {
            lo: 0.0,
            hi: 100.0,
            n_points: 11,
        }
    }
}

impl TuningGrid {
    pub fn new(lo: f64, hi: f64, n_points: usize) -> Result<Self> {
        let grid = TuningGrid { lo, hi, n_points };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(Error::InvalidGrid(format!("need lo <= hi, got {}:{}", self.lo, self.hi)));
        }
        if self.n_points == 0 {
            return Err(Error::InvalidGrid("at least one point required".into()));
        }
        if self.n_points == 1 && self.lo != self.hi {
            return Err(Error::InvalidGrid("a single-point grid needs lo == hi".into()));
        }
        if self.lo < 0.0 {
            return Err(Error::InvalidGrid("rectification weights must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        if self.n_points == 1 {
            return vec![self.lo];
        }
        let last = (self.n_points - 1) as f64;
        (0..self.n_points)
            .map(|i| {
                if i + 1 == self.n_points {
                    self.hi
                } else {
                    self.lo + (self.hi - self.lo) * i as f64 / last
                }
            })
            .collect()
    }

    pub fn contains_range(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

impl FromStr for TuningGrid {
    type Err = Error;

    /// Parses `LO:HI:N`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidGrid(format!("expected LO:HI:N, got {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo = parts[0].trim().parse().map_err(|_| bad())?;
        let hi = parts[1].trim().parse().map_err(|_| bad())?;
        let n = parts[2].trim().parse().map_err(|_| bad())?;
        TuningGrid::new(lo, hi, n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningResult {
    pub eta_star: f64,
    pub psi_star: f64,
    pub psi0: f64,
    /// `(eta, average SSIM)` at `psi = psi0`.
    pub stage1_table: Vec<(f64, f64)>,
    /// `(psi, average SSIM)` at `eta = eta_star`.
    pub stage2_table: Vec<(f64, f64)>,
    pub n_pairs: usize,
    /// Number of candidate evaluations, each covering every pair.
    pub evaluations: usize,
}

fn label(eta: f64, psi: f64) -> String {
    format!("eta={eta}, psi={psi}")
}

fn scan<F>(candidates: &[(f64, f64)], n_pairs: usize, objective: &F) -> Result<Vec<f64>>
where
    F: Fn(f64, f64, usize) -> Result<f64> + Sync,
{
    candidates
        .par_iter()
        .map(|&(eta, psi)| {
            let values: Vec<f64> = (0..n_pairs)
                .into_par_iter()
                .map(|pair| {
                    objective(eta, psi, pair).map_err(|e| Error::Tuning {
                        candidate: label(eta, psi),
                        pair,
                        source: Box::new(e),
                    })
                })
                .collect::<Result<_>>()?;
            average_ssim(&values)
        })
        .collect()
}

/// Index of the first maximum; NaN never wins.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] || values[best].is_nan() {
            best = i;
        }
    }
    best
}

/// Coordinate search over an arbitrary per-pair objective `(eta, psi, pair) -> score`.
pub fn tune_with<F>(
    n_pairs: usize,
    grid_eta: &TuningGrid,
    grid_psi: &TuningGrid,
    psi0: f64,
    objective: F,
) -> Result<TuningResult>
where
    F: Fn(f64, f64, usize) -> Result<f64> + Sync,
{
    if n_pairs == 0 {
        return Err(Error::EmptyCorpus);
    }
    grid_eta.validate()?;
    grid_psi.validate()?;
    if !grid_psi.contains_range(psi0) {
        return Err(Error::InvalidGrid(format!(
            "psi0 = {psi0} outside [{}, {}]",
            grid_psi.lo, grid_psi.hi
        )));
    }

    let etas = grid_eta.points();
    let stage1: Vec<(f64, f64)> = etas.iter().map(|&e| (e, psi0)).collect();
    let scores1 = scan(&stage1, n_pairs, &objective)?;
    let eta_star = etas[argmax(&scores1)];

    let psis = grid_psi.points();
    let stage2: Vec<(f64, f64)> = psis.iter().map(|&p| (eta_star, p)).collect();
    let scores2 = scan(&stage2, n_pairs, &objective)?;
    let psi_star = psis[argmax(&scores2)];

    log::info!("tuned eta* = {eta_star}, psi* = {psi_star} over {n_pairs} pairs");
    Ok(TuningResult {
        eta_star,
        psi_star,
        psi0,
        stage1_table: etas.into_iter().zip(scores1).collect(),
        stage2_table: psis.into_iter().zip(scores2).collect(),
        n_pairs,
        evaluations: stage1.len() + stage2.len(),
    })
}

/// Per-pair fusion objective: fuse with seed `cfg.seed ^ pair` and return the fusion SSIM total.
///
/// The seed does not depend on the candidate, so every candidate sees the same
/// initial noise for a given pair.
pub fn pair_objective(
    pair_index: usize,
    pair: &RoiPair,
    eta: f64,
    psi: f64,
    cfg: &FusionConfig,
    score: &dyn ScoreModel,
    ssim: &SsimParams,
) -> Result<f64> {
    let mut rng = Rng::new(derive_seed(cfg.seed, pair_index as u64));
    let result = fuse_pair(pair, &cfg.with_weights(eta, psi), score, &mut rng)?;
    Ok(fusion_ssim(&pair.roi_om, &pair.roi_cp, &result.fused, ssim)?.total)
}

pub fn tune(
    pairs: &[RoiPair],
    grid_eta: &TuningGrid,
    grid_psi: &TuningGrid,
    psi0: f64,
    cfg: &FusionConfig,
    score: &dyn ScoreModel,
    ssim: &SsimParams,
) -> Result<TuningResult> {
    cfg.validate()?;
    ssim.validate()?;
    let cfg = FusionConfig {
        trajectory_stride: None,
        ..cfg.clone()
    };
    tune_with(pairs.len(), grid_eta, grid_psi, psi0, |eta, psi, j| {
        pair_objective(j, &pairs[j], eta, psi, &cfg, score, ssim)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn grid_points() {
        let g = TuningGrid::default();
        assert_eq!(g.points(), (0..=10).map(|i| 10.0 * i as f64).collect::<Vec<_>>());
        assert_eq!(TuningGrid::new(5.0, 5.0, 1).unwrap().points(), vec![5.0]);
        assert!(TuningGrid::new(0.0, 1.0, 1).is_err());
        assert!(TuningGrid::new(2.0, 1.0, 3).is_err());
        assert_eq!("0:100:11".parse::<TuningGrid>().unwrap(), g);
        assert!("0:100".parse::<TuningGrid>().is_err());
    }

    #[test]
    fn unimodal_stub_peaks_at_forty() {
        let grid = TuningGrid::default();
        let r = tune_with(3, &grid, &grid, 0.0, |eta, psi, _| Ok(-(eta - 40.0).powi(2) - 0.1 * (psi - 70.0).powi(2)))
            .unwrap();
        assert_eq!(r.eta_star, 40.0);
        assert_eq!(r.psi_star, 70.0);
    }

    #[test]
    fn single_point_grids() {
        let g = TuningGrid::new(5.0, 5.0, 1).unwrap();
        let r = tune_with(2, &g, &g, 5.0, |_, _, _| Ok(0.3)).unwrap();
        assert_eq!((r.eta_star, r.psi_star), (5.0, 5.0));
        assert_eq!(r.stage1_table.len(), 1);
        assert_eq!(r.stage2_table.len(), 1);
    }

    #[test]
    fn ties_pick_the_smallest_candidate() {
        let grid = TuningGrid::default();
        let r = tune_with(1, &grid, &grid, 0.0, |eta, _, _| Ok(if eta >= 30.0 { 1.0 } else { 0.0 })).unwrap();
        assert_eq!(r.eta_star, 30.0);
        assert_eq!(r.psi_star, 0.0);
    }

    #[test]
    fn evaluation_count() {
        let calls = AtomicUsize::new(0);
        let ge = TuningGrid::new(0.0, 10.0, 4).unwrap();
        let gp = TuningGrid::new(0.0, 10.0, 6).unwrap();
        let r = tune_with(7, &ge, &gp, 0.0, |_, _, _| {
            calls.fetch_add(1, Ordering::Relaxed);
            Ok(1.0)
        })
        .unwrap();
        assert_eq!(r.evaluations, 10);
        assert_eq!(calls.load(Ordering::Relaxed), 10 * 7);
    }

    #[test]
    fn errors_carry_context() {
        let g = TuningGrid::default();
        assert!(matches!(tune_with(0, &g, &g, 0.0, |_, _, _| Ok(1.0)), Err(Error::EmptyCorpus)));
        assert!(matches!(tune_with(1, &g, &g, 200.0, |_, _, _| Ok(1.0)), Err(Error::InvalidGrid(_))));
        let err = tune_with(3, &g, &g, 0.0, |eta, _, pair| {
            if eta == 20.0 && pair == 2 {
                Err(Error::EmptyList)
            } else {
                Ok(0.0)
            }
        })
        .unwrap_err();
        match err {
            Error::Tuning { candidate, pair, .. } => {
                assert_eq!(pair, 2);
                assert!(candidate.contains("eta=20"));
            }
            other => panic!("unexpected {other}"),
        }
    }
}
