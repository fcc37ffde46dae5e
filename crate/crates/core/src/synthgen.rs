//! Deterministic synthetic printed-line corpora with ground truth.
//!
//! Each frame holds `lines_per_frame` horizontal lines with a Gaussian
//! cross-section whose full width at half maximum grows by a fixed amount per
//! frame. Small satellite droplets sit beside each line. The profilometry map
//! carries heights in micrometres and is displaced by the frame's injected
//! offset; the optical frame sees the undisplaced surface through a saturating
//! intensity response. Both modalities get independent additive noise.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{HeightMap, Image, DEFAULT_PITCH_UM};
use crate::registration::{TimedHeightMap, TimedImage};
use crate::rng::Rng;

/// `FWHM = 2 sqrt(2 ln 2) sigma`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossSection {
    #[default]
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub n_frames: usize,
    pub lines_per_frame: usize,
    pub frame_rows: usize,
    pub frame_cols: usize,
    pub pitch_um: f64,
    /// Full width at half maximum of frame-0 lines.
    pub base_width_um: f64,
    pub width_drift_um_per_frame: f64,
    pub peak_height_um: f64,
    pub cross_section: CrossSection,
    /// Noise standard deviation relative to full scale (intensity 1, height `peak_height_um`).
    pub overspray_noise_sd: f64,
    /// Per-frame `(dy, dx)` displacement of the profilometry map; empty means none.
    pub injected_offsets: Vec<(i64, i64)>,
    pub seed: u64,
    /// Columns left blank at each end of every line.
    pub line_margin_px: usize,
    pub satellites_per_line: usize,
    /// Gain of the `tanh` optical response.
    pub om_gain: f64,
    /// Span of the acquisition timeline, in hours.
    pub duration_h: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_frames: 8,
            lines_per_frame: 4,
            frame_rows: 320,
            frame_cols: 128,
            pitch_um: DEFAULT_PITCH_UM,
            base_width_um: 3.0,
            width_drift_um_per_frame: 0.1,
            peak_height_um: 4.0,
            cross_section: CrossSection::Gaussian,
            overspray_noise_sd: 0.02,
            injected_offsets: Vec::new(),
            seed: 0,
            line_margin_px: 24,
            satellites_per_line: 8,
            om_gain: 0.5,
            duration_h: 16.0,
        }
    }
}

const TAPER_PX: f64 = 6.0;

impl CorpusSpec {
    pub fn width_um(&self, frame: usize) -> f64 {
        self.base_width_um + frame as f64 * self.width_drift_um_per_frame
    }

    pub fn offset(&self, frame: usize) -> (i64, i64) {
        self.injected_offsets.get(frame).copied().unwrap_or((0, 0))
    }

    pub fn centroid_row(&self, line: usize) -> usize {
        ((line as f64 + 0.5) * self.frame_rows as f64 / self.lines_per_frame as f64).round() as usize
    }

    pub fn timestamp(&self, frame: usize) -> i64 {
        if self.n_frames <= 1 {
            return 0;
        }
        (frame as f64 * self.duration_h * 3600.0 / (self.n_frames - 1) as f64).round() as i64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::SpecInfeasible(m));
        if self.n_frames == 0 || self.lines_per_frame == 0 {
            return bad("need at least one frame and one line".into());
        }
        if !(self.pitch_um > 0.0 && self.peak_height_um > 0.0 && self.om_gain > 0.0) {
            return bad("pitch, peak height and optical gain must be positive".into());
        }
        if !(self.overspray_noise_sd >= 0.0) {
            return bad("noise sd must be nonnegative".into());
        }
        if !self.injected_offsets.is_empty() && self.injected_offsets.len() != self.n_frames {
            return bad(format!(
                "{} injected offsets for {} frames",
                self.injected_offsets.len(),
                self.n_frames
            ));
        }
        let widths = [self.width_um(0), self.width_um(self.n_frames - 1)];
        if widths.iter().any(|w| !(*w > 0.0)) {
            return bad(format!("line width must stay positive, got {widths:?} µm"));
        }
        let max_fwhm_px = widths[0].max(widths[1]) / self.pitch_um;
        let radius = 1.5 * max_fwhm_px;
        let spacing = self.frame_rows as f64 / self.lines_per_frame as f64;
        if 2.0 * radius > spacing {
            return bad(format!(
                "lines {max_fwhm_px:.1} px wide overlap at a spacing of {spacing:.1} px"
            ));
        }
        let (min_dy, max_dy, min_dx, max_dx) = (0..self.n_frames).map(|k| self.offset(k)).fold(
            (0i64, 0i64, 0i64, 0i64),
            |(a, b, c, d), (dy, dx)| (a.min(dy), b.max(dy), c.min(dx), d.max(dx)),
        );
        let first = self.centroid_row(0) as f64;
        let last = self.centroid_row(self.lines_per_frame - 1) as f64;
        if first - radius + (min_dy as f64) < 0.0 || last + radius + (max_dy as f64) > (self.frame_rows - 1) as f64 {
            return bad("lines leave the frame vertically".into());
        }
        let m = self.line_margin_px as i64;
        let span = self.frame_cols as i64 - 2 * m;
        if (span as f64) <= 2.0 * TAPER_PX {
            return bad("margins leave no room for the lines".into());
        }
        if m + min_dx < 0 || m - max_dx < 0 {
            return bad("lines leave the frame horizontally".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineTruth {
    pub frame: usize,
    pub line: usize,
    /// Line centre in optical-frame rows.
    pub centroid_row: usize,
    pub width_um: f64,
    pub peak_height_um: f64,
    /// First and one-past-last column of the line in the optical frame.
    pub col_start: usize,
    pub col_end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub lines: Vec<LineTruth>,
    pub offsets: Vec<(i64, i64)>,
    pub timestamps: Vec<i64>,
    pub pitch_um: f64,
}

impl GroundTruth {
    pub fn line(&self, frame: usize, line: usize) -> Option<&LineTruth> {
        self.lines.iter().find(|l| l.frame == frame && l.line == line)
    }

    /// Optical-frame pixels within half a width of the line centre.
    pub fn line_pixels(&self, truth: &LineTruth) -> Vec<(usize, usize)> {
        let half = 0.5 * truth.width_um / self.pitch_um;
        let lo = (truth.centroid_row as f64 - half).ceil().max(0.0) as usize;
        let hi = (truth.centroid_row as f64 + half).floor() as usize;
        (lo..=hi)
            .flat_map(|r| (truth.col_start..truth.col_end).map(move |c| (r, c)))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub om_frames: Vec<TimedImage>,
    pub cp_maps: Vec<TimedHeightMap>,
    pub truth: GroundTruth,
}

struct Satellite {
    row: f64,
    col: f64,
    sigma: f64,
    height: f64,
}

struct FrameSurface<'a> {
    spec: &'a CorpusSpec,
    sigma_px: f64,
    satellites: Vec<Satellite>,
}

impl FrameSurface<'_> {
    fn taper(&self, col: f64) -> f64 {
        let x0 = self.spec.line_margin_px as f64;
        let x1 = (self.spec.frame_cols - self.spec.line_margin_px) as f64;
        if col < x0 || col >= x1 {
            return 0.0;
        }
        let d = (col - x0).min(x1 - 1.0 - col);
        if d >= TAPER_PX {
            1.0
        } else {
            0.5 - 0.5 * (std::f64::consts::PI * (d + 1.0) / (TAPER_PX + 1.0)).cos()
        }
    }

    /// Noiseless height in micrometres at an undisplaced position.
    fn height(&self, row: f64, col: f64) -> f64 {
        let taper = self.taper(col);
        let mut h = 0.0;
        if taper > 0.0 {
            for line in 0..self.spec.lines_per_frame {
                let d = (row - self.spec.centroid_row(line) as f64) / self.sigma_px;
                if d.abs() < 12.0 {
                    h += (-0.5 * d * d).exp();
                }
            }
            h *= self.spec.peak_height_um * taper;
        }
        for s in &self.satellites {
            let d2 = ((row - s.row).powi(2) + (col - s.col).powi(2)) / (s.sigma * s.sigma);
            if d2 < 100.0 {
                h += s.height * (-0.5 * d2).exp();
            }
        }
        h
    }
}

fn render_frame(spec: &CorpusSpec, frame: usize) -> Result<(Image, HeightMap)> {
    let base = Rng::new(spec.seed);
    let mut geometry = base.fork(2 * frame as u64);
    let mut noise = base.fork(2 * frame as u64 + 1);
    let fwhm_px = spec.width_um(frame) / spec.pitch_um;
    let x0 = spec.line_margin_px as f64;
    let x1 = (spec.frame_cols - spec.line_margin_px) as f64;
    let mut satellites = Vec::new();
    for line in 0..spec.lines_per_frame {
        for _ in 0..spec.satellites_per_line {
            let side = if geometry.uniform() < 0.5 { -1.0 } else { 1.0 };
            let dist = geometry.uniform_range(0.9, 1.4) * fwhm_px;
            satellites.push(Satellite {
                row: spec.centroid_row(line) as f64 + side * dist,
                col: geometry.uniform_range(x0, x1),
                sigma: geometry.uniform_range(0.8, 1.6),
                height: geometry.uniform_range(0.15, 0.35) * spec.peak_height_um,
            });
        }
    }
    let surface = FrameSurface {
        spec,
        sigma_px: fwhm_px / FWHM_PER_SIGMA,
        satellites,
    };
    let (dy, dx) = spec.offset(frame);
    let (rows, cols) = (spec.frame_rows, spec.frame_cols);
    let norm = spec.om_gain.tanh();
    let sd = spec.overspray_noise_sd;
    let mut om = Vec::with_capacity(rows * cols);
    let mut cp = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let h = surface.height(r as f64, c as f64);
            let intensity = (spec.om_gain * h / spec.peak_height_um).tanh() / norm;
            om.push((intensity + sd * noise.normal()).clamp(0.0, 1.0));
        }
    }
    for r in 0..rows {
        for c in 0..cols {
            let h = surface.height((r as i64 - dy) as f64, (c as i64 - dx) as f64);
            cp.push(h + sd * spec.peak_height_um * noise.normal());
        }
    }
    Ok((
        Image::new(rows, cols, om, spec.pitch_um)?,
        HeightMap::new(rows, cols, cp, spec.pitch_um)?,
    ))
}

pub fn generate_corpus(spec: &CorpusSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let frames: Vec<(Image, HeightMap)> = (0..spec.n_frames)
        .into_par_iter()
        .map(|k| render_frame(spec, k))
        .collect::<Result<_>>()?;
    let mut lines = Vec::new();
    for k in 0..spec.n_frames {
        for i in 0..spec.lines_per_frame {
            lines.push(LineTruth {
                frame: k,
                line: i,
                centroid_row: spec.centroid_row(i),
                width_um: spec.width_um(k),
                peak_height_um: spec.peak_height_um,
                col_start: spec.line_margin_px,
                col_end: spec.frame_cols - spec.line_margin_px,
            });
        }
    }
    let timestamps: Vec<i64> = (0..spec.n_frames).map(|k| spec.timestamp(k)).collect();
    let (om_frames, cp_maps) = frames
        .into_iter()
        .zip(&timestamps)
        .map(|((image, map), &timestamp)| (TimedImage { timestamp, image }, TimedHeightMap { timestamp, map }))
        .unzip();
    Ok(SyntheticCorpus {
        om_frames,
        cp_maps,
        truth: GroundTruth {
            lines,
            offsets: (0..spec.n_frames).map(|k| spec.offset(k)).collect(),
            timestamps,
            pitch_um: spec.pitch_um,
        },
    })
}

/// `n` offsets drawn uniformly from `[-max, max]^2`.
pub fn random_offsets(n: usize, max: i64, seed: u64) -> Vec<(i64, i64)> {
    let mut rng = Rng::new(seed);
    let span = (2 * max + 1) as u64;
    (0..n)
        .map(|_| (rng.below(span) as i64 - max, rng.below(span) as i64 - max))
        .collect()
}
