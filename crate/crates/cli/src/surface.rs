//! Time-indexed surface built from fused images: `z(x, t)`.

use std::ops::Range;

use ajfuse_core::Image;
use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSample {
    pub t: usize,
    pub x_um: f64,
    pub z: f64,
}

/// Frames in time order; each contributes the mean over `rows` of every column.
#[derive(Debug, Clone)]
pub struct SurfaceStack {
    frames: Vec<(usize, Image)>,
    rows: Range<usize>,
    z_range: (f64, f64),
}

impl SurfaceStack {
    /// `z_range` maps normalized intensity `v` to `z_min + v (z_max - z_min)`.
    pub fn new(frames: Vec<(usize, Image)>, rows: Range<usize>, z_range: (f64, f64)) -> Result<Self> {
        let Some((_, first)) = frames.first() else {
            bail!("no frames to stack");
        };
        let width = first.width();
        for w in frames.windows(2) {
            if w[1].0 <= w[0].0 {
                bail!("time indices must increase strictly, got {} after {}", w[1].0, w[0].0);
            }
        }
        for (t, img) in &frames {
            if img.width() != width {
                bail!("frame {t} is {} wide, expected {width}", img.width());
            }
            if rows.is_empty() || rows.end > img.height() {
                bail!("rows {rows:?} outside frame {t} of height {}", img.height());
            }
        }
        if !(z_range.0.is_finite() && z_range.1.is_finite()) {
            bail!("height range must be finite");
        }
        Ok(SurfaceStack { frames, rows, z_range })
    }

    /// Band of `band` rows centred in frames of `height` rows.
    pub fn centre_rows(height: usize, band: usize) -> Range<usize> {
        let band = band.clamp(1, height.max(1));
        let start = (height - band) / 2;
        start..start + band
    }

    pub fn width(&self) -> usize {
        self.frames[0].1.width()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Height profile of one frame across its columns.
    pub fn profile(&self, frame: usize) -> Vec<f64> {
        let img = &self.frames[frame].1;
        let (z_min, z_max) = self.z_range;
        let n = self.rows.len() as f64;
        (0..img.width())
            .map(|c| {
                let v = self.rows.clone().map(|r| img.get(r, c)).sum::<f64>() / n;
                z_min + v * (z_max - z_min)
            })
            .collect()
    }

    pub fn samples(&self) -> Vec<SurfaceSample> {
        let mut out = Vec::with_capacity(self.frames.len() * self.width());
        for (k, (t, img)) in self.frames.iter().enumerate() {
            let pitch = img.pitch_um();
            out.extend(self.profile(k).into_iter().enumerate().map(|(c, z)| SurfaceSample {
                t: *t,
                x_um: c as f64 * pitch,
                z,
            }));
        }
        out
    }
}
