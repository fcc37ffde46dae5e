//! Windowed SSIM and the two-source fusion score.
//!
//! Per window, with population statistics:
//!
//! ```text
//! l = (2 mu_a mu_b + c1) / (mu_a^2 + mu_b^2 + c1)
//! c = (2 sd_a sd_b + c2) / (sd_a^2 + sd_b^2 + c2)
//! s = (cov_ab + c3) / (sd_a sd_b + c3)
//! ```
//!
//! Windows are square, fully inside the image, and placed every `stride`
//! pixels. The per-window products are averaged (or summed, on request).

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregate {
    #[default]
    Mean,
    Sum,
}

impl std::str::FromStr for Aggregate {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mean" => Ok(Aggregate::Mean),
            "sum" => Ok(Aggregate::Sum),
            other => Err(format!("unknown aggregate {other:?}, expected mean or sum")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub stride: usize,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub aggregate: Aggregate,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: 11,
            stride: 1,
            c1: 1e-4,
            c2: 9e-4,
            c3: 4.5e-4,
            aggregate: Aggregate::Mean,
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::InvalidSsimParams(format!(
                "window must be odd and at least 3, got {}",
                self.window
            )));
        }
        if self.stride == 0 {
            return Err(Error::InvalidSsimParams("stride must be positive".into()));
        }
        for (name, c) in [("c1", self.c1), ("c2", self.c2), ("c3", self.c3)] {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidSsimParams(format!("{name} = {c} must be positive")));
            }
        }
        Ok(())
    }

    fn check_fits(&self, img: &Image) -> Result<()> {
        if self.window > img.height() || self.window > img.width() {
            return Err(Error::WindowTooLarge {
                window: self.window,
                height: img.height(),
                width: img.width(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsimReport {
    pub ssim_om_f: f64,
    pub ssim_cp_f: f64,
    pub total: f64,
    /// Per-window maps for (ROI_OM, fused) and (ROI_CP, fused), when requested.
    pub maps: Option<(Image, Image)>,
}

/// Summed-area table with one row and column of zero padding.
struct Integral {
    width: usize,
    data: Vec<f64>,
}

impl Integral {
    fn new(height: usize, width: usize, value: impl Fn(usize) -> f64) -> Self {
        let w1 = width + 1;
        let mut data = vec![0.0; (height + 1) * w1];
        for r in 0..height {
            let mut row_sum = 0.0;
            for c in 0..width {
                row_sum += value(r * width + c);
                data[(r + 1) * w1 + c + 1] = data[r * w1 + c + 1] + row_sum;
            }
        }
        Integral { width: w1, data }
    }

    #[inline]
    fn window(&self, r: usize, c: usize, size: usize) -> f64 {
        let w = self.width;
        let (r1, c1) = (r + size, c + size);
        self.data[r1 * w + c1] - self.data[r * w + c1] - self.data[r1 * w + c] + self.data[r * w + c]
    }
}

/// SSIM of one window from its raw statistics.
#[inline]
pub fn window_ssim(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64, p: &SsimParams) -> f64 {
    let (sd_a, sd_b) = (var_a.max(0.0).sqrt(), var_b.max(0.0).sqrt());
    let luminance = (2.0 * mu_a * mu_b + p.c1) / (mu_a * mu_a + mu_b * mu_b + p.c1);
    let contrast = (2.0 * sd_a * sd_b + p.c2) / (var_a.max(0.0) + var_b.max(0.0) + p.c2);
    let structure = (cov + p.c3) / (sd_a * sd_b + p.c3);
    luminance * contrast * structure
}

/// Per-window SSIM values, one pixel per window position.
pub fn ssim_map(a: &Image, b: &Image, p: &SsimParams) -> Result<Image> {
    a.same_dims(b)?;
    p.validate()?;
    p.check_fits(a)?;
    let (h, w) = a.dims();
    let (pa, pb) = (a.pixels(), b.pixels());
    let sa = Integral::new(h, w, |i| pa[i]);
    let sb = Integral::new(h, w, |i| pb[i]);
    let saa = Integral::new(h, w, |i| pa[i] * pa[i]);
    let sbb = Integral::new(h, w, |i| pb[i] * pb[i]);
    let sab = Integral::new(h, w, |i| pa[i] * pb[i]);
    let n = (p.window * p.window) as f64;
    let rows: Vec<usize> = (0..=h - p.window).step_by(p.stride).collect();
    let cols: Vec<usize> = (0..=w - p.window).step_by(p.stride).collect();
    let mut values = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &c in &cols {
            let mu_a = sa.window(r, c, p.window) / n;
            let mu_b = sb.window(r, c, p.window) / n;
            let var_a = saa.window(r, c, p.window) / n - mu_a * mu_a;
            let var_b = sbb.window(r, c, p.window) / n - mu_b * mu_b;
            let cov = sab.window(r, c, p.window) / n - mu_a * mu_b;
            values.push(window_ssim(mu_a, mu_b, var_a, var_b, cov, p));
        }
    }
    Image::grid(rows.len(), cols.len(), values, a.pitch_um())
}

fn aggregate(map: &Image, p: &SsimParams) -> f64 {
    let sum: f64 = map.pixels().iter().sum();
    match p.aggregate {
        Aggregate::Mean => sum / map.len() as f64,
        Aggregate::Sum => sum,
    }
}

pub fn ssim_pair(a: &Image, b: &Image, p: &SsimParams) -> Result<f64> {
    Ok(aggregate(&ssim_map(a, b, p)?, p))
}

/// `SSIM(ROI_OM, f) + SSIM(ROI_CP, f)`.
pub fn fusion_ssim(roi_om: &Image, roi_cp: &Image, fused: &Image, p: &SsimParams) -> Result<SsimReport> {
    let mut report = fusion_ssim_with_maps(roi_om, roi_cp, fused, p)?;
    report.maps = None;
    Ok(report)
}

pub fn fusion_ssim_with_maps(roi_om: &Image, roi_cp: &Image, fused: &Image, p: &SsimParams) -> Result<SsimReport> {
    roi_om.same_dims(fused)?;
    roi_cp.same_dims(fused)?;
    let map_om = ssim_map(roi_om, fused, p)?;
    let map_cp = ssim_map(roi_cp, fused, p)?;
    let ssim_om_f = aggregate(&map_om, p);
    let ssim_cp_f = aggregate(&map_cp, p);
    Ok(SsimReport {
        ssim_om_f,
        ssim_cp_f,
        total: ssim_om_f + ssim_cp_f,
        maps: Some((map_om, map_cp)),
    })
}

/// Arithmetic mean of per-pair scores.
pub fn average_ssim(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyList);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}
