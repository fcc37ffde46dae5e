//! Grid types shared by both modalities.
//!
//! [`Image`] holds normalized intensities for stored data (optical frames,
//! converted profilometry, fused output) and, with `clamped == false`, the
//! unbounded intermediate states of the diffusion loop. [`HeightMap`] holds raw
//! profilometry heights in micrometres.

use std::ops::Range;

use crate::error::{Error, Result};

/// Default pixel pitch: 50 µm spans 267 pixels.
pub const DEFAULT_PITCH_UM: f64 = 50.0 / 267.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
    pitch_um: f64,
    clamped: bool,
}

impl Image {
    /// Stored modality data. Every pixel must lie in `[0, 1]`.
    pub fn new(height: usize, width: usize, pixels: Vec<f64>, pitch_um: f64) -> Result<Self> {
        let img = Self::grid(height, width, pixels, pitch_um)?;
        if let Some(v) = img.pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Image {
            clamped: true,
            ..img
        })
    }

    /// Unbounded real grid, used for intermediate diffusion states.
    pub fn grid(height: usize, width: usize, pixels: Vec<f64>, pitch_um: f64) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {height}x{width}"
            )));
        }
        if pixels.len() != height * width {
            return Err(Error::InvalidImage(format!(
                "{} pixels for a {height}x{width} grid",
                pixels.len()
            )));
        }
        if !(pitch_um.is_finite() && pitch_um > 0.0) {
            return Err(Error::InvalidImage(format!("pitch {pitch_um} must be positive")));
        }
        Ok(Image {
            height,
            width,
            pixels,
            pitch_um,
            clamped: false,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64, pitch_um: f64) -> Result<Self> {
        let mut img = Self::grid(height, width, vec![value; height * width], pitch_um)?;
        img.clamped = (0.0..=1.0).contains(&value);
        Ok(img)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        pitch_um: f64,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self::grid(height, width, pixels, pitch_um)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pitch_um(&self) -> f64 {
        self.pitch_um
    }

    /// True when the grid is known to hold values in `[0, 1]`.
    pub fn is_clamped(&self) -> bool {
        self.clamped
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    /// Mutable access drops the `[0, 1]` guarantee.
    pub fn pixels_mut(&mut self) -> &mut [f64] {
        self.clamped = false;
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.pixels[row * self.width..(row + 1) * self.width]
    }

    pub fn same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::shape(self.dims(), other.dims()));
        }
        Ok(())
    }

    /// Elementwise map into an unbounded grid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            pixels: self.pixels.iter().map(|&v| f(v)).collect(),
            clamped: false,
            ..*self
        }
    }

    /// Elementwise combination of two equally shaped grids.
    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        self.same_dims(other)?;
        Ok(Image {
            pixels: self
                .pixels
                .iter()
                .zip(&other.pixels)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            clamped: false,
            ..*self
        })
    }

    /// Clamps every pixel into `[0, 1]`.
    pub fn clamp01(&self) -> Image {
        Image {
            pixels: self.pixels.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            clamped: true,
            ..*self
        }
    }

    /// Re-checks the `[0, 1]` range and marks the grid as stored data.
    pub fn into_clamped(self) -> Result<Image> {
        Image::new(self.height, self.width, self.pixels, self.pitch_um)
    }

    pub fn crop(&self, rows: Range<usize>, cols: Range<usize>) -> Result<Image> {
        if rows.start >= rows.end
            || cols.start >= cols.end
            || rows.end > self.height
            || cols.end > self.width
        {
            return Err(Error::RoiOutOfBounds(format!(
                "rows {rows:?} cols {cols:?} in a {}x{} image",
                self.height, self.width
            )));
        }
        let mut pixels = Vec::with_capacity(rows.len() * cols.len());
        for r in rows.clone() {
            pixels.extend_from_slice(&self.row(r)[cols.clone()]);
        }
        Ok(Image {
            height: rows.len(),
            width: cols.len(),
            pixels,
            ..*self
        })
    }

    pub fn transpose(&self) -> Image {
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for c in 0..self.width {
            for r in 0..self.height {
                pixels.push(self.get(r, c));
            }
        }
        Image {
            height: self.width,
            width: self.height,
            pixels,
            ..*self
        }
    }

    /// Circular shift: the pixel at `(r, c)` moves to `(r + dy, c + dx)` modulo the size.
    pub fn shifted_circular(&self, dy: i64, dx: i64) -> Image {
        let (h, w) = (self.height as i64, self.width as i64);
        let mut pixels = vec![0.0; self.pixels.len()];
        for r in 0..h {
            for c in 0..w {
                let rr = (r + dy).rem_euclid(h) as usize;
                let cc = (c + dx).rem_euclid(w) as usize;
                pixels[rr * self.width + cc] = self.get(r as usize, c as usize);
            }
        }
        Image { pixels, ..*self }
    }

    pub fn max_abs_diff(&self, other: &Image) -> Result<f64> {
        self.same_dims(other)?;
        Ok(self
            .pixels
            .iter()
            .zip(&other.pixels)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs())))
    }

    pub fn max_abs(&self) -> f64 {
        self.pixels.iter().fold(0.0, |m, v| f64::max(m, v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    pub fn all_finite(&self) -> bool {
        self.pixels.iter().all(|v| v.is_finite())
    }
}

/// Raw profilometry heights in micrometres.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    height: usize,
    width: usize,
    z_um: Vec<f64>,
    pitch_um: f64,
}

impl HeightMap {
    pub fn new(height: usize, width: usize, z_um: Vec<f64>, pitch_um: f64) -> Result<Self> {
        if height == 0 || width == 0 || z_um.len() != height * width {
            return Err(Error::InvalidImage(format!(
                "{} heights for a {height}x{width} map",
                z_um.len()
            )));
        }
        if let Some(z) = z_um.iter().find(|z| !z.is_finite()) {
            return Err(Error::InvalidImage(format!("non-finite height {z}")));
        }
        if !(pitch_um.is_finite() && pitch_um > 0.0) {
            return Err(Error::InvalidImage(format!("pitch {pitch_um} must be positive")));
        }
        Ok(HeightMap {
            height,
            width,
            z_um,
            pitch_um,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pitch_um(&self) -> f64 {
        self.pitch_um
    }

    pub fn z_um(&self) -> &[f64] {
        &self.z_um
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.z_um[row * self.width + col]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.z_um
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &z| {
                (lo.min(z), hi.max(z))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stored_images_reject_out_of_range_pixels() {
        assert!(Image::new(1, 2, vec![0.0, 1.5], 1.0).is_err());
        assert!(Image::new(1, 2, vec![0.0, 1.0], 1.0).unwrap().is_clamped());
        assert!(!Image::grid(1, 2, vec![0.0, 1.5], 1.0).unwrap().is_clamped());
    }

    #[test]
    fn dimensions_must_match_pixel_count() {
        assert!(Image::grid(2, 2, vec![0.0; 3], 1.0).is_err());
        assert!(Image::grid(0, 2, vec![], 1.0).is_err());
        assert!(HeightMap::new(1, 1, vec![f64::NAN], 1.0).is_err());
    }

    #[test]
    fn crop_and_transpose() {
        let img = Image::from_fn(3, 4, 1.0, |r, c| (r * 4 + c) as f64).unwrap();
        let crop = img.crop(1..3, 2..4).unwrap();
        assert_eq!(crop.pixels(), &[6.0, 7.0, 10.0, 11.0]);
        assert!(img.crop(2..4, 0..1).is_err());
        let t = img.transpose();
        assert_eq!(t.dims(), (4, 3));
        assert_eq!(t.get(3, 1), img.get(1, 3));
    }

    #[test]
    fn circular_shift_moves_content() {
        let img = Image::from_fn(4, 5, 1.0, |r, c| (r * 5 + c) as f64).unwrap();
        let s = img.shifted_circular(1, -2);
        assert_eq!(s.get(1, 3), img.get(0, 0));
        assert_eq!(s.get(0, 0), img.get(3, 2));
    }
}
