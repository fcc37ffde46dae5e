//! Registration of optical frames against profilometry height maps.
//!
//! The pipeline splits each optical frame into per-line strips, converts every
//! height map to an image on one corpus-wide height scale, finds the integer
//! translation between the modalities by zero-normalized cross-correlation,
//! and crops matching regions of interest around each printed line.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{HeightMap, Image};

/// Minimum number of overlapping pixels at every candidate offset.
pub const MIN_OVERLAP: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentResult {
    /// Row offset of the moving image's content relative to the reference.
    pub dy: i64,
    pub dx: i64,
    /// Zero-normalized cross-correlation at the chosen offset.
    pub score: f64,
    /// Set when `score` falls below the configured warn threshold.
    pub warn: bool,
}

impl AlignmentResult {
    pub const IDENTITY: AlignmentResult = AlignmentResult {
        dy: 0,
        dx: 0,
        score: 1.0,
        warn: false,
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignParams {
    pub max_shift: usize,
    pub warn_threshold: f64,
}

impl Default for AlignParams {
    fn default() -> Self {
        AlignParams {
            max_shift: 20,
            warn_threshold: 0.5,
        }
    }
}

/// Which modality stays fixed during alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reference {
    #[default]
    Optical,
    Profilometry,
}

impl std::str::FromStr for Reference {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "om" | "optical" => Ok(Reference::Optical),
            "cp" | "profilometry" => Ok(Reference::Profilometry),
            other => Err(format!("unknown reference {other:?}, expected om or cp")),
        }
    }
}

/// One printed line cut out of an optical frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LineStrip {
    pub image: Image,
    /// First frame row covered by the strip.
    pub row_offset: usize,
    /// Intensity centroid of the line, in strip rows.
    pub centroid_row: usize,
}

impl LineStrip {
    /// The whole image as a single strip.
    pub fn whole(image: Image) -> Self {
        let centroid_row = image.height() / 2;
        LineStrip {
            image,
            row_offset: 0,
            centroid_row,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiPair {
    pub roi_om: Image,
    pub roi_cp: Image,
    pub time_index: usize,
    pub line_index: usize,
    pub timestamp: i64,
    pub alignment: AlignmentResult,
}

fn row_profile(img: &Image) -> Vec<f64> {
    (0..img.height())
        .map(|r| img.row(r).iter().sum::<f64>() / img.width() as f64)
        .collect()
}

fn smooth(profile: &[f64], radius: usize) -> Vec<f64> {
    let n = profile.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius + 1).min(n);
            profile[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Local maxima of `p` with their topographic prominence.
fn peaks_with_prominence(p: &[f64]) -> Vec<(usize, f64)> {
    let n = p.len();
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < n {
        // Treat plateaus as a single candidate at their centre.
        let mut j = i;
        while j + 1 < n && p[j + 1] == p[i] {
            j += 1;
        }
        let left_lower = i == 0 || p[i - 1] < p[i];
        let right_lower = j + 1 == n || p[j + 1] < p[i];
        if left_lower && right_lower && !(i == 0 && j + 1 == n) {
            let peak = (i + j) / 2;
            let mut left_min = p[i];
            let mut k = i;
            while k > 0 && p[k - 1] <= p[i] {
                k -= 1;
                left_min = left_min.min(p[k]);
            }
            let mut right_min = p[j];
            let mut k = j;
            while k + 1 < n && p[k + 1] <= p[i] {
                k += 1;
                right_min = right_min.min(p[k]);
            }
            // Edge peaks get zero prominence from their open side.
            peaks.push((peak, p[i] - left_min.max(right_min)));
        }
        i = j + 1;
    }
    peaks
}

/// Splits an optical frame into `n_lines` horizontal strips, top to bottom.
///
/// Lines are found as peaks of the smoothed row-mean profile; strips are cut at
/// the profile minimum between neighbouring peaks, so each strip keeps the
/// background around its line.
pub fn segment_om_lines(om: &Image, n_lines: usize) -> Result<Vec<LineStrip>> {
    if n_lines == 0 || om.height() < 3 * n_lines {
        return Err(Error::InvalidImage(format!(
            "{} rows cannot hold {n_lines} line(s)",
            om.height()
        )));
    }
    let raw = row_profile(om);
    if n_lines == 1 {
        let centroid_row = centroid(&raw).unwrap_or(om.height() / 2);
        return Ok(vec![LineStrip {
            image: om.clone(),
            row_offset: 0,
            centroid_row,
        }]);
    }
    let profile = smooth(&raw, (om.height() / (8 * n_lines)).max(1));
    let (lo, hi) = profile
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = hi - lo;
    let mut peaks: Vec<(usize, f64)> = if range > 1e-9 {
        peaks_with_prominence(&profile)
            .into_iter()
            .filter(|&(_, prom)| prom >= 0.25 * range)
            .collect()
    } else {
        Vec::new()
    };
    if peaks.len() < n_lines {
        return Err(Error::NoLinesFound {
            found: peaks.len(),
            wanted: n_lines,
        });
    }
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    peaks.truncate(n_lines);
    let mut rows: Vec<usize> = peaks.into_iter().map(|(r, _)| r).collect();
    rows.sort_unstable();

    let mut cuts = vec![0];
    for w in rows.windows(2) {
        let valley = (w[0]..=w[1])
            .min_by(|&a, &b| profile[a].total_cmp(&profile[b]).then(a.cmp(&b)))
            .expect("nonempty range");
        cuts.push(valley);
    }
    cuts.push(om.height());

    cuts.windows(2)
        .zip(&rows)
        .map(|(w, &peak)| {
            let (start, end) = (w[0], w[1]);
            let image = om.crop(start..end, 0..om.width())?;
            let centroid_row = centroid(&raw[start..end]).unwrap_or(peak - start);
            Ok(LineStrip {
                image,
                row_offset: start,
                centroid_row,
            })
        })
        .collect()
}

/// Intensity-weighted centroid of the upper half of a profile.
fn centroid(profile: &[f64]) -> Option<usize> {
    let lo = profile.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = profile.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 1e-12 {
        return None;
    }
    let half = lo + 0.5 * (hi - lo);
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &v) in profile.iter().enumerate() {
        if v >= half {
            num += i as f64 * (v - lo);
            den += v - lo;
        }
    }
    Some((num / den).round() as usize)
}

/// Global height extrema across every map of a corpus.
pub fn compute_global_height_range(corpus: &[HeightMap]) -> Result<(f64, f64)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(corpus.iter().map(HeightMap::min_max).fold(
        (f64::INFINITY, f64::NEG_INFINITY),
        |(lo, hi), (a, b)| (lo.min(a), hi.max(b)),
    ))
}

/// Projects heights onto `[0, 1]` with a shared scale; a zero-width range maps to 0.
pub fn heightmap_to_image(hm: &HeightMap, z_min: f64, z_max: f64) -> Result<Image> {
    if !(z_min.is_finite() && z_max.is_finite()) || z_max < z_min {
        return Err(Error::InvalidImage(format!(
            "height range [{z_min}, {z_max}] is not valid"
        )));
    }
    let span = z_max - z_min;
    let pixels = hm
        .z_um()
        .iter()
        .map(|&z| {
            if span > 0.0 {
                ((z - z_min) / span).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    Image::new(hm.height(), hm.width(), pixels, hm.pitch_um())
}

fn overlap(len: usize, shift: i64) -> Range<usize> {
    let len = len as i64;
    let start = (-shift).max(0);
    let end = (len - shift).min(len);
    if end <= start {
        0..0
    } else {
        start as usize..end as usize
    }
}

/// ZNCC between `reference(r, c)` and `moving(r + dy, c + dx)` over their overlap.
///
/// Both inputs are expected to be mean-centred. Returns `None` when either side
/// has zero variance on the overlap.
fn zncc_at(reference: &Image, moving: &Image, dy: i64, dx: i64) -> Option<f64> {
    let rows = overlap(reference.height(), dy);
    let cols = overlap(reference.width(), dx);
    let n = (rows.len() * cols.len()) as f64;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in rows {
        let a = &reference.row(r)[cols.clone()];
        let mr = (r as i64 + dy) as usize;
        let mc = (cols.start as i64 + dx) as usize;
        let b = &moving.row(mr)[mc..mc + cols.len()];
        for (&x, &y) in a.iter().zip(b) {
            sa += x;
            sb += y;
            saa += x * x;
            sbb += y * y;
            sab += x * y;
        }
    }
    let var_a = saa - sa * sa / n;
    let var_b = sbb - sb * sb / n;
    let scale = (saa + sbb).max(f64::MIN_POSITIVE);
    if var_a <= 1e-12 * scale || var_b <= 1e-12 * scale {
        return None;
    }
    let cov = sab - sa * sb / n;
    Some((cov / (var_a * var_b).sqrt()).clamp(-1.0, 1.0))
}

/// Integer translation maximizing zero-normalized cross-correlation.
///
/// Searches `[-max_shift, max_shift]^2`. Scores within `1e-12` of the best are
/// ties, resolved by the smaller `|dy| + |dx|`, then by `(dy, dx)`.
pub fn align_translation(reference: &Image, moving: &Image, params: &AlignParams) -> Result<AlignmentResult> {
    reference.same_dims(moving)?;
    let s = params.max_shift as i64;
    let (h, w) = reference.dims();
    let min_rows = h.saturating_sub(params.max_shift);
    let min_cols = w.saturating_sub(params.max_shift);
    if min_rows * min_cols < MIN_OVERLAP {
        return Err(Error::DegenerateInput(format!(
            "overlap of {min_rows}x{min_cols} pixels at the largest shift is below {MIN_OVERLAP}"
        )));
    }
    let centre = |img: &Image| {
        let m = img.mean();
        img.map(|v| v - m)
    };
    let (a, b) = (centre(reference), centre(moving));
    let mut candidates: Vec<(i64, i64)> = (-s..=s).flat_map(|dy| (-s..=s).map(move |dx| (dy, dx))).collect();
    candidates.sort_by_key(|&(dy, dx)| (dy.abs() + dx.abs(), dy, dx));
    let scores: Vec<Option<f64>> = candidates
        .par_iter()
        .map(|&(dy, dx)| zncc_at(&a, &b, dy, dx))
        .collect();
    let best = scores
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return Err(Error::DegenerateInput(
            "zero variance in every overlap".into(),
        ));
    }
    let (i, score) = scores
        .iter()
        .enumerate()
        .find_map(|(i, s)| s.filter(|&v| v >= best - 1e-12).map(|v| (i, v)))
        .expect("best score exists");
    let (dy, dx) = candidates[i];
    Ok(AlignmentResult {
        dy,
        dx,
        score,
        warn: score < params.warn_threshold,
    })
}

/// Crops both modalities over the same region. `rows` are strip-local; the
/// profilometry crop is displaced by the strip offset plus the alignment.
pub fn extract_roi(
    strip: &LineStrip,
    cp_img: &Image,
    alignment: &AlignmentResult,
    rows: Range<usize>,
    cols: Range<usize>,
) -> Result<RoiPair> {
    let roi_om = strip.image.crop(rows.clone(), cols.clone())?;
    let shift = |r: &Range<usize>, by: i64, limit: usize| -> Result<Range<usize>> {
        let (s, e) = (r.start as i64 + by, r.end as i64 + by);
        if s < 0 || e > limit as i64 {
            return Err(Error::RoiOutOfBounds(format!(
                "profilometry range {s}..{e} outside 0..{limit}"
            )));
        }
        Ok(s as usize..e as usize)
    };
    let cp_rows = shift(&rows, strip.row_offset as i64 + alignment.dy, cp_img.height())?;
    let cp_cols = shift(&cols, alignment.dx, cp_img.width())?;
    let roi_cp = cp_img.crop(cp_rows, cp_cols)?;
    Ok(RoiPair {
        roi_om,
        roi_cp,
        time_index: 0,
        line_index: 0,
        timestamp: 0,
        alignment: *alignment,
    })
}

/// Start of a `len`-long window centred on `centre`, kept inside both modalities.
fn fit_window(centre: usize, len: usize, om_len: usize, cp_len: usize, cp_shift: i64) -> Result<usize> {
    let lo = (-cp_shift).max(0);
    let hi = (om_len as i64 - len as i64).min(cp_len as i64 - len as i64 - cp_shift);
    if len == 0 || lo > hi {
        return Err(Error::RoiOutOfBounds(format!(
            "no room for a {len}-pixel window (om {om_len}, cp {cp_len}, shift {cp_shift})"
        )));
    }
    Ok((centre as i64 - len as i64 / 2).clamp(lo, hi) as usize)
}

/// ROI of `height x width` centred on the line centroid and the frame centre column.
pub fn auto_roi(
    strip: &LineStrip,
    cp_dims: (usize, usize),
    alignment: &AlignmentResult,
    height: usize,
    width: usize,
) -> Result<(Range<usize>, Range<usize>)> {
    let r0 = fit_window(
        strip.centroid_row,
        height,
        strip.image.height(),
        cp_dims.0,
        strip.row_offset as i64 + alignment.dy,
    )?;
    let c0 = fit_window(
        strip.image.width() / 2,
        width,
        strip.image.width(),
        cp_dims.1,
        alignment.dx,
    )?;
    Ok((r0..r0 + height, c0..c0 + width))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationParams {
    pub n_lines: usize,
    pub align: AlignParams,
    pub reference: Reference,
    pub roi_height: usize,
    /// Defaults to the frame width less `2 * max_shift`.
    pub roi_width: Option<usize>,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        RegistrationParams {
            n_lines: 4,
            align: AlignParams::default(),
            reference: Reference::Optical,
            roi_height: 64,
            roi_width: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TimedImage {
    pub timestamp: i64,
    pub image: Image,
}

#[derive(Debug, Clone)]
pub struct TimedHeightMap {
    pub timestamp: i64,
    pub map: HeightMap,
}

/// Registered pairs plus the shared height scale used for the conversion.
#[derive(Debug, Clone)]
pub struct RegisteredCorpus {
    pub pairs: Vec<RoiPair>,
    pub z_min: f64,
    pub z_max: f64,
}

/// Aligns one frame: the returned offset always places profilometry content
/// relative to the optical frame.
pub fn align_frame(om: &Image, cp: &Image, params: &RegistrationParams) -> Result<AlignmentResult> {
    match params.reference {
        Reference::Optical => align_translation(om, cp, &params.align),
        Reference::Profilometry => {
            let a = align_translation(cp, om, &params.align)?;
            Ok(AlignmentResult {
                dy: -a.dy,
                dx: -a.dx,
                ..a
            })
        }
    }
}

/// Full registration: time matching, height scaling, alignment, segmentation and ROI extraction.
///
/// Output is sorted by `(time_index, line_index)` and does not depend on input order.
pub fn register_corpus(
    om_frames: &[TimedImage],
    cp_maps: &[TimedHeightMap],
    params: &RegistrationParams,
) -> Result<RegisteredCorpus> {
    if om_frames.is_empty() && cp_maps.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut om: Vec<&TimedImage> = om_frames.iter().collect();
    let mut cp: Vec<&TimedHeightMap> = cp_maps.iter().collect();
    om.sort_by_key(|f| f.timestamp);
    cp.sort_by_key(|m| m.timestamp);
    let om_ts: Vec<i64> = om.iter().map(|f| f.timestamp).collect();
    let cp_ts: Vec<i64> = cp.iter().map(|m| m.timestamp).collect();
    if om_ts != cp_ts {
        return Err(Error::TimestampMismatch(format!(
            "optical timestamps {om_ts:?} vs profilometry {cp_ts:?}"
        )));
    }
    if om_ts.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::TimestampMismatch("duplicate timestamps".into()));
    }
    let maps: Vec<HeightMap> = cp.iter().map(|m| m.map.clone()).collect();
    let (z_min, z_max) = compute_global_height_range(&maps)?;

    let per_frame: Vec<Vec<RoiPair>> = om
        .par_iter()
        .zip(cp.par_iter())
        .enumerate()
        .map(|(time_index, (frame, map))| {
            let cp_img = heightmap_to_image(&map.map, z_min, z_max)?;
            let alignment = align_frame(&frame.image, &cp_img, params)?;
            if alignment.warn {
                log::warn!(
                    "frame {time_index}: alignment score {:.3} below {}",
                    alignment.score,
                    params.align.warn_threshold
                );
            }
            let roi_width = params
                .roi_width
                .unwrap_or_else(|| frame.image.width().saturating_sub(2 * params.align.max_shift));
            segment_om_lines(&frame.image, params.n_lines)?
                .iter()
                .enumerate()
                .map(|(line_index, strip)| {
                    let (rows, cols) = auto_roi(strip, cp_img.dims(), &alignment, params.roi_height, roi_width)?;
                    let mut pair = extract_roi(strip, &cp_img, &alignment, rows, cols)?;
                    pair.time_index = time_index;
                    pair.line_index = line_index;
                    pair.timestamp = frame.timestamp;
                    Ok(pair)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(RegisteredCorpus {
        pairs: per_frame.into_iter().flatten().collect(),
        z_min,
        z_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn textured(seed: u64, h: usize, w: usize) -> Image {
        let mut rng = Rng::new(seed);
        let noise = Image::from_fn(h, w, 1.0, |_, _| rng.uniform()).unwrap();
        // light 3x3 blur keeps the texture non-white but still sharp
        Image::from_fn(h, w, 1.0, |r, c| {
            let mut s = 0.0;
            for dr in [-1i64, 0, 1] {
                for dc in [-1i64, 0, 1] {
                    let rr = (r as i64 + dr).rem_euclid(h as i64) as usize;
                    let cc = (c as i64 + dc).rem_euclid(w as i64) as usize;
                    s += noise.get(rr, cc) * if dr == 0 && dc == 0 { 4.0 } else { 0.5 };
                }
            }
            s / 8.0
        })
        .unwrap()
    }

    fn bands(rows: usize, cols: usize, centres: &[usize], sigma: f64) -> Image {
        Image::from_fn(rows, cols, 1.0, |r, _| {
            centres
                .iter()
                .map(|&c| (-0.5 * ((r as f64 - c as f64) / sigma).powi(2)).exp())
                .sum::<f64>()
                .min(1.0)
        })
        .unwrap()
    }

    #[test]
    fn four_bands_give_four_strips() {
        let centres = [20, 60, 100, 140];
        let img = bands(160, 30, &centres, 4.0);
        let strips = segment_om_lines(&img, 4).unwrap();
        assert_eq!(strips.len(), 4);
        for (s, &c) in strips.iter().zip(&centres) {
            let rows = s.row_offset..s.row_offset + s.image.height();
            assert!(rows.contains(&c));
            assert_eq!(s.row_offset + s.centroid_row, c);
        }
        let covered: usize = strips.iter().map(|s| s.image.height()).sum();
        assert_eq!(covered, 160);
    }

    #[test]
    fn one_line_is_the_whole_image() {
        let img = bands(40, 10, &[13], 3.0);
        let strips = segment_om_lines(&img, 1).unwrap();
        assert_eq!(strips.len(), 1);
        assert_eq!(strips[0].image, img);
        assert_eq!(strips[0].centroid_row, 13);
    }

    #[test]
    fn flat_image_has_no_lines() {
        let img = Image::filled(64, 16, 0.4, 1.0).unwrap();
        assert!(matches!(
            segment_om_lines(&img, 4),
            Err(Error::NoLinesFound { found: 0, wanted: 4 })
        ));
        assert!(segment_om_lines(&img, 30).is_err());
    }

    #[test]
    fn height_range_and_conversion() {
        let a = HeightMap::new(1, 2, vec![0.0, 5.0], 1.0).unwrap();
        let b = HeightMap::new(1, 2, vec![-1.0, 4.0], 1.0).unwrap();
        assert_eq!(compute_global_height_range(&[a, b]).unwrap(), (-1.0, 5.0));
        let flat = HeightMap::new(2, 2, vec![3.0; 4], 1.0).unwrap();
        assert_eq!(compute_global_height_range(&[flat.clone()]).unwrap(), (3.0, 3.0));
        assert!(matches!(compute_global_height_range(&[]), Err(Error::EmptyCorpus)));
        assert_eq!(heightmap_to_image(&flat, 3.0, 3.0).unwrap().max_abs(), 0.0);
        assert_eq!(heightmap_to_image(&flat, 1.0, 3.0).unwrap().pixels(), &[1.0; 4]);
        assert_eq!(heightmap_to_image(&flat, 2.0, 4.0).unwrap().pixels(), &[0.5; 4]);
        let wide = HeightMap::new(1, 2, vec![-10.0, 10.0], 1.0).unwrap();
        assert_eq!(heightmap_to_image(&wide, 0.0, 1.0).unwrap().pixels(), &[0.0, 1.0]);
    }

    #[test]
    fn self_alignment_is_identity() {
        let a = textured(1, 40, 48);
        let r = align_translation(&a, &a, &AlignParams::default()).unwrap();
        assert_eq!((r.dy, r.dx), (0, 0));
        assert!((r.score - 1.0).abs() < 1e-12);
        assert!(!r.warn);
    }

    #[test]
    fn recovers_circular_shift() {
        let a = textured(2, 48, 48);
        let moved = a.shifted_circular(3, -2);
        let params = AlignParams {
            max_shift: 5,
            ..AlignParams::default()
        };
        let r = align_translation(&a, &moved, &params).unwrap();
        assert_eq!((r.dy, r.dx), (3, -2));
        assert!(r.score > 0.99);
    }

    #[test]
    fn out_of_window_shift_warns() {
        let a = textured(3, 48, 48);
        let moved = a.shifted_circular(7, 0);
        let params = AlignParams {
            max_shift: 5,
            ..AlignParams::default()
        };
        let r = align_translation(&a, &moved, &params).unwrap();
        assert!(r.dy.abs() <= 5 && r.dx.abs() <= 5);
        assert!(r.score < params.warn_threshold);
        assert!(r.warn);
    }

    #[test]
    fn constant_images_are_degenerate() {
        let a = Image::filled(20, 20, 0.5, 1.0).unwrap();
        let b = textured(4, 20, 20);
        let params = AlignParams {
            max_shift: 3,
            ..AlignParams::default()
        };
        assert!(matches!(align_translation(&a, &b, &params), Err(Error::DegenerateInput(_))));
        let tiny = textured(5, 4, 4);
        assert!(matches!(align_translation(&tiny, &tiny, &params), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn roi_index_arithmetic() {
        let om = textured(6, 30, 20);
        let cp = textured(7, 30, 20);
        let full = extract_roi(&LineStrip::whole(om.clone()), &cp, &AlignmentResult::IDENTITY, 0..30, 0..20).unwrap();
        assert_eq!(full.roi_om, om);
        assert_eq!(full.roi_cp, cp);
        let shifted = AlignmentResult {
            dy: 2,
            ..AlignmentResult::IDENTITY
        };
        let pair = extract_roi(&LineStrip::whole(om.clone()), &cp, &shifted, 10..20, 0..20).unwrap();
        assert_eq!(pair.roi_om, om.crop(10..20, 0..20).unwrap());
        assert_eq!(pair.roi_cp, cp.crop(12..22, 0..20).unwrap());
        assert!(matches!(
            extract_roi(&LineStrip::whole(om), &cp, &shifted, 25..30, 0..20),
            Err(Error::RoiOutOfBounds(_))
        ));
    }

    #[test]
    fn timestamps_must_match() {
        let img = bands(64, 20, &[8, 24, 40, 56], 2.0);
        let hm = HeightMap::new(64, 20, img.pixels().to_vec(), 1.0).unwrap();
        let om = vec![TimedImage {
            timestamp: 1,
            image: img,
        }];
        let cp = vec![TimedHeightMap { timestamp: 2, map: hm }];
        assert!(matches!(
            register_corpus(&om, &cp, &RegistrationParams::default()),
            Err(Error::TimestampMismatch(_))
        ));
    }
}
