//! File formats: portable graymaps for images, CSV plus a sidecar for height maps.
//!
//! Images are written as 16-bit PGM with values mapped linearly from `[0, 1]`
//! to `[0, 65535]`. The pixel pitch travels in a `# pitch_um <value>` header
//! comment; readers that do not know the comment ignore it. Height maps are a
//! headerless CSV of micrometre values with a `<name>.meta` sidecar of
//! `key = value` lines (`pitch_um`, `timestamp`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::{HeightMap, Image, DEFAULT_PITCH_UM};

const MAXVAL: f64 = 65535.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PgmFormat {
    /// Binary, 16-bit big-endian samples.
    #[default]
    Binary,
    /// Plain text.
    Plain,
}

fn quantize(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * MAXVAL).round() as u16
}

/// Encodes an image. Values outside `[0, 1]` are clamped.
pub fn encode_pgm(img: &Image, format: PgmFormat) -> Vec<u8> {
    let magic = match format {
        PgmFormat::Binary => "P5",
        PgmFormat::Plain => "P2",
    };
    let mut out = format!(
        "{magic}\n# pitch_um {}\n{} {}\n65535\n",
        img.pitch_um(),
        img.width(),
        img.height()
    )
    .into_bytes();
    match format {
        PgmFormat::Binary => {
            out.reserve(img.len() * 2);
            for &v in img.pixels() {
                out.extend_from_slice(&quantize(v).to_be_bytes());
            }
        }
        PgmFormat::Plain => {
            let mut text = String::new();
            for r in 0..img.height() {
                let row: Vec<String> = img.row(r).iter().map(|&v| quantize(v).to_string()).collect();
                text.push_str(&row.join(" "));
                text.push('\n');
            }
            out.extend_from_slice(text.as_bytes());
        }
    }
    out
}

pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<Image> {
    let bad = |msg: &str| Error::format(path, msg);
    let mut pos = 0;
    let mut pitch = None;
    // Header tokens: magic, width, height, maxval; comments may appear between them.
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos >= bytes.len() {
            return Err(bad("truncated header"));
        }
        if bytes[pos] == b'#' {
            let end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .map_or(bytes.len(), |p| pos + p);
            let comment = String::from_utf8_lossy(&bytes[pos + 1..end]);
            let mut parts = comment.split_whitespace();
            if parts.next() == Some("pitch_um") {
                pitch = parts.next().and_then(|v| v.parse::<f64>().ok());
            }
            pos = end;
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("malformed header number"));
    let (width, height, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval must be in 1..=65535"));
    }
    let scale = maxval as f64;
    let n = width * height;
    let pixels: Vec<f64> = match tokens[0].as_str() {
        "P5" => {
            // Exactly one whitespace byte separates the header from the raster.
            pos += 1;
            let raster = bytes.get(pos..).ok_or_else(|| bad("missing raster"))?;
            if maxval < 256 {
                if raster.len() < n {
                    return Err(bad("truncated raster"));
                }
                raster[..n].iter().map(|&b| b as f64 / scale).collect()
            } else {
                if raster.len() < 2 * n {
                    return Err(bad("truncated raster"));
                }
                raster[..2 * n]
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale)
                    .collect()
            }
        }
        "P2" => {
            let text = std::str::from_utf8(&bytes[pos..]).map_err(|_| bad("non-UTF-8 raster"))?;
            let values: Vec<f64> = text
                .lines()
                .map(|l| l.split('#').next().unwrap_or(""))
                .flat_map(str::split_whitespace)
                .map(|t| t.parse::<u32>().map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("malformed sample"))?;
            if values.len() != n {
                return Err(bad("sample count does not match dimensions"));
            }
            values
        }
        other => return Err(bad(&format!("unsupported magic {other}"))),
    };
    if pixels.iter().any(|&v| v > 1.0) {
        return Err(bad("sample exceeds maxval"));
    }
    Image::new(height, width, pixels, pitch.unwrap_or(DEFAULT_PITCH_UM))
        .map_err(|e| bad(&e.to_string()))
}

pub fn write_pgm(path: &Path, img: &Image, format: PgmFormat) -> Result<()> {
    fs::write(path, encode_pgm(img, format)).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, path)
}

/// Flat `key = value` text, one entry per line, `#` comments.
pub fn parse_meta(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(path, format!("line {}: expected key = value", i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn format_meta(entries: &BTreeMap<String, String>) -> String {
    entries.iter().fold(String::new(), |mut s, (k, v)| {
        let _ = writeln!(s, "{k} = {v}");
        s
    })
}

/// Sidecar path for a height map: `frame.csv` -> `frame.meta`.
pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta")
}

/// Headerless CSV of heights, one image row per line.
pub fn encode_heightmap(hm: &HeightMap) -> String {
    let mut csv = String::with_capacity(hm.z_um().len() * 10);
    for r in 0..hm.height() {
        for c in 0..hm.width() {
            if c > 0 {
                csv.push(',');
            }
            let _ = write!(csv, "{}", hm.get(r, c));
        }
        csv.push('\n');
    }
    csv
}

pub fn encode_heightmap_meta(hm: &HeightMap, timestamp: i64) -> String {
    let meta: BTreeMap<String, String> = [
        ("pitch_um".to_string(), hm.pitch_um().to_string()),
        ("timestamp".to_string(), timestamp.to_string()),
    ]
    .into();
    format_meta(&meta)
}

pub fn write_heightmap(path: &Path, hm: &HeightMap, timestamp: i64) -> Result<()> {
    fs::write(path, encode_heightmap(hm)).map_err(|e| Error::io(path, e))?;
    let mpath = meta_path(path);
    fs::write(&mpath, encode_heightmap_meta(hm, timestamp)).map_err(|e| Error::io(&mpath, e))
}

/// Reads a height map and its sidecar, returning the map and its timestamp.
pub fn read_heightmap(path: &Path) -> Result<(HeightMap, i64)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut z = Vec::new();
    let mut width = None;
    let mut height = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(path, format!("line {}: malformed height", i + 1)))?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::format(path, format!("line {}: ragged row", i + 1)))
            }
            _ => {}
        }
        z.extend(row);
        height += 1;
    }
    let mpath = meta_path(path);
    let meta_text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let meta = parse_meta(&meta_text, &mpath)?;
    let field = |key: &str| {
        meta.get(key)
            .ok_or_else(|| Error::format(&mpath, format!("missing {key}")))
    };
    let pitch: f64 = field("pitch_um")?
        .parse()
        .map_err(|_| Error::format(&mpath, "malformed pitch_um"))?;
    let timestamp: i64 = field("timestamp")?
        .parse()
        .map_err(|_| Error::format(&mpath, "malformed timestamp"))?;
    let hm = HeightMap::new(height, width.unwrap_or(0), z, pitch).map_err(|e| Error::format(path, e.to_string()))?;
    Ok((hm, timestamp))
}
