//! Corpus manifests and on-disk corpora.
//!
//! A manifest is a CSV with header `path,timestamp,modality`, where `modality`
//! is `om` (a PGM frame) or `cp` (a height-map CSV with its `.meta` sidecar).
//! Paths are relative to the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{encode_heightmap, encode_heightmap_meta, encode_pgm, meta_path, read_heightmap, read_pgm, PgmFormat};
use crate::registration::{TimedHeightMap, TimedImage};
use crate::synthgen::{GroundTruth, SyntheticCorpus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Om,
    Cp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub timestamp: i64,
    pub modality: Modality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub frame: usize,
    pub line: usize,
    pub centroid_row: usize,
    pub width_um: f64,
    pub peak_height_um: f64,
    pub col_start: usize,
    pub col_end: usize,
    pub offset_dy: i64,
    pub offset_dx: i64,
    pub timestamp: i64,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e.to_string())
}

/// Serializes rows as CSV with a header line.
pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(Path::new("<memory>"), e))?;
    }
    w.into_inner()
        .map_err(|e| Error::format(Path::new("<memory>"), e.to_string()))
}

pub fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    fs::write(path, csv_bytes(rows)?).map_err(|e| Error::io(path, e))
}

pub fn read_csv_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    read_csv_rows(path)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    write_csv_rows(path, entries)
}

/// Loads every file named by a manifest.
pub fn load_corpus(manifest: &Path) -> Result<(Vec<TimedImage>, Vec<TimedHeightMap>)> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut om = Vec::new();
    let mut cp = Vec::new();
    for entry in read_manifest(manifest)? {
        let path = base.join(&entry.path);
        match entry.modality {
            Modality::Om => om.push(TimedImage {
                timestamp: entry.timestamp,
                image: read_pgm(&path)?,
            }),
            Modality::Cp => {
                let (map, ts) = read_heightmap(&path)?;
                if ts != entry.timestamp {
                    return Err(Error::TimestampMismatch(format!(
                        "{}: sidecar says {ts}, manifest says {}",
                        path.display(),
                        entry.timestamp
                    )));
                }
                cp.push(TimedHeightMap { timestamp: ts, map });
            }
        }
    }
    Ok((om, cp))
}

pub fn truth_rows(truth: &GroundTruth) -> Vec<TruthRow> {
    truth
        .lines
        .iter()
        .map(|l| TruthRow {
            frame: l.frame,
            line: l.line,
            centroid_row: l.centroid_row,
            width_um: l.width_um,
            peak_height_um: l.peak_height_um,
            col_start: l.col_start,
            col_end: l.col_end,
            offset_dy: truth.offsets[l.frame].0,
            offset_dx: truth.offsets[l.frame].1,
            timestamp: truth.timestamps[l.frame],
        })
        .collect()
}

/// Every file of an on-disk corpus as `(relative path, contents)`, in write order:
/// `om/frame_NNN.pgm`, `cp/frame_NNN.csv` and `.meta` per frame, then
/// `manifest.csv` and `truth.csv`.
pub fn corpus_files(corpus: &SyntheticCorpus) -> Result<Vec<(PathBuf, Vec<u8>)>> {
    let mut files = Vec::new();
    let mut entries = Vec::new();
    for (k, (frame, map)) in corpus.om_frames.iter().zip(&corpus.cp_maps).enumerate() {
        let om_rel = format!("om/frame_{k:03}.pgm");
        let cp_rel = format!("cp/frame_{k:03}.csv");
        files.push((PathBuf::from(&om_rel), encode_pgm(&frame.image, PgmFormat::Binary)));
        files.push((PathBuf::from(&cp_rel), encode_heightmap(&map.map).into_bytes()));
        files.push((
            meta_path(Path::new(&cp_rel)),
            encode_heightmap_meta(&map.map, map.timestamp).into_bytes(),
        ));
        entries.push(ManifestEntry {
            path: om_rel,
            timestamp: frame.timestamp,
            modality: Modality::Om,
        });
        entries.push(ManifestEntry {
            path: cp_rel,
            timestamp: map.timestamp,
            modality: Modality::Cp,
        });
    }
    files.push((PathBuf::from("manifest.csv"), csv_bytes(&entries)?));
    files.push((PathBuf::from("truth.csv"), csv_bytes(&truth_rows(&corpus.truth))?));
    Ok(files)
}

/// Writes [`corpus_files`] under `dir` and returns their relative paths.
pub fn write_corpus(dir: &Path, corpus: &SyntheticCorpus) -> Result<Vec<PathBuf>> {
    let files = corpus_files(corpus)?;
    for (rel, bytes) in &files {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(files.into_iter().map(|(rel, _)| rel).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate_corpus, CorpusSpec};

    #[test]
    fn written_corpus_loads_back() {
        let spec = CorpusSpec {
            n_frames: 2,
            frame_rows: 200,
            frame_cols: 80,
            line_margin_px: 12,
            base_width_um: 2.0,
            ..CorpusSpec::default()
        };
        let corpus = generate_corpus(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_corpus(dir.path(), &corpus).unwrap();
        assert!(files.iter().all(|f| dir.path().join(f).is_file()));
        let (om, cp) = load_corpus(&dir.path().join("manifest.csv")).unwrap();
        assert_eq!(om.len(), 2);
        assert_eq!(cp[1].map, corpus.cp_maps[1].map);
        assert!(om[0].image.max_abs_diff(&corpus.om_frames[0].image).unwrap() < 1e-5);
        let truth: Vec<TruthRow> = read_csv_rows(&dir.path().join("truth.csv")).unwrap();
        assert_eq!(truth, truth_rows(&corpus.truth));
    }
}
