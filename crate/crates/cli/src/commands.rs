//! One function per subcommand. Each reads its inputs, computes, and hands
//! every output file to a single [`RunWriter`].

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ajfuse_core::corpus::{self, load_corpus, read_manifest, Modality};
use ajfuse_core::io::{decode_pgm, meta_path};
use ajfuse_core::registration::RegisteredCorpus;
use ajfuse_core::rng::derive_seed;
use ajfuse_core::{
    average_ssim, fuse_baseline, fuse_pair, fusion_ssim, gaussian_score, generate_corpus, gmm_empirical_score,
    register_corpus, tune, AlignmentResult, FusionConfig, FusionResult, GaussianScoreParams, GmmScoreParams, Image,
    RoiPair, Rng, ScoreModel, SsimParams,
};
use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::args::Command;
use crate::config::{weights_overlay, RunConfig, ScoreKind};
use crate::manifest::{check_run, slash_path, RunWriter};
use crate::surface::{SurfaceSample, SurfaceStack};

/// A failure tagged with the pipeline stage it happened in.
#[derive(Debug)]
pub struct StageError {
    pub stage: String,
    pub source: anyhow::Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage `{}` failed: {:#}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {}

pub trait StageExt<T> {
    fn stage(self, stage: &str) -> Result<T, StageError>;
}

impl<T, E: Into<anyhow::Error>> StageExt<T> for Result<T, E> {
    fn stage(self, stage: &str) -> Result<T, StageError> {
        self.map_err(|e| StageError {
            stage: stage.to_string(),
            source: e.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub pair_id: usize,
    pub time_index: usize,
    pub line_index: usize,
    pub timestamp: i64,
    pub dy: i64,
    pub dx: i64,
    pub score: f64,
    pub warn: bool,
    pub roi_om: String,
    pub roi_cp: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub z_min: f64,
    pub z_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsimRow {
    pub pair_id: usize,
    pub ssim_om_f: f64,
    pub ssim_cp_f: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedRow {
    pub pair_id: usize,
    pub time_index: usize,
    pub line_index: usize,
    pub timestamp: i64,
    pub fused: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaRow {
    pub eta: f64,
    pub avg_ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiRow {
    pub psi: f64,
    pub avg_ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneSummary {
    pub eta_star: f64,
    pub psi_star: f64,
    pub psi0: f64,
    pub n_pairs: usize,
    pub evaluations: usize,
    pub avg_ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub method: String,
    pub eta: f64,
    pub psi: f64,
    pub n_pairs: usize,
    pub avg_ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub diffusion_minus_baseline: f64,
}

/// Resolved paths for one invocation.
#[derive(Debug, Clone)]
pub struct Paths {
    pub out: PathBuf,
    pub input: Option<PathBuf>,
    pub fused: Option<PathBuf>,
}

impl Paths {
    fn input(&self) -> Result<&Path> {
        self.input.as_deref().ok_or_else(|| anyhow!("--input is required"))
    }
}

/// Runs (or, with `check`, verifies) one subcommand.
pub fn execute(command: &Command, config: &RunConfig, paths: &Paths, check: bool) -> Result<(), StageError> {
    let name = command.name();
    if check {
        let manifest = check_run(&paths.out, name, config).stage("check")?;
        log::info!(
            "{}: {} outputs match config {}",
            paths.out.display(),
            manifest.outputs.len(),
            manifest.config_hash
        );
        return Ok(());
    }
    let mut w = RunWriter::create(&paths.out).stage("write-output")?;
    match command {
        Command::Synth(_) => synth(config, &mut w)?,
        Command::Register(_) => register(config, paths, &mut w)?,
        Command::Fuse(_) => fuse(config, paths, &mut w)?,
        Command::Evaluate(_) => evaluate(config, paths, &mut w)?,
        Command::Tune(_) => tune_cmd(config, paths, &mut w)?,
        Command::Ablate(_) => ablate(config, paths, &mut w)?,
        Command::ExportDt(_) => export_dt(config, paths, &mut w)?,
    }
    w.finish(name, config).stage("write-output")?;
    Ok(())
}

fn synth(config: &RunConfig, w: &mut RunWriter) -> Result<(), StageError> {
    let files = config
        .corpus_spec()
        .and_then(|spec| Ok(corpus::corpus_files(&generate_corpus(&spec)?)?))
        .stage("synth")?;
    for (rel, bytes) in &files {
        w.write(rel, bytes).stage("write-output")?;
    }
    log::info!("wrote {} corpus files", files.len());
    Ok(())
}

/// Reads a file and records its hash under `name`.
fn read_input(w: &mut RunWriter, path: &Path, name: &str) -> Result<Vec<u8>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    w.record_input(name, &bytes);
    Ok(bytes)
}

fn read_image(w: &mut RunWriter, base: &Path, rel: &str) -> Result<Image> {
    let path = base.join(rel);
    let bytes = read_input(w, &path, rel)?;
    Ok(decode_pgm(&bytes, &path)?)
}

fn register(config: &RunConfig, paths: &Paths, w: &mut RunWriter) -> Result<(), StageError> {
    let params = config.registration_params().stage("config")?;
    let (om, cp) = (|| -> Result<_> {
        let input = paths.input()?;
        let manifest = if input.is_dir() { input.join("manifest.csv") } else { input.to_path_buf() };
        let base = manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
        read_input(w, &manifest, "manifest.csv")?;
        for entry in read_manifest(&manifest)? {
            read_input(w, &base.join(&entry.path), &entry.path)?;
            if entry.modality == Modality::Cp {
                let meta = meta_path(Path::new(&entry.path));
                read_input(w, &base.join(&meta), &slash_path(&meta))?;
            }
        }
        Ok(load_corpus(&manifest)?)
    })()
    .stage("load-input")?;
    let reg = register_corpus(&om, &cp, &params).stage("register")?;
    write_registered(&reg, w).stage("write-output")?;
    let warned = reg.pairs.iter().filter(|p| p.alignment.warn).count();
    log::info!("registered {} pairs ({warned} with low alignment scores)", reg.pairs.len());
    Ok(())
}

fn write_registered(reg: &RegisteredCorpus, w: &mut RunWriter) -> Result<()> {
    let mut rows = Vec::with_capacity(reg.pairs.len());
    for (id, pair) in reg.pairs.iter().enumerate() {
        let roi_om = format!("pairs/pair_{id:03}_om.pgm");
        let roi_cp = format!("pairs/pair_{id:03}_cp.pgm");
        w.write_pgm(&roi_om, &pair.roi_om)?;
        w.write_pgm(&roi_cp, &pair.roi_cp)?;
        rows.push(PairRow {
            pair_id: id,
            time_index: pair.time_index,
            line_index: pair.line_index,
            timestamp: pair.timestamp,
            dy: pair.alignment.dy,
            dx: pair.alignment.dx,
            score: pair.alignment.score,
            warn: pair.alignment.warn,
            roi_om,
            roi_cp,
        });
    }
    w.write_csv("pairs.csv", &rows)?;
    w.write_csv(
        "scale.csv",
        &[ScaleRow {
            z_min: reg.z_min,
            z_max: reg.z_max,
        }],
    )
}

fn read_csv_input<T: for<'de> Deserialize<'de>>(w: &mut RunWriter, dir: &Path, name: &str) -> Result<Vec<T>> {
    let path = dir.join(name);
    let bytes = read_input(w, &path, name)?;
    csv::Reader::from_reader(bytes.as_slice())
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

fn read_scale(w: &mut RunWriter, dir: &Path) -> Result<ScaleRow> {
    let rows: Vec<ScaleRow> = read_csv_input(w, dir, "scale.csv")?;
    match rows.as_slice() {
        [row] => Ok(*row),
        _ => bail!("scale.csv must hold exactly one row"),
    }
}

/// Pairs of a registered directory, in `pairs.csv` order.
fn load_pairs(w: &mut RunWriter, dir: &Path) -> Result<(Vec<RoiPair>, ScaleRow)> {
    let rows: Vec<PairRow> = read_csv_input(w, dir, "pairs.csv")?;
    if rows.is_empty() {
        bail!("{} lists no pairs", dir.join("pairs.csv").display());
    }
    let mut pairs = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.pair_id != i {
            bail!("pairs.csv row {i} has pair_id {}", row.pair_id);
        }
        pairs.push(RoiPair {
            roi_om: read_image(w, dir, &row.roi_om)?,
            roi_cp: read_image(w, dir, &row.roi_cp)?,
            time_index: row.time_index,
            line_index: row.line_index,
            timestamp: row.timestamp,
            alignment: AlignmentResult {
                dy: row.dy,
                dx: row.dx,
                score: row.score,
                warn: row.warn,
            },
        });
    }
    Ok((pairs, read_scale(w, dir)?))
}

/// Gaussian score centred on the mean of `(ROI_OM + ROI_CP) / 2`, or a
/// mixture over patches.
pub fn build_score(config: &RunConfig, pairs: &[RoiPair], patches: Option<Vec<Image>>) -> Result<Box<dyn ScoreModel>> {
    let blends = || -> Result<Vec<Image>> {
        pairs
            .iter()
            .map(|p| Ok(p.roi_om.zip_map(&p.roi_cp, |a, b| 0.5 * (a + b))?))
            .collect()
    };
    match config.score.kind {
        ScoreKind::Gaussian => {
            let blends = blends()?;
            let first = blends.first().ok_or_else(|| anyhow!("no pairs to build a score from"))?;
            let mut mu = Image::filled(first.height(), first.width(), 0.0, first.pitch_um())?;
            for b in &blends {
                mu = mu.zip_map(b, |m, x| m + x)?;
            }
            let n = blends.len() as f64;
            let mu = mu.map(|v| v / n);
            Ok(Box::new(gaussian_score(GaussianScoreParams {
                mu,
                sigma0_sq: config.score.sigma0_sq,
            })?))
        }
        ScoreKind::Gmm => {
            let patches = match patches {
                Some(p) => p,
                None => blends()?,
            };
            Ok(Box::new(gmm_empirical_score(GmmScoreParams {
                patches,
                bandwidth_sq: config.score.bandwidth * config.score.bandwidth,
            })?))
        }
    }
}

fn load_score(config: &RunConfig, pairs: &[RoiPair], w: &mut RunWriter) -> Result<Box<dyn ScoreModel>> {
    let patches = match (&config.score.patch_dir, config.score.kind) {
        (Some(dir), ScoreKind::Gmm) => {
            let mut names: Vec<String> = fs::read_dir(dir)
                .with_context(|| format!("listing {}", dir.display()))?
                .filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| n.ends_with(".pgm"))
                .collect();
            names.sort();
            let patches = names
                .iter()
                .map(|n| {
                    let path = dir.join(n);
                    let bytes = read_input(w, &path, &format!("patches/{n}"))?;
                    Ok(decode_pgm(&bytes, &path)?)
                })
                .collect::<Result<Vec<_>>>()?;
            if patches.is_empty() {
                bail!("{} holds no .pgm patches", dir.display());
            }
            Some(patches)
        }
        _ => None,
    };
    build_score(config, pairs, patches)
}

/// Fuses every pair with seed `cfg.seed ^ pair_id`.
pub fn fuse_all(pairs: &[RoiPair], cfg: &FusionConfig, score: &dyn ScoreModel) -> Result<Vec<FusionResult>> {
    pairs
        .par_iter()
        .enumerate()
        .map(|(id, pair)| {
            let mut rng = Rng::new(derive_seed(cfg.seed, id as u64));
            fuse_pair(pair, cfg, score, &mut rng).with_context(|| format!("pair {id}"))
        })
        .collect()
}

fn ssim_rows(pairs: &[RoiPair], fused: &[Image], p: &SsimParams) -> Result<Vec<SsimRow>> {
    pairs
        .iter()
        .zip(fused)
        .enumerate()
        .map(|(id, (pair, f))| {
            let r = fusion_ssim(&pair.roi_om, &pair.roi_cp, f, p).with_context(|| format!("pair {id}"))?;
            Ok(SsimRow {
                pair_id: id,
                ssim_om_f: r.ssim_om_f,
                ssim_cp_f: r.ssim_cp_f,
                total: r.total,
            })
        })
        .collect()
}

fn mean_total(rows: &[SsimRow]) -> Result<f64> {
    Ok(average_ssim(&rows.iter().map(|r| r.total).collect::<Vec<_>>())?)
}

fn fuse(config: &RunConfig, paths: &Paths, w: &mut RunWriter) -> Result<(), StageError> {
    let cfg = config.fusion_config().stage("config")?;
    let ssim = config.ssim_params().stage("config")?;
    let (pairs, scale) = paths.input().and_then(|dir| load_pairs(w, dir)).stage("load-input")?;
    let score = load_score(config, &pairs, w).stage("load-input")?;
    let results = fuse_all(&pairs, &cfg, score.as_ref()).stage("fuse")?;
    let fused: Vec<Image> = results.iter().map(|r| r.fused.clone()).collect();
    let rows = ssim_rows(&pairs, &fused, &ssim).stage("evaluate")?;
    let avg = mean_total(&rows).stage("evaluate")?;
    (|| -> Result<()> {
        let mut index = Vec::with_capacity(pairs.len());
        for (id, (pair, result)) in pairs.iter().zip(&results).enumerate() {
            let file = format!("fused/pair_{id:03}.pgm");
            w.write_pgm(&file, &result.fused)?;
            for (t, f_hat) in &result.trajectory {
                w.write_pgm(format!("trajectory/pair_{id:03}/f0hat_t{t:03}.pgm"), &f_hat.clamp01())?;
            }
            index.push(FusedRow {
                pair_id: id,
                time_index: pair.time_index,
                line_index: pair.line_index,
                timestamp: pair.timestamp,
                fused: file,
            });
        }
        w.write_csv("fused.csv", &index)?;
        w.write_csv("ssim.csv", &rows)?;
        w.write_csv("scale.csv", &[scale])
    })()
    .stage("write-output")?;
    log::info!(
        "fused {} pairs at eta = {}, psi = {}: average SSIM {avg:.4}",
        pairs.len(),
        cfg.eta,
        cfg.psi
    );
    Ok(())
}

fn evaluate(config: &RunConfig, paths: &Paths, w: &mut RunWriter) -> Result<(), StageError> {
    let ssim = config.ssim_params().stage("config")?;
    let (pairs, fused) = (|| -> Result<_> {
        let (pairs, _) = load_pairs(w, paths.input()?)?;
        let dir = paths.fused.as_deref().ok_or_else(|| anyhow!("--fused is required"))?;
        let index: Vec<FusedRow> = read_csv_input(w, dir, "fused.csv")?;
        if index.len() != pairs.len() {
            bail!("{} fused images for {} pairs", index.len(), pairs.len());
        }
        let mut fused = Vec::with_capacity(index.len());
        for (i, row) in index.iter().enumerate() {
            if row.pair_id != i {
                bail!("fused.csv row {i} has pair_id {}", row.pair_id);
            }
            fused.push(read_image(w, dir, &row.fused)?);
        }
        Ok((pairs, fused))
    })()
    .stage("load-input")?;
    let rows = ssim_rows(&pairs, &fused, &ssim).stage("evaluate")?;
    let avg = mean_total(&rows).stage("evaluate")?;
    w.write_csv("ssim.csv", &rows).stage("write-output")?;
    log::info!("average SSIM over {} pairs: {avg:.4}", rows.len());
    Ok(())
}

fn tune_cmd(config: &RunConfig, paths: &Paths, w: &mut RunWriter) -> Result<(), StageError> {
    let cfg = config.fusion_config().stage("config")?;
    let ssim = config.ssim_params().stage("config")?;
    let (grid_eta, grid_psi) = config.grids().stage("config")?;
    let (pairs, _) = paths.input().and_then(|dir| load_pairs(w, dir)).stage("load-input")?;
    let score = load_score(config, &pairs, w).stage("load-input")?;
    let result = tune(&pairs, &grid_eta, &grid_psi, config.tuning.psi0, &cfg, score.as_ref(), &ssim).stage("tune")?;
    let best = result
        .stage2_table
        .iter()
        .find(|(psi, _)| *psi == result.psi_star)
        .map(|(_, v)| *v)
        .unwrap_or(f64::NAN);
    (|| -> Result<()> {
        let stage1: Vec<EtaRow> = result
            .stage1_table
            .iter()
            .map(|&(eta, avg_ssim)| EtaRow { eta, avg_ssim })
            .collect();
        let stage2: Vec<PsiRow> = result
            .stage2_table
            .iter()
            .map(|&(psi, avg_ssim)| PsiRow { psi, avg_ssim })
            .collect();
        w.write_csv("stage1.csv", &stage1)?;
        w.write_csv("stage2.csv", &stage2)?;
        w.write_csv(
            "summary.csv",
            &[TuneSummary {
                eta_star: result.eta_star,
                psi_star: result.psi_star,
                psi0: result.psi0,
                n_pairs: result.n_pairs,
                evaluations: result.evaluations,
                avg_ssim: best,
            }],
        )?;
        w.write("tuned.toml", weights_overlay(result.eta_star, result.psi_star).as_bytes())
    })()
    .stage("write-output")?;
    log::info!(
        "eta* = {}, psi* = {} (average SSIM {best:.4}, {} evaluations)",
        result.eta_star,
        result.psi_star,
        result.evaluations
    );
    Ok(())
}

fn ablate(config: &RunConfig, paths: &Paths, w: &mut RunWriter) -> Result<(), StageError> {
    let cfg = config.fusion_config().stage("config")?;
    let ssim = config.ssim_params().stage("config")?;
    let (pairs, _) = paths.input().and_then(|dir| load_pairs(w, dir)).stage("load-input")?;
    let score = load_score(config, &pairs, w).stage("load-input")?;
    let diffusion: Vec<Image> = fuse_all(&pairs, &cfg, score.as_ref())
        .stage("fuse")?
        .into_iter()
        .map(|r| r.fused)
        .collect();
    let baseline: Vec<Image> = pairs
        .iter()
        .enumerate()
        .map(|(id, p)| fuse_baseline(p, cfg.eta, cfg.psi).with_context(|| format!("pair {id}")))
        .collect::<Result<_>>()
        .stage("baseline")?;
    let avg_diffusion = ssim_rows(&pairs, &diffusion, &ssim).and_then(|r| mean_total(&r)).stage("evaluate")?;
    let avg_baseline = ssim_rows(&pairs, &baseline, &ssim).and_then(|r| mean_total(&r)).stage("evaluate")?;
    let delta = avg_diffusion - avg_baseline;
    let row = |method: &str, avg_ssim: f64| AblationRow {
        method: method.into(),
        eta: cfg.eta,
        psi: cfg.psi,
        n_pairs: pairs.len(),
        avg_ssim,
    };
    (|| -> Result<()> {
        w.write_csv("ablation.csv", &[row("diffusion", avg_diffusion), row("baseline", avg_baseline)])?;
        w.write_csv(
            "delta.csv",
            &[DeltaRow {
                diffusion_minus_baseline: delta,
            }],
        )
    })()
    .stage("write-output")?;
    log::info!("average SSIM: diffusion {avg_diffusion:.4}, baseline {avg_baseline:.4}, delta {delta:+.4}");
    Ok(())
}

fn export_dt(config: &RunConfig, paths: &Paths, w: &mut RunWriter) -> Result<(), StageError> {
    let line = config.export.line;
    let (frames, scale) = (|| -> Result<_> {
        let dir = paths.input()?;
        let mut index: Vec<FusedRow> = read_csv_input(w, dir, "fused.csv")?;
        index.retain(|r| r.line_index == line);
        index.sort_by_key(|r| r.time_index);
        if index.is_empty() {
            bail!("no fused images for line {line}");
        }
        let frames = index
            .iter()
            .map(|r| Ok((r.time_index, read_image(w, dir, &r.fused)?.transpose())))
            .collect::<Result<Vec<_>>>()?;
        Ok((frames, read_scale(w, dir)?))
    })()
    .stage("load-input")?;
    let samples: Vec<SurfaceSample> = (|| -> Result<_> {
        let height = frames[0].1.height();
        let rows = SurfaceStack::centre_rows(height, config.export.band);
        Ok(SurfaceStack::new(frames, rows, (scale.z_min, scale.z_max))?.samples())
    })()
    .stage("export-dt")?;
    w.write_csv("surface.csv", &samples).stage("write-output")?;
    log::info!("exported {} surface samples for line {line}", samples.len());
    Ok(())
}
