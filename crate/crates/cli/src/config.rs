//! Run configuration: TOML files with `section.key = value` entries, later
//! files and command-line flags overriding earlier values.

use std::fs;
use std::path::PathBuf;

use ajfuse_core::registration::{AlignParams, Reference};
use ajfuse_core::synthgen::{random_offsets, CrossSection};
use ajfuse_core::{
    Aggregate, CorpusSpec, FusionConfig, RegistrationParams, SsimParams, TuningGrid, DEFAULT_PITCH_UM,
};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Gaussian,
    Gmm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AggregateKind {
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    Om,
    Cp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let f = FusionConfig::default();
        ScheduleSection {
            steps: f.steps,
            beta_start: f.beta_start,
            beta_end: f.beta_end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    pub eta: f64,
    pub psi: f64,
    pub seed: u64,
    pub clamp_output: bool,
    /// Stride of saved rectified estimates; 0 disables the dump.
    pub dump_trajectory: usize,
}

impl Default for FusionSection {
    fn default() -> Self {
        FusionSection {
            eta: 0.0,
            psi: 0.0,
            seed: 0,
            clamp_output: true,
            dump_trajectory: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreSection {
    pub kind: ScoreKind,
    pub sigma0_sq: f64,
    pub bandwidth: f64,
    /// Directory of PGM patches for the mixture score; the registered pairs are used when unset.
    pub patch_dir: Option<PathBuf>,
}

impl Default for ScoreSection {
    fn default() -> Self {
        ScoreSection {
            kind: ScoreKind::Gaussian,
            sigma0_sq: 0.01,
            bandwidth: ajfuse_core::scores::DEFAULT_BANDWIDTH,
            patch_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsimSection {
    pub window: usize,
    pub stride: usize,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub aggregate: AggregateKind,
}

impl Default for SsimSection {
    fn default() -> Self {
        let p = SsimParams::default();
        SsimSection {
            window: p.window,
            stride: p.stride,
            c1: p.c1,
            c2: p.c2,
            c3: p.c3,
            aggregate: AggregateKind::Mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningSection {
    /// `LO:HI:N`
    pub grid_eta: String,
    pub grid_psi: String,
    pub psi0: f64,
}

impl Default for TuningSection {
    fn default() -> Self {
        TuningSection {
            grid_eta: "0:100:11".into(),
            grid_psi: "0:100:11".into(),
            psi0: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationSection {
    pub n_lines: usize,
    pub max_shift: usize,
    pub warn_threshold: f64,
    pub reference: ReferenceKind,
    pub roi_height: usize,
    pub roi_width: Option<usize>,
}

impl Default for RegistrationSection {
    fn default() -> Self {
        let p = RegistrationParams::default();
        RegistrationSection {
            n_lines: p.n_lines,
            max_shift: p.align.max_shift,
            warn_threshold: p.align.warn_threshold,
            reference: ReferenceKind::Om,
            roi_height: p.roi_height,
            roi_width: p.roi_width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_frames: usize,
    pub lines_per_frame: usize,
    pub rows: usize,
    pub cols: usize,
    pub pitch_um: f64,
    pub base_width_um: f64,
    pub width_drift_um_per_frame: f64,
    pub peak_height_um: f64,
    pub noise_sd: f64,
    /// Per-frame offsets are drawn from `[-max_offset, max_offset]^2`.
    pub max_offset: i64,
    pub seed: u64,
    pub satellites_per_line: usize,
    pub om_gain: f64,
    pub duration_h: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = CorpusSpec::default();
        SynthSection {
            n_frames: s.n_frames,
            lines_per_frame: s.lines_per_frame,
            rows: s.frame_rows,
            cols: s.frame_cols,
            pitch_um: DEFAULT_PITCH_UM,
            base_width_um: s.base_width_um,
            width_drift_um_per_frame: s.width_drift_um_per_frame,
            peak_height_um: s.peak_height_um,
            noise_sd: s.overspray_noise_sd,
            max_offset: 10,
            seed: 0,
            satellites_per_line: s.satellites_per_line,
            om_gain: s.om_gain,
            duration_h: s.duration_h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportSection {
    /// Which line of each frame forms the surface.
    pub line: usize,
    /// Rows averaged around the centre of each transposed ROI.
    pub band: usize,
}

impl Default for ExportSection {
    fn default() -> Self {
        ExportSection { line: 0, band: 9 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schedule: ScheduleSection,
    pub fusion: FusionSection,
    pub score: ScoreSection,
    pub ssim: SsimSection,
    pub tuning: TuningSection,
    pub registration: RegistrationSection,
    pub synth: SynthSection,
    pub export: ExportSection,
}

/// Command-line values that take precedence over configuration files.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub eta: Option<f64>,
    pub psi: Option<f64>,
    pub steps: Option<usize>,
    pub score: Option<ScoreKind>,
    pub grid: Option<String>,
    pub aggregate: Option<AggregateKind>,
    pub dump_trajectory: Option<usize>,
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text)?;
        Ok(toml::Value::Table(table).try_into()?)
    }

    /// Merges the files in order, later keys winning.
    pub fn load(paths: &[PathBuf]) -> Result<Self> {
        let mut table = toml::Table::new();
        for path in paths {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let overlay: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            merge(&mut table, overlay);
        }
        toml::Value::Table(table)
            .try_into()
            .context("configuration keys")
    }

    /// `--seed` sets both the generator and the fusion seed; `--grid` sets both tuning grids.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.synth.seed = seed;
            self.fusion.seed = seed;
        }
        if let Some(eta) = o.eta {
            self.fusion.eta = eta;
        }
        if let Some(psi) = o.psi {
            self.fusion.psi = psi;
        }
        if let Some(steps) = o.steps {
            self.schedule.steps = steps;
        }
        if let Some(score) = o.score {
            self.score.kind = score;
        }
        if let Some(grid) = &o.grid {
            self.tuning.grid_eta = grid.clone();
            self.tuning.grid_psi = grid.clone();
        }
        if let Some(aggregate) = o.aggregate {
            self.ssim.aggregate = aggregate;
        }
        if let Some(stride) = o.dump_trajectory {
            self.fusion.dump_trajectory = stride;
        }
    }

    /// Checks every section against its module's preconditions.
    pub fn validate(&self) -> Result<()> {
        self.fusion_config()?;
        self.ssim_params()?;
        self.grids()?;
        self.registration_params()?;
        self.corpus_spec()?;
        if !(self.score.sigma0_sq >= 0.0 && self.score.bandwidth >= 0.0) {
            bail!("score.sigma0_sq and score.bandwidth must be nonnegative");
        }
        if self.export.band == 0 {
            bail!("export.band must be at least 1");
        }
        Ok(())
    }

    pub fn fusion_config(&self) -> Result<FusionConfig> {
        let cfg = FusionConfig {
            steps: self.schedule.steps,
            beta_start: self.schedule.beta_start,
            beta_end: self.schedule.beta_end,
            eta: self.fusion.eta,
            psi: self.fusion.psi,
            seed: self.fusion.seed,
            clamp_output: self.fusion.clamp_output,
            trajectory_stride: (self.fusion.dump_trajectory > 0).then_some(self.fusion.dump_trajectory),
        };
        cfg.validate()?;
        cfg.schedule()?;
        Ok(cfg)
    }

    pub fn ssim_params(&self) -> Result<SsimParams> {
        let s = &self.ssim;
        let p = SsimParams {
            window: s.window,
            stride: s.stride,
            c1: s.c1,
            c2: s.c2,
            c3: s.c3,
            aggregate: match s.aggregate {
                AggregateKind::Mean => Aggregate::Mean,
                AggregateKind::Sum => Aggregate::Sum,
            },
        };
        p.validate()?;
        Ok(p)
    }

    pub fn grids(&self) -> Result<(TuningGrid, TuningGrid)> {
        let parse = |name: &str, text: &str| -> Result<TuningGrid> {
            let g: TuningGrid = text
                .parse()
                .map_err(|e| anyhow::anyhow!("tuning.{name} = {text:?}: {e}"))?;
            Ok(g)
        };
        let eta = parse("grid_eta", &self.tuning.grid_eta)?;
        let psi = parse("grid_psi", &self.tuning.grid_psi)?;
        if !psi.contains_range(self.tuning.psi0) {
            bail!("tuning.psi0 = {} lies outside tuning.grid_psi", self.tuning.psi0);
        }
        Ok((eta, psi))
    }

    pub fn registration_params(&self) -> Result<RegistrationParams> {
        let r = &self.registration;
        if r.n_lines == 0 || r.roi_height == 0 || r.roi_width == Some(0) {
            bail!("registration.n_lines, roi_height and roi_width must be positive");
        }
        if !r.warn_threshold.is_finite() {
            bail!("registration.warn_threshold must be finite");
        }
        Ok(RegistrationParams {
            n_lines: r.n_lines,
            align: AlignParams {
                max_shift: r.max_shift,
                warn_threshold: r.warn_threshold,
            },
            reference: match r.reference {
                ReferenceKind::Om => Reference::Optical,
                ReferenceKind::Cp => Reference::Profilometry,
            },
            roi_height: r.roi_height,
            roi_width: r.roi_width,
        })
    }

    pub fn corpus_spec(&self) -> Result<CorpusSpec> {
        let s = &self.synth;
        if s.max_offset < 0 {
            bail!("synth.max_offset must be nonnegative");
        }
        let spec = CorpusSpec {
            n_frames: s.n_frames,
            lines_per_frame: s.lines_per_frame,
            frame_rows: s.rows,
            frame_cols: s.cols,
            pitch_um: s.pitch_um,
            base_width_um: s.base_width_um,
            width_drift_um_per_frame: s.width_drift_um_per_frame,
            peak_height_um: s.peak_height_um,
            cross_section: CrossSection::Gaussian,
            overspray_noise_sd: s.noise_sd,
            injected_offsets: random_offsets(s.n_frames, s.max_offset, s.seed.wrapping_add(1)),
            seed: s.seed,
            line_margin_px: CorpusSpec::default().line_margin_px,
            satellites_per_line: s.satellites_per_line,
            om_gain: s.om_gain,
            duration_h: s.duration_h,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// SHA-256 over the command name and the canonical JSON form of the configuration.
    pub fn hash(&self, command: &str) -> String {
        let json = serde_json::to_vec(&(command, self)).expect("configuration serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Text of a configuration overlay that sets the fusion weights.
pub fn weights_overlay(eta: f64, psi: f64) -> String {
    format!("fusion.eta = {eta:?}\nfusion.psi = {psi:?}\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys_and_sections_agree() {
        let a = RunConfig::parse("fusion.eta = 3.5\nssim.aggregate = \"sum\"\n").unwrap();
        let b = RunConfig::parse("[fusion]\neta = 3.5\n[ssim]\naggregate = \"sum\"\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fusion.eta, 3.5);
        assert_eq!(a.ssim.aggregate, AggregateKind::Sum);
        assert_eq!(a.schedule.steps, 100);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("fusion.etaa = 1.0\n").is_err());
        assert!(RunConfig::parse("nonsense.x = 1\n").is_err());
    }

    #[test]
    fn later_files_and_flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.toml");
        let b = dir.path().join("b.toml");
        fs::write(&a, "fusion.eta = 1.0\nfusion.psi = 2.0\nschedule.steps = 7\n").unwrap();
        fs::write(&b, "fusion.psi = 5.0\n").unwrap();
        let mut cfg = RunConfig::load(&[a, b]).unwrap();
        assert_eq!((cfg.fusion.eta, cfg.fusion.psi, cfg.schedule.steps), (1.0, 5.0, 7));
        cfg.apply(&Overrides {
            steps: Some(9),
            grid: Some("0:10:3".into()),
            seed: Some(4),
            ..Overrides::default()
        });
        assert_eq!(cfg.schedule.steps, 9);
        assert_eq!(cfg.tuning.grid_psi, "0:10:3");
        assert_eq!((cfg.synth.seed, cfg.fusion.seed), (4, 4));
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = RunConfig::default();
        cfg.validate().unwrap();
        cfg.fusion.eta = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.tuning.grid_eta = "0:100".into();
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.ssim.window = 4;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.synth.rows = 40;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overlay_round_trips() {
        let cfg = RunConfig::parse(&weights_overlay(40.0, 1e-7)).unwrap();
        assert_eq!((cfg.fusion.eta, cfg.fusion.psi), (40.0, 1e-7));
    }

    #[test]
    fn hash_tracks_content_and_command() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash("fuse"), b.hash("fuse"));
        assert_ne!(a.hash("fuse"), a.hash("tune"));
        b.fusion.psi = 0.5;
        assert_ne!(a.hash("fuse"), b.hash("fuse"));
    }
}
