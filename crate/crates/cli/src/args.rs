use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{AggregateKind, Overrides, ScoreKind};

#[derive(Debug, Parser)]
#[command(name = "ajfuse", version, about = "Register, fuse and tune optical/profilometry line data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with ground truth.
    Synth(CommonArgs),
    /// Register a corpus manifest into ROI pairs.
    Register(CommonArgs),
    /// Fuse every registered pair with fixed weights.
    Fuse(CommonArgs),
    /// Score stored fused images against their registered pairs.
    Evaluate(CommonArgs),
    /// Two-stage grid search for the rectification weights.
    Tune(CommonArgs),
    /// Compare diffusion fusion against the non-generative baseline.
    Ablate(CommonArgs),
    /// Export fused cross-sections over time as a surface.
    #[command(name = "export-dt")]
    ExportDt(CommonArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Register(_) => "register",
            Command::Fuse(_) => "fuse",
            Command::Evaluate(_) => "evaluate",
            Command::Tune(_) => "tune",
            Command::Ablate(_) => "ablate",
            Command::ExportDt(_) => "export-dt",
        }
    }

    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Synth(a)
            | Command::Register(a)
            | Command::Fuse(a)
            | Command::Evaluate(a)
            | Command::Tune(a)
            | Command::Ablate(a)
            | Command::ExportDt(a) => a,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Configuration file; repeat to layer files, later ones winning.
    #[arg(long = "config", value_name = "PATH")]
    pub config: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Input: a corpus directory or manifest (register), a registered
    /// directory (fuse, evaluate, tune, ablate) or a fused directory (export-dt).
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Fused directory to score (evaluate).
    #[arg(long, value_name = "DIR")]
    pub fused: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub psi: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_enum)]
    pub score: Option<ScoreKind>,
    /// Tuning grid `LO:HI:N` for both weights.
    #[arg(long, value_name = "LO:HI:N")]
    pub grid: Option<String>,
    #[arg(long, value_enum)]
    pub aggregate: Option<AggregateKind>,
    /// Save every N-th rectified estimate during fusion.
    #[arg(long, value_name = "N")]
    pub dump_trajectory: Option<usize>,
    /// Verify an existing output directory against this configuration instead of running.
    #[arg(long)]
    pub check: bool,
}

impl CommonArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            eta: self.eta,
            psi: self.psi,
            steps: self.steps,
            score: self.score,
            grid: self.grid.clone(),
            aggregate: self.aggregate,
            dump_trajectory: self.dump_trajectory,
        }
    }
}
