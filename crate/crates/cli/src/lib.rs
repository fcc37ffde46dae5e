//! Command-line pipeline around `ajfuse_core`: synthesize a corpus, register
//! it into ROI pairs, fuse, score, tune, ablate, and export a time-indexed
//! surface. Every command writes into one output directory with a `run.json`
//! manifest of the configuration and the SHA-256 of each file.

pub mod args;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod surface;

pub use args::{Cli, Command, CommonArgs};
pub use commands::{execute, Paths, StageError, StageExt};
pub use config::{Overrides, RunConfig};
pub use surface::{SurfaceSample, SurfaceStack};

/// Caps the global worker pool at `AJFUSE_THREADS` when set.
pub fn init_threads() -> Result<(), StageError> {
    let Ok(value) = std::env::var("AJFUSE_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| anyhow::anyhow!("AJFUSE_THREADS = {value:?} is not a positive integer"))
        .stage("config")?;
    if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
        log::debug!("worker pool already initialized");
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), StageError> {
    init_threads()?;
    let args = cli.command.args();
    let mut config = RunConfig::load(&args.config).stage("config")?;
    config.apply(&args.overrides());
    config.validate().stage("config")?;
    let paths = Paths {
        out: args.out.clone(),
        input: args.input.clone(),
        fused: args.fused.clone(),
    };
    execute(&cli.command, &config, &paths, args.check)
}
