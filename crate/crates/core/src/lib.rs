//! Multimodal fusion of printed-line monitoring data.
//!
//! Optical-microscopy frames and confocal height maps are registered into
//! per-line region pairs ([`registration`]), fused by a deterministic
//! reverse-diffusion loop with cross-modality rectification ([`diffusion`]),
//! scored with windowed SSIM ([`metrics`]), and tuned by a two-stage grid
//! search ([`tuning`]). [`synthgen`] produces corpora with known ground truth.

pub mod corpus;
pub mod diffusion;
pub mod error;
pub mod forward;
pub mod image;
pub mod io;
pub mod metrics;
pub mod registration;
pub mod rng;
pub mod schedule;
pub mod scores;
pub mod synthgen;
pub mod tuning;

pub use diffusion::{
    baseline_rois, ddim_transition, denoise_estimate, fuse_baseline, fuse_pair, fuse_rois, rectify,
    transition_coefficients, FusionConfig, FusionResult, ProximalBlend, Rectifier,
};
pub use error::{Error, Result};
pub use forward::{forward_marginal_sample, forward_marginal_with_noise};
pub use image::{HeightMap, Image, DEFAULT_PITCH_UM};
pub use metrics::{average_ssim, fusion_ssim, ssim_pair, Aggregate, SsimParams, SsimReport};
pub use registration::{
    align_translation, compute_global_height_range, extract_roi, heightmap_to_image, register_corpus,
    segment_om_lines, AlignParams, AlignmentResult, LineStrip, RegistrationParams, RoiPair,
};
pub use rng::Rng;
pub use schedule::{NoiseSchedule, ScheduleKind};
pub use scores::{gaussian_score, gmm_empirical_score, GaussianScoreParams, GmmScoreParams, ScoreModel, ZeroScore};
pub use synthgen::{generate_corpus, CorpusSpec, GroundTruth};
pub use tuning::{tune, tune_with, TuningGrid, TuningResult};
