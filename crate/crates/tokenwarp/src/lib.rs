//! Flow-guided token-warping attention for zero-shot video translation at
//! desk scale.
//!
//! During DDIM denoising, the previous frame's query/key/value token grids
//! are backward-warped by optical flow, fused with the current frame's
//! tokens through an occlusion mask, concatenated with anchor tokens from
//! the first frame, and fed through a single attention pass. The crate ships
//! the full loop framework-free: tensor-like value types, warping kernels, a
//! block-matching flow estimator, attention mechanisms, DDIM sampling and
//! inversion, synthetic scenes with analytic ground truth, and the metrics
//! and ablation tooling that verify the mechanism's behavior.
//!
//! Start with the runnable examples:
//!
//! ```text
//! cargo run --example generate_scene      # synthetic scene + ground truth
//! cargo run --example warp_tokens         # backward warping + fusion
//! cargo run --example estimate_flow       # block matching + occlusion
//! cargo run --example ddim_roundtrip      # inversion / sampling round trip
//! cargo run --example attention_mechanisms# the three attention paths
//! cargo run --example translate_scene     # the full translation loop
//! cargo run --example clip_by_clip        # clip splitting equivalence
//! cargo run --example ablation_table      # variant comparison table
//! ```
//!
//! The `tokenwarp` binary wires the same pieces into `synth`, `flow`,
//! `occl`, `translate`, `eval`, and `ablate` subcommands over `.tkwp`
//! tensor container files.

pub mod attention;
pub mod block_match;
pub mod cache;
pub mod config;
pub mod container;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod schedule;
pub mod synth;
pub mod warp;

pub use attention::{
    cross_frame_attention, first_frame_attention, flow_guided_attention, project_qkv,
    scaled_dot_attention, scaled_dot_attention_with_weights, AnchorTokens, AttentionConfig,
    AttentionWeights, LayerTokens, Mechanism, ProjectionWeights,
};
pub use block_match::{block_match_flow, BlockMatchParams};
pub use cache::{AttentionContext, CacheMode, TokenCache};
pub use denoiser::{Denoiser, DenoiserOutput, LinearDenoiser, ToyAttentionDenoiser, ToyDenoiserParams};
pub use diffusion::{
    ddim_invert_step, ddim_step, initial_noise, invert_frame, sample_frame, sample_frame_captured,
    translate_clips, translate_video, FrameContext, NoiseMode, TranslationConfig,
};
pub use error::{Error, Result};
pub use grid::{FlowField, OcclusionMask, TokenGrid, VideoTensor};
pub use config::{RunConfig, ScheduleConfig};
pub use metrics::{
    ablation_csv, ablation_report, ablation_report_with, temporal_consistency, warp_error,
    AblationRow,
};
pub use schedule::{BetaSpacing, DiffusionSchedule};
pub use synth::{gen_scene, Background, SceneBundle, SceneObject, SceneSpec, ShapeKind};
pub use warp::{backward_warp, estimate_occlusion, fuse_tokens, resize_flow, resize_mask, OcclusionParams};
