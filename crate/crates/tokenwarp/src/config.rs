//! JSON run configuration shared by the CLI subcommands. Parsing is strict:
//! unknown keys are rejected so ablation configs stay honest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attention::AttentionConfig;
use crate::block_match::BlockMatchParams;
use crate::cache::CacheMode;
use crate::denoiser::ToyDenoiserParams;
use crate::diffusion::{NoiseMode, TranslationConfig};
use crate::error::{Error, Result};
use crate::schedule::{BetaSpacing, DiffusionSchedule};
use crate::synth::SceneSpec;
use crate::warp::OcclusionParams;

/// Noise schedule section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub t_total: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub spacing: BetaSpacing,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { t_total: 1000, beta_start: 0.00085, beta_end: 0.012, spacing: BetaSpacing::ScaledLinear }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<DiffusionSchedule> {
        DiffusionSchedule::make(self.t_total, self.beta_start, self.beta_end, self.spacing)
    }
}

/// Top-level run configuration; every section is optional and falls back to
/// the documented defaults. `seed` is mandatory for `translate` and
/// `ablate`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Sampling steps (default 50).
    pub steps: Option<usize>,
    pub schedule: Option<ScheduleConfig>,
    pub noise_mode: Option<NoiseMode>,
    /// Clip length for clip-by-clip translation (default 8).
    pub clip_len: Option<usize>,
    pub cache_mode: Option<CacheMode>,
    pub attention: Option<AttentionConfig>,
    pub denoiser: Option<ToyDenoiserParams>,
    pub scene: Option<SceneSpec>,
    pub occlusion: Option<OcclusionParams>,
    pub block_match: Option<BlockMatchParams>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("this command requires \"seed\" in the config".into()))
    }

    pub fn scene_spec(&self) -> SceneSpec {
        self.scene.clone().unwrap_or_default()
    }

    pub fn occlusion_params(&self) -> OcclusionParams {
        self.occlusion.unwrap_or_default()
    }

    pub fn block_match_params(&self) -> BlockMatchParams {
        self.block_match.unwrap_or_default()
    }

    /// Denoiser parameters; without an explicit section the weights are
    /// seeded from the run seed.
    pub fn denoiser_params(&self) -> ToyDenoiserParams {
        self.denoiser.unwrap_or(ToyDenoiserParams {
            seed: self.seed.unwrap_or(0),
            ..Default::default()
        })
    }

    /// Assemble the translation settings; fails without a seed.
    pub fn translation_config(&self) -> Result<TranslationConfig> {
        let mut cfg = TranslationConfig::new(self.require_seed()?);
        if let Some(steps) = self.steps {
            cfg.steps = steps;
        }
        if let Some(s) = &self.schedule {
            cfg.schedule = s.build()?;
        }
        if let Some(m) = self.noise_mode {
            cfg.noise_mode = m;
        }
        if let Some(l) = self.clip_len {
            cfg.clip_len = l;
        }
        if let Some(c) = self.cache_mode {
            cfg.cache_mode = c;
        }
        if let Some(a) = &self.attention {
            cfg.attention = a.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::Mechanism;

    #[test]
    fn empty_config_uses_defaults() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert!(cfg.seed.is_none());
        let scene = cfg.scene_spec();
        assert_eq!((scene.h, scene.w, scene.n), (32, 32, 16));
        assert!(cfg.require_seed().is_err());
        assert!(cfg.translation_config().is_err());
    }

    #[test]
    fn unknown_keys_rejected_everywhere() {
        assert!(RunConfig::from_json("{\"bogus\": 1}").is_err());
        assert!(RunConfig::from_json("{\"attention\": {\"bogus\": 1}}").is_err());
        assert!(RunConfig::from_json("{\"scene\": {\"bogus\": 1}}").is_err());
        assert!(RunConfig::from_json("{\"schedule\": {\"bogus\": 1}}").is_err());
    }

    #[test]
    fn full_round_trip() {
        let text = r#"{
            "seed": 7,
            "steps": 10,
            "schedule": {"t_total": 100, "beta_start": 0.001, "beta_end": 0.02, "spacing": "linear"},
            "noise_mode": "shared_seed",
            "clip_len": 4,
            "cache_mode": "per_timestep",
            "attention": {"mechanism": "flow_guided", "use_anchor": true, "warp_q": true, "warp_kv": false, "layer_selection": [0, 2]},
            "denoiser": {"blocks": 2, "d_model": 4, "heads": 2, "seed": 3},
            "occlusion": {"alpha": 0.02, "beta": 0.4, "soft": true}
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        let tc = cfg.translation_config().unwrap();
        assert_eq!(tc.steps, 10);
        assert_eq!(tc.schedule.t_total(), 100);
        assert_eq!(tc.clip_len, 4);
        assert_eq!(tc.attention.mechanism, Mechanism::FlowGuided);
        assert!(!tc.attention.warp_kv);
        assert_eq!(cfg.denoiser_params().blocks, 2);
        assert!(cfg.occlusion_params().soft);
    }

    #[test]
    fn denoiser_seed_follows_run_seed_by_default() {
        let cfg = RunConfig::from_json("{\"seed\": 42}").unwrap();
        assert_eq!(cfg.denoiser_params().seed, 42);
        let explicit = RunConfig::from_json("{\"seed\": 42, \"denoiser\": {\"seed\": 5}}").unwrap();
        assert_eq!(explicit.denoiser_params().seed, 5);
    }

    #[test]
    fn invalid_steps_rejected_at_build() {
        let cfg = RunConfig::from_json("{\"seed\": 1, \"steps\": 0}").unwrap();
        assert!(cfg.translation_config().is_err());
        let cfg = RunConfig::from_json(
            "{\"seed\": 1, \"steps\": 200, \"schedule\": {\"t_total\": 100}}",
        )
        .unwrap();
        assert!(cfg.translation_config().is_err());
    }
}
