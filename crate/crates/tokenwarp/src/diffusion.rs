//! Deterministic DDIM sampling and inversion, plus the frame-by-frame video
//! translation loop: translate the first frame with plain self-attention,
//! store its tokens as anchor and previous-frame entries, then denoise every
//! later frame under flow-guided attention and roll the cache forward.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::attention::AttentionConfig;
use crate::cache::{AttentionContext, CacheMode, TokenCache};
use crate::denoiser::{Denoiser, ToyAttentionDenoiser};
use crate::error::{Error, Result};
use crate::grid::{FlowField, OcclusionMask, TokenGrid};
use crate::schedule::DiffusionSchedule;

/// How per-frame starting noise is seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Every frame starts from the same noise code.
    SharedSeed,
    /// Frame `i` uses `seed + i` (default).
    PerFrameSeed,
}

impl Default for NoiseMode {
    fn default() -> Self {
        NoiseMode::PerFrameSeed
    }
}

/// Settings for a translation run.
#[derive(Debug, Clone)]
pub struct TranslationConfig {
    /// Sampling steps, uniformly strided over the schedule.
    pub steps: usize,
    pub schedule: DiffusionSchedule,
    pub noise_mode: NoiseMode,
    /// Clip length for clip-by-clip translation.
    pub clip_len: usize,
    pub attention: AttentionConfig,
    pub cache_mode: CacheMode,
    pub seed: u64,
}

impl TranslationConfig {
    /// Defaults: 50 steps over the standard 1000-step schedule, per-frame
    /// noise seeds, 8-frame clips, full flow-guided attention, final-step
    /// token caching.
    pub fn new(seed: u64) -> Self {
        Self {
            steps: 50,
            schedule: DiffusionSchedule::default_latent(),
            noise_mode: NoiseMode::PerFrameSeed,
            clip_len: 8,
            attention: AttentionConfig::full(),
            cache_mode: CacheMode::FinalStep,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.steps > self.schedule.t_total() {
            return Err(Error::invalid(format!(
                "steps {} must be in 1..={}",
                self.steps,
                self.schedule.t_total()
            )));
        }
        if self.clip_len == 0 {
            return Err(Error::invalid("clip_len must be at least 1"));
        }
        self.attention.validate()
    }
}

fn step_coeffs(s: &DiffusionSchedule, from_t: usize, to_t: usize) -> Result<(f64, f64)> {
    let ab_from = s.alpha_bar(from_t)?;
    let ab_to = s.alpha_bar(to_t)?;
    let c1 = (ab_to / ab_from).sqrt();
    let c2 = (1.0 - ab_to).sqrt() - c1 * (1.0 - ab_from).sqrt();
    Ok((c1, c2))
}

fn affine(z: &TokenGrid, eps: &TokenGrid, c1: f64, c2: f64) -> Result<TokenGrid> {
    if !z.same_shape(eps) {
        return Err(Error::shape("latent and noise prediction shapes differ"));
    }
    let (a, b) = (c1 as f32, c2 as f32);
    let data = z
        .values()
        .iter()
        .zip(eps.values())
        .map(|(zv, ev)| a * zv + b * ev)
        .collect();
    TokenGrid::new(z.h(), z.w(), z.d(), data)
}

/// One deterministic denoising step from timestep `t` down to `t_prev`
/// (`t_prev = 0` is the clean terminal state).
pub fn ddim_step(
    z_t: &TokenGrid,
    eps: &TokenGrid,
    t: usize,
    t_prev: usize,
    s: &DiffusionSchedule,
) -> Result<TokenGrid> {
    if !(t_prev < t && t >= 1 && t <= s.t_total()) {
        return Err(Error::invalid(format!(
            "ddim_step needs 0 <= t_prev < t <= {}, got t = {t}, t_prev = {t_prev}",
            s.t_total()
        )));
    }
    let (c1, c2) = step_coeffs(s, t, t_prev)?;
    affine(z_t, eps, c1, c2)
}

/// Algebraic inverse of [`ddim_step`] given the same noise prediction:
/// recovers `z_t` from `z_{t_prev}`.
pub fn ddim_invert_step(
    z_prev: &TokenGrid,
    eps: &TokenGrid,
    t_prev: usize,
    t: usize,
    s: &DiffusionSchedule,
) -> Result<TokenGrid> {
    if !(t_prev < t && t >= 1 && t <= s.t_total()) {
        return Err(Error::invalid(format!(
            "ddim_invert_step needs 0 <= t_prev < t <= {}, got t = {t}, t_prev = {t_prev}",
            s.t_total()
        )));
    }
    let (c1, c2) = step_coeffs(s, t_prev, t)?;
    affine(z_prev, eps, c1, c2)
}

/// Per-frame guidance handed to the sampler: the token cache plus the flow
/// and occlusion mask already resized to the token resolution.
#[derive(Debug, Clone, Copy)]
pub struct FrameContext<'a> {
    pub cache: &'a TokenCache,
    pub flow: &'a FlowField,
    pub mask: &'a OcclusionMask,
}

/// Run the full sampling trajectory from `z_T` to a clean latent.
pub fn sample_frame(
    z_t: &TokenGrid,
    denoiser: &dyn Denoiser,
    cfg: &TranslationConfig,
    ctx: Option<&FrameContext<'_>>,
) -> Result<TokenGrid> {
    sample_frame_captured(z_t, denoiser, cfg, ctx).map(|(out, _)| out)
}

/// As [`sample_frame`], also returning the denoiser's per-layer tokens:
/// one entry per sampled step in per-timestep cache mode, otherwise just the
/// final step's.
pub fn sample_frame_captured(
    z_t: &TokenGrid,
    denoiser: &dyn Denoiser,
    cfg: &TranslationConfig,
    ctx: Option<&FrameContext<'_>>,
) -> Result<(TokenGrid, Vec<Vec<crate::attention::LayerTokens>>)> {
    cfg.validate()?;
    let timesteps = cfg.schedule.sample_timesteps(cfg.steps)?;
    let t_total = cfg.schedule.t_total();
    let mut z = z_t.clone();
    let mut captures = Vec::new();
    for (si, &t) in timesteps.iter().enumerate() {
        let t_prev = if si + 1 < timesteps.len() { timesteps[si + 1] } else { 0 };
        let out = match ctx {
            None => denoiser.predict(&z, t, t_total, None)?,
            Some(fc) => {
                let step_ctx = AttentionContext {
                    prev: fc.cache.prev_at(si)?,
                    anchor: fc.cache.anchor_at(si)?,
                    flow: fc.flow,
                    mask: fc.mask,
                };
                denoiser.predict(&z, t, t_total, Some(&step_ctx))?
            }
        };
        if !out.eps.same_shape(&z) {
            return Err(Error::shape("denoiser output shape differs from its input"));
        }
        z = ddim_step(&z, &out.eps, t, t_prev, &cfg.schedule)?;
        match cfg.cache_mode {
            CacheMode::PerTimestep => captures.push(out.tokens),
            CacheMode::FinalStep => {
                if si + 1 == timesteps.len() {
                    captures.push(out.tokens);
                }
            }
        }
    }
    Ok((z, captures))
}

/// Encode a clean latent back to the noise level `T` by running the step
/// inverse along ascending timesteps, evaluating the denoiser at the current
/// latent (the usual one-step-lag approximation).
pub fn invert_frame(
    z_0: &TokenGrid,
    denoiser: &dyn Denoiser,
    cfg: &TranslationConfig,
    ctx: Option<&FrameContext<'_>>,
) -> Result<TokenGrid> {
    cfg.validate()?;
    let timesteps = cfg.schedule.sample_timesteps(cfg.steps)?;
    let t_total = cfg.schedule.t_total();
    let mut z = z_0.clone();
    for k in (0..timesteps.len()).rev() {
        let t = timesteps[k];
        let t_prev = if k + 1 < timesteps.len() { timesteps[k + 1] } else { 0 };
        let out = match ctx {
            None => denoiser.predict(&z, t_prev, t_total, None)?,
            Some(fc) => {
                let step_ctx = AttentionContext {
                    prev: fc.cache.prev_at(k)?,
                    anchor: fc.cache.anchor_at(k)?,
                    flow: fc.flow,
                    mask: fc.mask,
                };
                denoiser.predict(&z, t_prev, t_total, Some(&step_ctx))?
            }
        };
        if !out.eps.same_shape(&z) {
            return Err(Error::shape("denoiser output shape differs from its input"));
        }
        z = ddim_invert_step(&z, &out.eps, t_prev, t, &cfg.schedule)?;
    }
    Ok(z)
}

/// Starting noise for frame `frame_index` (0-based).
pub fn initial_noise(h: usize, w: usize, d: usize, cfg: &TranslationConfig, frame_index: usize) -> Result<TokenGrid> {
    let seed = match cfg.noise_mode {
        NoiseMode::SharedSeed => cfg.seed,
        NoiseMode::PerFrameSeed => cfg.seed.wrapping_add(frame_index as u64),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TokenGrid::from_fn(h, w, d, |_, _, _| rand::Rng::sample(&mut rng, StandardNormal))
}

fn validate_translation_inputs(
    latents: &[TokenGrid],
    flows: &[FlowField],
    masks: &[OcclusionMask],
    denoiser: &ToyAttentionDenoiser,
    cfg: &TranslationConfig,
    expect_ctx_frames: usize,
) -> Result<()> {
    cfg.validate()?;
    let first = latents
        .first()
        .ok_or_else(|| Error::invalid("translation needs at least one frame"))?;
    if first.d() != denoiser.d_in() {
        return Err(Error::shape(format!(
            "latents have {} channels, denoiser expects {}",
            first.d(),
            denoiser.d_in()
        )));
    }
    for (i, l) in latents.iter().enumerate() {
        if !l.same_shape(first) {
            return Err(Error::shape(format!("latent {i} shape differs from frame 0")));
        }
    }
    if flows.len() != expect_ctx_frames || masks.len() != expect_ctx_frames {
        return Err(Error::invalid(format!(
            "expected {expect_ctx_frames} flows and masks, got {} and {}",
            flows.len(),
            masks.len()
        )));
    }
    for (i, f) in flows.iter().enumerate() {
        if f.h() != first.h() || f.w() != first.w() {
            return Err(Error::shape(format!(
                "flow {i} is {}x{}, latents are {}x{}; resize flows to the token resolution",
                f.h(),
                f.w(),
                first.h(),
                first.w()
            )));
        }
    }
    for (i, m) in masks.iter().enumerate() {
        if m.h() != first.h() || m.w() != first.w() {
            return Err(Error::shape(format!("mask {i} resolution differs from latents")));
        }
    }
    Ok(())
}

/// Translate a contiguous run of frames. With `carry = None` the first
/// frame is denoised under plain self-attention and seeds the cache; with a
/// carried cache every frame consumes one flow/mask pair. Flow `j` maps the
/// j-th context frame of this segment back to its predecessor.
fn translate_segment(
    latents: &[TokenGrid],
    flows: &[FlowField],
    masks: &[OcclusionMask],
    denoiser: &ToyAttentionDenoiser,
    cfg: &TranslationConfig,
    carry: Option<TokenCache>,
    frame_offset: usize,
) -> Result<(Vec<TokenGrid>, TokenCache)> {
    let mut cache = carry;
    let mut outputs = Vec::with_capacity(latents.len());
    let mut flow_idx = 0usize;
    for (local, latent) in latents.iter().enumerate() {
        let abs_index = frame_offset + local;
        let z_t = initial_noise(latent.h(), latent.w(), latent.d(), cfg, abs_index)?;
        match cache.as_mut() {
            None => {
                let (out, caps) = sample_frame_captured(&z_t, denoiser, cfg, None)?;
                outputs.push(out);
                cache = Some(TokenCache::from_first_frame(caps)?);
            }
            Some(c) => {
                let fc = FrameContext { cache: c, flow: &flows[flow_idx], mask: &masks[flow_idx] };
                flow_idx += 1;
                let (out, caps) = sample_frame_captured(&z_t, denoiser, cfg, Some(&fc))?;
                outputs.push(out);
                c.replace_prev(caps, abs_index)?;
            }
        }
    }
    Ok((outputs, cache.expect("at least one frame processed")))
}

/// Translate a whole video: frame 1 under plain self-attention (its tokens
/// become the anchor and previous-frame cache entries), frames 2..N under
/// the configured attention, the cache rolling forward after every frame.
///
/// `flows[i]` and `masks[i]` describe frame `i + 1` relative to frame `i`,
/// already at the token resolution.
pub fn translate_video(
    latents: &[TokenGrid],
    flows: &[FlowField],
    masks: &[OcclusionMask],
    denoiser: &ToyAttentionDenoiser,
    cfg: &TranslationConfig,
) -> Result<(Vec<TokenGrid>, TokenCache)> {
    validate_translation_inputs(latents, flows, masks, denoiser, cfg, latents.len() - 1)?;
    let resolved = denoiser.with_attention(&cfg.attention)?;
    translate_segment(latents, flows, masks, &resolved, cfg, None, 0)
}

/// Translate in clips of `cfg.clip_len` frames, carrying only the last
/// frame's per-layer tokens and the anchor tokens across clip boundaries.
/// Equals the unsplit [`translate_video`] run for every clip length.
pub fn translate_clips(
    latents: &[TokenGrid],
    flows: &[FlowField],
    masks: &[OcclusionMask],
    denoiser: &ToyAttentionDenoiser,
    cfg: &TranslationConfig,
) -> Result<Vec<TokenGrid>> {
    validate_translation_inputs(latents, flows, masks, denoiser, cfg, latents.len() - 1)?;
    let resolved = denoiser.with_attention(&cfg.attention)?;
    let n = latents.len();
    let mut outputs = Vec::with_capacity(n);
    let mut carry: Option<TokenCache> = None;
    let mut start = 0usize;
    while start < n {
        let end = (start + cfg.clip_len).min(n);
        let (flow_lo, flow_hi) = if start == 0 { (0, end - 1) } else { (start - 1, end - 1) };
        let (mut outs, cache) = translate_segment(
            &latents[start..end],
            &flows[flow_lo..flow_hi],
            &masks[flow_lo..flow_hi],
            &resolved,
            cfg,
            carry.take(),
            start,
        )?;
        outputs.append(&mut outs);
        carry = Some(cache);
        start = end;
    }
    Ok(outputs)
}

/// As [`translate_clips`], also reporting the carried cache size (in f32
/// values) observed at every clip boundary.
pub fn translate_clips_with_cache_sizes(
    latents: &[TokenGrid],
    flows: &[FlowField],
    masks: &[OcclusionMask],
    denoiser: &ToyAttentionDenoiser,
    cfg: &TranslationConfig,
) -> Result<(Vec<TokenGrid>, Vec<usize>)> {
    validate_translation_inputs(latents, flows, masks, denoiser, cfg, latents.len() - 1)?;
    let resolved = denoiser.with_attention(&cfg.attention)?;
    let n = latents.len();
    let mut outputs = Vec::with_capacity(n);
    let mut sizes = Vec::new();
    let mut carry: Option<TokenCache> = None;
    let mut start = 0usize;
    while start < n {
        let end = (start + cfg.clip_len).min(n);
        let (flow_lo, flow_hi) = if start == 0 { (0, end - 1) } else { (start - 1, end - 1) };
        let (mut outs, cache) = translate_segment(
            &latents[start..end],
            &flows[flow_lo..flow_hi],
            &masks[flow_lo..flow_hi],
            &resolved,
            cfg,
            carry.take(),
            start,
        )?;
        outputs.append(&mut outs);
        sizes.push(cache.total_values());
        carry = Some(cache);
        start = end;
    }
    Ok((outputs, sizes))
}
