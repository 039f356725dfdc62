//! Pluggable noise predictors: an analytic linear denoiser for closed-form
//! checks and a small attention denoiser hosting the mechanism under test.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{
    cross_frame_attention, flow_guided_attention, orthonormal_ish, project_qkv, project_tokens,
    scaled_dot_attention, AttentionConfig, LayerTokens, Mechanism, ProjectionWeights,
};
use crate::cache::AttentionContext;
use crate::error::{Error, Result};
use crate::grid::TokenGrid;

/// One noise prediction plus the per-layer tokens it produced (empty for
/// denoisers without attention layers).
#[derive(Debug, Clone)]
pub struct DenoiserOutput {
    pub eps: TokenGrid,
    pub tokens: Vec<LayerTokens>,
}

/// A noise predictor. Must be deterministic for identical inputs and emit
/// the input shape.
pub trait Denoiser {
    fn predict(
        &self,
        z: &TokenGrid,
        t: usize,
        t_total: usize,
        ctx: Option<&AttentionContext<'_>>,
    ) -> Result<DenoiserOutput>;
}

/// Predicts `eps = c * z`, ignoring timestep and context. Keep `|c|` below
/// `1 / sqrt(1 - alpha_bar(T))` so sampling updates stay bounded.
#[derive(Debug, Clone, Copy)]
pub struct LinearDenoiser {
    c: f32,
}

impl LinearDenoiser {
    pub fn new(c: f32) -> Self {
        Self { c }
    }
}

impl Denoiser for LinearDenoiser {
    fn predict(
        &self,
        z: &TokenGrid,
        _t: usize,
        _t_total: usize,
        _ctx: Option<&AttentionContext<'_>>,
    ) -> Result<DenoiserOutput> {
        Ok(DenoiserOutput { eps: z.scale(self.c)?, tokens: Vec::new() })
    }
}

/// Construction parameters for [`ToyAttentionDenoiser`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyDenoiserParams {
    /// Number of attention blocks.
    pub blocks: usize,
    /// Projection width; heads must divide it.
    pub d_model: usize,
    pub heads: usize,
    /// Scale on the residual attention contribution.
    pub gain: f32,
    /// Scale on the query/key projections; larger values sharpen the
    /// attention weights.
    pub qk_gain: f32,
    /// Coefficient on the latent inside the noise prediction. Values above
    /// one make the sampling trajectory contract its starting noise harder,
    /// so cached tokens carry content rather than per-frame noise.
    pub z_gain: f32,
    /// Timestep embedding: `t_scale * (t / T) + t_bias` added to all channels.
    pub t_scale: f32,
    pub t_bias: f32,
    /// Seed for the projection weights.
    pub seed: u64,
}

impl Default for ToyDenoiserParams {
    fn default() -> Self {
        Self {
            blocks: 3,
            d_model: 8,
            heads: 2,
            gain: 1.0,
            qk_gain: 2.0,
            z_gain: 1.4,
            t_scale: 0.5,
            t_bias: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
struct Block {
    weights: ProjectionWeights,
    out_proj: Vec<f32>,
    attn: AttentionConfig,
}

/// Per-token RMS normalization over the channel axis.
pub fn rms_normalize(x: &TokenGrid) -> Result<TokenGrid> {
    let d = x.d();
    let mut data = Vec::with_capacity(x.values().len());
    for i in 0..x.tokens() {
        let token = x.token_at(i);
        let ms: f32 = token.iter().map(|v| v * v).sum::<f32>() / d as f32;
        let inv = 1.0 / (ms + 1e-6).sqrt();
        data.extend(token.iter().map(|v| v * inv));
    }
    TokenGrid::new(x.h(), x.w(), d, data)
}

/// A stack of attention blocks with residual connections: each block
/// RMS-normalizes the running latent per token, projects it to
/// query/key/value grids, runs the attention mechanism configured for it,
/// projects back, and adds the result. The normalization keeps cached
/// tokens bounded frame over frame; without it the residual chain diverges
/// across a video. Deterministic for a fixed seed.
#[derive(Debug, Clone)]
pub struct ToyAttentionDenoiser {
    blocks: Vec<Block>,
    d_in: usize,
    d_model: usize,
    heads: usize,
    t_scale: f32,
    t_bias: f32,
    z_gain: f32,
}

impl ToyAttentionDenoiser {
    /// Build with seeded orthonormal-ish projections for `d_in`-channel
    /// latents. Every block starts on the full flow-guided configuration.
    pub fn seeded(d_in: usize, params: &ToyDenoiserParams) -> Result<Self> {
        if params.blocks == 0 {
            return Err(Error::invalid("denoiser needs at least one block"));
        }
        if !(params.gain.is_finite()
            && params.t_scale.is_finite()
            && params.t_bias.is_finite()
            && params.qk_gain.is_finite()
            && params.z_gain.is_finite())
        {
            return Err(Error::invalid("denoiser scalar parameters must be finite"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut blocks = Vec::with_capacity(params.blocks);
        for b in 0..params.blocks {
            let weights = ProjectionWeights::seeded(d_in, params.d_model, params.heads, &mut rng)?
                .scale_qk(params.qk_gain);
            // Every block reads all channels but writes its own channel
            // band, so each block's guidance matters on its own: partial
            // flow-guided placements leave some bands unguided.
            let mut out_proj = orthonormal_ish(params.d_model, d_in, &mut rng);
            for row in 0..params.d_model {
                for col in 0..d_in {
                    if col % params.blocks == b {
                        out_proj[row * d_in + col] *= params.gain;
                    } else {
                        out_proj[row * d_in + col] = 0.0;
                    }
                }
            }
            blocks.push(Block { weights, out_proj, attn: AttentionConfig::full() });
        }
        Ok(Self {
            blocks,
            d_in,
            d_model: params.d_model,
            heads: params.heads,
            t_scale: params.t_scale,
            t_bias: params.t_bias,
            z_gain: params.z_gain,
        })
    }

    /// Same weights, with every block's mechanism resolved from `cfg`:
    /// selected layers run flow-guided attention; the rest keep plain
    /// self-attention (the unmodified layer behavior).
    pub fn with_attention(&self, cfg: &AttentionConfig) -> Result<ToyAttentionDenoiser> {
        cfg.validate()?;
        let mut out = self.clone();
        for (idx, block) in out.blocks.iter_mut().enumerate() {
            block.attn = match cfg.mechanism {
                Mechanism::SelfAttention | Mechanism::CrossFrame => cfg.clone(),
                Mechanism::FlowGuided => {
                    if cfg.selects_layer(idx) {
                        cfg.clone()
                    } else {
                        AttentionConfig {
                            mechanism: Mechanism::SelfAttention,
                            use_anchor: false,
                            warp_q: false,
                            warp_kv: false,
                            layer_selection: None,
                        }
                    }
                }
            };
        }
        Ok(out)
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_model(&self) -> usize {
        self.d_model
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn block_config(&self, idx: usize) -> Option<&AttentionConfig> {
        self.blocks.get(idx).map(|b| &b.attn)
    }
}

impl Denoiser for ToyAttentionDenoiser {
    fn predict(
        &self,
        z: &TokenGrid,
        t: usize,
        t_total: usize,
        ctx: Option<&AttentionContext<'_>>,
    ) -> Result<DenoiserOutput> {
        if z.d() != self.d_in {
            return Err(Error::shape(format!(
                "denoiser expects {} channels, latent has {}",
                self.d_in,
                z.d()
            )));
        }
        if let Some(c) = ctx {
            if c.prev.len() != self.blocks.len() || c.anchor.len() != self.blocks.len() {
                return Err(Error::shape(format!(
                    "context carries {} prev / {} anchor layers, denoiser has {}",
                    c.prev.len(),
                    c.anchor.len(),
                    self.blocks.len()
                )));
            }
        }
        if t_total == 0 {
            return Err(Error::invalid("t_total must be positive"));
        }
        let embed = self.t_scale * (t as f32 / t_total as f32) + self.t_bias;
        let mut x = z.add_scalar(embed)?;
        let mut tokens = Vec::with_capacity(self.blocks.len());
        for (idx, block) in self.blocks.iter().enumerate() {
            let normed = rms_normalize(&x)?;
            let (q, k, v) = project_qkv(&normed, &block.weights)?;
            let attn_out = match ctx {
                None => scaled_dot_attention(&q, &k, &v, self.heads)?,
                Some(c) => match block.attn.mechanism {
                    Mechanism::SelfAttention => scaled_dot_attention(&q, &k, &v, self.heads)?,
                    Mechanism::CrossFrame => {
                        cross_frame_attention(&q, &c.anchor[idx].k, &c.anchor[idx].v, self.heads)?
                    }
                    Mechanism::FlowGuided => flow_guided_attention(
                        &q,
                        &k,
                        &v,
                        &c.prev[idx],
                        &c.anchor[idx],
                        c.flow,
                        c.mask,
                        &block.attn,
                        self.heads,
                    )?,
                },
            };
            let delta = project_tokens(&attn_out, &block.out_proj, self.d_in)?;
            x = x.add(&delta)?;
            tokens.push(LayerTokens { q, k, v });
        }
        if self.z_gain != 1.0 {
            x = x.add(&z.scale(self.z_gain - 1.0)?)?;
        }
        Ok(DenoiserOutput { eps: x, tokens })
    }
}
