//! Token projections and the three attention mechanisms: plain
//! self-attention, anchor cross-frame attention, and flow-guided attention
//! over occlusion-fused, flow-warped tokens with anchor tokens prepended
//! along the token axis.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FlowField, OcclusionMask, TokenGrid};
use crate::warp::{backward_warp, fuse_tokens};

/// One layer's query/key/value grids for a single frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTokens {
    pub q: TokenGrid,
    pub k: TokenGrid,
    pub v: TokenGrid,
}

/// Anchor key/value grids shared with every later frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorTokens {
    pub k: TokenGrid,
    pub v: TokenGrid,
}

/// Query/key/value projection matrices, `d_in x d_model` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionWeights {
    wq: Vec<f32>,
    wk: Vec<f32>,
    wv: Vec<f32>,
    d_in: usize,
    d_model: usize,
    heads: usize,
}

impl ProjectionWeights {
    pub fn new(
        wq: Vec<f32>,
        wk: Vec<f32>,
        wv: Vec<f32>,
        d_in: usize,
        d_model: usize,
        heads: usize,
    ) -> Result<Self> {
        if d_in == 0 || d_model == 0 || heads == 0 {
            return Err(Error::invalid("projection dims must be positive"));
        }
        if d_model % heads != 0 {
            return Err(Error::invalid(format!(
                "heads {heads} must divide d_model {d_model}"
            )));
        }
        for (name, w) in [("wq", &wq), ("wk", &wk), ("wv", &wv)] {
            if w.len() != d_in * d_model {
                return Err(Error::invalid(format!(
                    "{name} length {} != d_in*d_model = {}",
                    w.len(),
                    d_in * d_model
                )));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("{name} contains non-finite values")));
            }
        }
        Ok(Self { wq, wk, wv, d_in, d_model, heads })
    }

    /// Identity projections, `d_model = d_in`, for tests and demos.
    pub fn identity(d: usize, heads: usize) -> Result<Self> {
        let mut eye = vec![0.0f32; d * d];
        for i in 0..d {
            eye[i * d + i] = 1.0;
        }
        Self::new(eye.clone(), eye.clone(), eye, d, d, heads)
    }

    /// Orthonormal-ish random projections from the given rng stream. The
    /// shorter matrix dimension is Gram-Schmidt orthonormalized so token
    /// geometry survives the projection.
    pub fn seeded<R: rand::Rng>(d_in: usize, d_model: usize, heads: usize, rng: &mut R) -> Result<Self> {
        let mut draw = || orthonormal_ish(d_in, d_model, rng);
        let (wq, wk, wv) = (draw(), draw(), draw());
        Self::new(wq, wk, wv, d_in, d_model, heads)
    }

    /// Scale the query and key projections; sharpens the attention logits.
    pub fn scale_qk(mut self, factor: f32) -> Self {
        for v in self.wq.iter_mut().chain(self.wk.iter_mut()) {
            *v *= factor;
        }
        self
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
}

/// Random `rows x cols` matrix whose shorter dimension is orthonormalized.
pub(crate) fn orthonormal_ish<R: rand::Rng>(rows: usize, cols: usize, rng: &mut R) -> Vec<f32> {
    use rand_distr::StandardNormal;
    let mut m: Vec<Vec<f64>> = (0..rows.min(cols))
        .map(|_| (0..rows.max(cols)).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    // Modified Gram-Schmidt over the vectors of the longer dimension.
    for i in 0..m.len() {
        for j in 0..i {
            let dot: f64 = m[i].iter().zip(&m[j]).map(|(a, b)| a * b).sum();
            for t in 0..m[i].len() {
                m[i][t] -= dot * m[j][t];
            }
        }
        let norm: f64 = m[i].iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for t in 0..m[i].len() {
            m[i][t] /= norm;
        }
    }
    let mut out = vec![0.0f32; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            // m is stored shorter-dim-major.
            let v = if rows <= cols { m[r][c] } else { m[c][r] };
            out[r * cols + c] = v as f32;
        }
    }
    out
}

fn matmul_tokens(z: &TokenGrid, w: &[f32], d_in: usize, d_out: usize) -> Result<TokenGrid> {
    let n = z.tokens();
    let mut data = vec![0.0f32; n * d_out];
    for i in 0..n {
        let token = z.token_at(i);
        let out = &mut data[i * d_out..(i + 1) * d_out];
        for (r, &t) in token.iter().enumerate() {
            let row = &w[r * d_out..(r + 1) * d_out];
            for c in 0..d_out {
                out[c] += t * row[c];
            }
        }
    }
    let _ = d_in;
    TokenGrid::new(z.h(), z.w(), d_out, data)
}

/// Per-token projection of a latent grid into query/key/value grids.
pub fn project_qkv(z: &TokenGrid, w: &ProjectionWeights) -> Result<(TokenGrid, TokenGrid, TokenGrid)> {
    if z.d() != w.d_in {
        return Err(Error::shape(format!(
            "project_qkv: z has {} channels, weights expect {}",
            z.d(),
            w.d_in
        )));
    }
    let q = matmul_tokens(z, &w.wq, w.d_in, w.d_model)?;
    let k = matmul_tokens(z, &w.wk, w.d_in, w.d_model)?;
    let v = matmul_tokens(z, &w.wv, w.d_in, w.d_model)?;
    Ok((q, k, v))
}

/// Multiply a grid of tokens by a `d_in x d_out` matrix.
pub fn project_tokens(z: &TokenGrid, w: &[f32], d_out: usize) -> Result<TokenGrid> {
    if w.len() != z.d() * d_out {
        return Err(Error::shape(format!(
            "project_tokens: matrix length {} != {} * {}",
            w.len(),
            z.d(),
            d_out
        )));
    }
    matmul_tokens(z, w, z.d(), d_out)
}

/// Per-head attention weight matrices, `heads x n_q x n_k`, rows summing
/// to one. Used by the debug hook.
#[derive(Debug, Clone)]
pub struct AttentionWeights {
    pub heads: usize,
    pub n_q: usize,
    pub n_k: usize,
    pub data: Vec<f32>,
}

impl AttentionWeights {
    #[inline]
    pub fn at(&self, head: usize, qi: usize, kj: usize) -> f32 {
        self.data[(head * self.n_q + qi) * self.n_k + kj]
    }

    pub fn row(&self, head: usize, qi: usize) -> &[f32] {
        let base = (head * self.n_q + qi) * self.n_k;
        &self.data[base..base + self.n_k]
    }
}

/// exp(x) for the softmax path (x <= 0 after max subtraction): Cody-Waite
/// range reduction to 2^n * e^r with a degree-6 series, relative error below
/// 1e-6. Branchless (inputs clamp to -87, so deeply negative logits yield
/// ~1e-38 instead of 0) so the per-row loop vectorizes.
#[inline]
fn softmax_exp(x: f32) -> f32 {
    const LN2_HI: f32 = 6.931_457_5e-1;
    const LN2_LO: f32 = 1.428_606_8e-6;
    // Round to nearest via the shift-add trick; |t| < 127 so the magic
    // constant 1.5 * 2^23 is safe and avoids a libm roundf call.
    const MAGIC: f32 = 12_582_912.0;
    let x = x.max(-87.0);
    let n = (x * std::f32::consts::LOG2_E + MAGIC) - MAGIC;
    let r = (x - n * LN2_HI) - n * LN2_LO;
    let p = 1.0
        + r * (1.0
            + r * (0.5
                + r * (1.0 / 6.0 + r * (1.0 / 24.0 + r * (1.0 / 120.0 + r * (1.0 / 720.0))))));
    f32::from_bits((((n as i32) + 127) << 23) as u32) * p
}

fn sdpa_impl(
    q: &TokenGrid,
    k: &TokenGrid,
    v: &TokenGrid,
    heads: usize,
    logit_shift: f32,
    mut weights_out: Option<&mut Vec<f32>>,
) -> Result<TokenGrid> {
    let d = q.d();
    if k.d() != d || v.d() != d {
        return Err(Error::shape(format!(
            "attention dims differ: q {}, k {}, v {}",
            d,
            k.d(),
            v.d()
        )));
    }
    if k.tokens() != v.tokens() || k.h() != v.h() || k.w() != v.w() {
        return Err(Error::shape("attention: key/value token counts differ"));
    }
    if heads == 0 || d % heads != 0 {
        return Err(Error::invalid(format!("heads {heads} must divide d_model {d}")));
    }
    let d_h = d / heads;
    let scale = 1.0 / (d_h as f32).sqrt();
    let n_q = q.tokens();
    let n_k = k.tokens();
    let mut out = vec![0.0f32; n_q * d];
    let mut logits = vec![0.0f32; n_k];
    if let Some(w) = weights_out.as_deref_mut() {
        w.clear();
        w.resize(heads * n_q * n_k, 0.0);
    }
    // Transposed per-channel key/value planes so every hot loop runs
    // contiguously over the key axis.
    let planes = |grid: &TokenGrid, lo: usize| -> Vec<f32> {
        let n = grid.tokens();
        let mut p = vec![0.0f32; d_h * n];
        for i in 0..n {
            let token = grid.token_at(i);
            for c in 0..d_h {
                p[c * n + i] = token[lo + c];
            }
        }
        p
    };
    for g in 0..heads {
        let lo = g * d_h;
        let kp = planes(k, lo);
        let vp = planes(v, lo);
        let head_weights = weights_out
            .as_deref_mut()
            .map(|w| &mut w[g * n_q * n_k..(g + 1) * n_q * n_k]);
        head_pass(
            &HeadArgs { q, kp: &kp, vp: &vp, n_q, n_k, d, d_h, lo, scale, logit_shift },
            &mut logits,
            &mut out,
            head_weights,
        );
    }
    TokenGrid::new(q.h(), q.w(), d, out)
}

/// Sum in f64 with four accumulators; keeps long softmax rows stable
/// without serializing on one add chain.
fn row_sum(values: &[f32]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut chunks = values.chunks_exact(4);
    for ch in &mut chunks {
        acc[0] += ch[0] as f64;
        acc[1] += ch[1] as f64;
        acc[2] += ch[2] as f64;
        acc[3] += ch[3] as f64;
    }
    let mut tail = 0.0f64;
    for &v in chunks.remainder() {
        tail += v as f64;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

struct HeadArgs<'a> {
    q: &'a TokenGrid,
    kp: &'a [f32],
    vp: &'a [f32],
    n_q: usize,
    n_k: usize,
    d: usize,
    d_h: usize,
    lo: usize,
    scale: f32,
    logit_shift: f32,
}

fn head_pass(a: &HeadArgs<'_>, logits: &mut [f32], out: &mut [f32], mut weights: Option<&mut [f32]>) {
    let n_k = a.n_k;
    for i in 0..a.n_q {
        let qt = &a.q.token_at(i)[a.lo..a.lo + a.d_h];
        logits.fill(a.logit_shift);
        for c in 0..a.d_h {
            let qc = qt[c] * a.scale;
            let plane = &a.kp[c * n_k..(c + 1) * n_k];
            for (slot, &kv) in logits.iter_mut().zip(plane) {
                *slot += qc * kv;
            }
        }
        let max_logit = logits.iter().fold(f32::NEG_INFINITY, |m, &l| m.max(l));
        for slot in logits.iter_mut() {
            *slot = softmax_exp(*slot - max_logit);
        }
        let inv = (1.0 / row_sum(logits)) as f32;
        let out_tok = &mut out[i * a.d + a.lo..i * a.d + a.lo + a.d_h];
        for c in 0..a.d_h {
            let plane = &a.vp[c * n_k..(c + 1) * n_k];
            let mut acc = [0.0f32; 4];
            let mut pairs = logits.chunks_exact(4).zip(plane.chunks_exact(4));
            for (lc, vc) in &mut pairs {
                acc[0] += lc[0] * vc[0];
                acc[1] += lc[1] * vc[1];
                acc[2] += lc[2] * vc[2];
                acc[3] += lc[3] * vc[3];
            }
            let mut tail = 0.0f32;
            for (l, v) in logits
                .chunks_exact(4)
                .remainder()
                .iter()
                .zip(plane.chunks_exact(4).remainder())
            {
                tail += l * v;
            }
            out_tok[c] = ((acc[0] + acc[1]) + (acc[2] + acc[3]) + tail) * inv;
        }
        if let Some(w) = weights.as_deref_mut() {
            for (j, &e) in logits.iter().enumerate() {
                w[i * n_k + j] = e * inv;
            }
        }
    }
}

/// Multi-head scaled dot-product attention over the key/value token axis.
/// Key/value grids may carry a different token count than the queries.
pub fn scaled_dot_attention(q: &TokenGrid, k: &TokenGrid, v: &TokenGrid, heads: usize) -> Result<TokenGrid> {
    sdpa_impl(q, k, v, heads, 0.0, None)
}

/// Attention plus the full per-head weight matrix; `logit_shift` is added to
/// every logit before the softmax (debug hook).
pub fn scaled_dot_attention_with_weights(
    q: &TokenGrid,
    k: &TokenGrid,
    v: &TokenGrid,
    heads: usize,
    logit_shift: f32,
) -> Result<(TokenGrid, AttentionWeights)> {
    let mut data = Vec::new();
    let out = sdpa_impl(q, k, v, heads, logit_shift, Some(&mut data))?;
    Ok((
        out,
        AttentionWeights { heads, n_q: q.tokens(), n_k: k.tokens(), data },
    ))
}

/// Attention of the current frame's queries against shared anchor tokens.
pub fn cross_frame_attention(
    q_i: &TokenGrid,
    k_anc: &TokenGrid,
    v_anc: &TokenGrid,
    heads: usize,
) -> Result<TokenGrid> {
    scaled_dot_attention(q_i, k_anc, v_anc, heads)
}

/// Plain self-attention on the first frame, returning the anchor tokens to
/// store for every later frame.
pub fn first_frame_attention(
    q_1: &TokenGrid,
    k_1: &TokenGrid,
    v_1: &TokenGrid,
    heads: usize,
) -> Result<(TokenGrid, AnchorTokens)> {
    let out = scaled_dot_attention(q_1, k_1, v_1, heads)?;
    Ok((out, AnchorTokens { k: k_1.clone(), v: v_1.clone() }))
}

/// Which attention mechanism a translation run (or one block) uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    /// Frame-local attention only.
    #[serde(rename = "self")]
    SelfAttention,
    /// Queries attend to the anchor frame's keys/values.
    CrossFrame,
    /// Occlusion-fused, flow-warped tokens with optional anchor concat.
    FlowGuided,
}

/// Mechanism selection and warping switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttentionConfig {
    pub mechanism: Mechanism,
    /// Prepend the anchor keys/values along the token axis.
    pub use_anchor: bool,
    /// Warp-and-fuse the previous frame's queries.
    pub warp_q: bool,
    /// Warp-and-fuse the previous frame's keys and values.
    pub warp_kv: bool,
    /// Layers that run flow-guided attention; `None` means all layers.
    /// Layers outside the selection fall back to cross-frame attention when
    /// `use_anchor` is set, plain self-attention otherwise.
    pub layer_selection: Option<BTreeSet<usize>>,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl AttentionConfig {
    /// Anchor-only cross-frame attention.
    pub fn baseline() -> Self {
        Self {
            mechanism: Mechanism::CrossFrame,
            use_anchor: true,
            warp_q: false,
            warp_kv: false,
            layer_selection: None,
        }
    }

    /// Flow-guided with query warping only.
    pub fn q_warp() -> Self {
        Self { warp_q: true, warp_kv: false, ..Self::full() }
    }

    /// Flow-guided with key/value warping only.
    pub fn kv_warp() -> Self {
        Self { warp_q: false, warp_kv: true, ..Self::full() }
    }

    /// Full mechanism: query + key/value warping plus anchor tokens.
    pub fn full() -> Self {
        Self {
            mechanism: Mechanism::FlowGuided,
            use_anchor: true,
            warp_q: true,
            warp_kv: true,
            layer_selection: None,
        }
    }

    /// Restrict flow-guided attention to the given layer indices.
    pub fn with_layers<I: IntoIterator<Item = usize>>(mut self, layers: I) -> Self {
        self.layer_selection = Some(layers.into_iter().collect());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.mechanism == Mechanism::CrossFrame && !self.use_anchor {
            return Err(Error::invalid("cross_frame mechanism requires use_anchor"));
        }
        Ok(())
    }

    /// Whether layer `idx` runs the flow-guided path.
    pub fn selects_layer(&self, idx: usize) -> bool {
        self.mechanism == Mechanism::FlowGuided
            && self.layer_selection.as_ref().map_or(true, |s| s.contains(&idx))
    }

    /// Stable human-readable label for reports.
    pub fn label(&self) -> String {
        match self.mechanism {
            Mechanism::SelfAttention => "self".to_string(),
            Mechanism::CrossFrame => "baseline".to_string(),
            Mechanism::FlowGuided => {
                let base = match (self.warp_q, self.warp_kv) {
                    (true, true) => "full",
                    (true, false) => "q_warp",
                    (false, true) => "kv_warp",
                    (false, false) => "no_warp",
                };
                let mut label = base.to_string();
                if !self.use_anchor {
                    label.push_str("_no_anchor");
                }
                if let Some(sel) = &self.layer_selection {
                    let ids: Vec<String> = sel.iter().map(|i| i.to_string()).collect();
                    label.push_str("_blocks_");
                    label.push_str(&ids.join("_"));
                }
                label
            }
        }
    }
}

/// Flow-guided attention for one frame and one layer: warp-and-fuse the
/// previous frame's tokens per the config, prepend anchor keys/values when
/// enabled, and run a single attention pass.
#[allow(clippy::too_many_arguments)]
pub fn flow_guided_attention(
    q_i: &TokenGrid,
    k_i: &TokenGrid,
    v_i: &TokenGrid,
    prev: &LayerTokens,
    anchor: &AnchorTokens,
    flow: &FlowField,
    mask: &OcclusionMask,
    cfg: &AttentionConfig,
    heads: usize,
) -> Result<TokenGrid> {
    cfg.validate()?;
    for (name, g) in [("k_i", k_i), ("v_i", v_i), ("prev.q", &prev.q), ("prev.k", &prev.k), ("prev.v", &prev.v)] {
        if g.h() != q_i.h() || g.w() != q_i.w() {
            return Err(Error::shape(format!("flow_guided_attention: {name} resolution differs from q_i")));
        }
    }
    if flow.h() != q_i.h() || flow.w() != q_i.w() {
        return Err(Error::shape(format!(
            "flow_guided_attention: flow at {}x{} but tokens at {}x{}; resize the flow first",
            flow.h(),
            flow.w(),
            q_i.h(),
            q_i.w()
        )));
    }
    if mask.h() != q_i.h() || mask.w() != q_i.w() {
        return Err(Error::shape("flow_guided_attention: mask resolution differs from tokens"));
    }

    let q_fused = if cfg.warp_q {
        fuse_tokens(&backward_warp(&prev.q, flow)?, q_i, mask)?
    } else {
        q_i.clone()
    };
    let (k_fused, v_fused) = if cfg.warp_kv {
        (
            fuse_tokens(&backward_warp(&prev.k, flow)?, k_i, mask)?,
            fuse_tokens(&backward_warp(&prev.v, flow)?, v_i, mask)?,
        )
    } else {
        (k_i.clone(), v_i.clone())
    };

    if cfg.use_anchor {
        let k_all = TokenGrid::stack_rows(&anchor.k, &k_fused)?;
        let v_all = TokenGrid::stack_rows(&anchor.v, &v_fused)?;
        scaled_dot_attention(&q_fused, &k_all, &v_all, heads)
    } else {
        scaled_dot_attention(&q_fused, &k_fused, &v_fused, heads)
    }
}
