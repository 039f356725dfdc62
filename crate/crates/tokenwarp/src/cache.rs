//! Per-layer token storage carried across frames: the previous frame's
//! query/key/value grids plus the immutable anchor keys/values.

use crate::attention::{AnchorTokens, LayerTokens};
use crate::error::{Error, Result};
use crate::grid::{FlowField, OcclusionMask};
use serde::{Deserialize, Serialize};

/// Which denoising step's tokens the cache keeps for the next frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    /// Keep only the final denoising step's tokens (default).
    FinalStep,
    /// Keep tokens at every sampled timestep and reuse the matching one.
    PerTimestep,
}

impl Default for CacheMode {
    fn default() -> Self {
        CacheMode::FinalStep
    }
}

/// Token state after translating a frame: anchor keys/values from the first
/// frame (immutable for the rest of the run) and the previous frame's
/// queries/keys/values, both indexed `[cached step][layer]`.
///
/// A cache holding a single step entry serves that entry at every timestep;
/// one built per-timestep serves the entry matching the current step index.
#[derive(Debug, Clone)]
pub struct TokenCache {
    anchor: Vec<Vec<AnchorTokens>>,
    prev: Vec<Vec<LayerTokens>>,
    frame_index: usize,
}

fn validate_steps(steps: &[Vec<LayerTokens>]) -> Result<()> {
    let first = steps
        .first()
        .ok_or_else(|| Error::invalid("token cache needs at least one step entry"))?;
    if first.is_empty() {
        return Err(Error::invalid("token cache needs at least one layer"));
    }
    for step in steps {
        if step.len() != first.len() {
            return Err(Error::shape("cached steps disagree on layer count"));
        }
        for (l, tokens) in step.iter().enumerate() {
            if !(tokens.q.same_shape(&tokens.k) && tokens.k.same_shape(&tokens.v)) {
                return Err(Error::shape(format!("cached layer {l} q/k/v shapes differ")));
            }
        }
    }
    Ok(())
}

impl TokenCache {
    /// Build the cache from the first frame's captured tokens; the anchor
    /// keys/values are copied from the same captures.
    pub fn from_first_frame(captures: Vec<Vec<LayerTokens>>) -> Result<Self> {
        validate_steps(&captures)?;
        let anchor = captures
            .iter()
            .map(|layers| {
                layers
                    .iter()
                    .map(|t| AnchorTokens { k: t.k.clone(), v: t.v.clone() })
                    .collect()
            })
            .collect();
        Ok(Self { anchor, prev: captures, frame_index: 0 })
    }

    /// Replace the previous-frame tokens after translating frame
    /// `frame_index`; the anchor entries stay untouched.
    pub fn replace_prev(&mut self, captures: Vec<Vec<LayerTokens>>, frame_index: usize) -> Result<()> {
        validate_steps(&captures)?;
        if captures.len() != self.prev.len() {
            return Err(Error::shape(format!(
                "cache update has {} step entries, expected {}",
                captures.len(),
                self.prev.len()
            )));
        }
        if captures[0].len() != self.layers() {
            return Err(Error::shape(format!(
                "cache update has {} layers, expected {}",
                captures[0].len(),
                self.layers()
            )));
        }
        self.prev = captures;
        self.frame_index = frame_index;
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.prev[0].len()
    }

    /// Number of cached step entries (1 in final-step mode).
    pub fn cached_steps(&self) -> usize {
        self.prev.len()
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    /// Previous-frame tokens to use at sampling step `step_idx`.
    pub fn prev_at(&self, step_idx: usize) -> Result<&[LayerTokens]> {
        let idx = if self.prev.len() == 1 { 0 } else { step_idx };
        self.prev
            .get(idx)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::invalid(format!("no cached tokens for step {step_idx}")))
    }

    /// Anchor tokens to use at sampling step `step_idx`.
    pub fn anchor_at(&self, step_idx: usize) -> Result<&[AnchorTokens]> {
        let idx = if self.anchor.len() == 1 { 0 } else { step_idx };
        self.anchor
            .get(idx)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::invalid(format!("no cached anchors for step {step_idx}")))
    }

    pub fn anchor_entries(&self) -> &[Vec<AnchorTokens>] {
        &self.anchor
    }

    pub fn prev_entries(&self) -> &[Vec<LayerTokens>] {
        &self.prev
    }

    /// Total number of stored f32 values; constant once frame 2 has been
    /// processed, no matter how many frames follow.
    pub fn total_values(&self) -> usize {
        let prev: usize = self
            .prev
            .iter()
            .flatten()
            .map(|t| t.q.values().len() + t.k.values().len() + t.v.values().len())
            .sum();
        let anchor: usize = self
            .anchor
            .iter()
            .flatten()
            .map(|t| t.k.values().len() + t.v.values().len())
            .sum();
        prev + anchor
    }
}

/// Everything flow-guided attention needs at one denoising step.
#[derive(Debug, Clone, Copy)]
pub struct AttentionContext<'a> {
    pub prev: &'a [LayerTokens],
    pub anchor: &'a [AnchorTokens],
    pub flow: &'a FlowField,
    pub mask: &'a OcclusionMask,
}
