//! Coarse-to-fine block-matching flow estimation.
//!
//! Stands in for a learned flow network when translating real inputs: SAD
//! matching over an image pyramid, returning backward flow (next => prev).

use crate::error::{Error, Result};
use crate::grid::{FlowField, TokenGrid};
use serde::{Deserialize, Serialize};

/// Block-matching search parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlockMatchParams {
    /// Patch side length; must be odd.
    pub block: usize,
    /// Search radius in pixels, per pyramid level.
    pub radius: usize,
    /// Pyramid levels; level 0 is full resolution.
    pub levels: usize,
}

impl Default for BlockMatchParams {
    fn default() -> Self {
        Self { block: 9, radius: 4, levels: 3 }
    }
}

impl BlockMatchParams {
    fn validate(&self) -> Result<()> {
        if self.block % 2 == 0 || self.block == 0 {
            return Err(Error::invalid("block side must be odd and positive"));
        }
        if self.radius == 0 {
            return Err(Error::invalid("search radius must be at least 1"));
        }
        if self.levels == 0 {
            return Err(Error::invalid("pyramid needs at least one level"));
        }
        Ok(())
    }
}

/// 2x2 average pooling over every channel; odd trailing rows/cols dropped.
fn downscale(frame: &TokenGrid) -> Result<TokenGrid> {
    let (h, w, d) = (frame.h() / 2, frame.w() / 2, frame.d());
    TokenGrid::from_fn(h, w, d, |y, x, ch| {
        0.25 * (frame.get(2 * y, 2 * x, ch)
            + frame.get(2 * y, 2 * x + 1, ch)
            + frame.get(2 * y + 1, 2 * x, ch)
            + frame.get(2 * y + 1, 2 * x + 1, ch))
    })
}

/// Per-channel-summed SAD between a block centered at `(cy, cx)` in `next`
/// and one centered at `(cy + dv, cx + du)` in `prev`; samples border-clamp.
fn block_sad(next: &TokenGrid, prev: &TokenGrid, cy: usize, cx: usize, dv: i64, du: i64, half: i64) -> f64 {
    let (h, w, d) = (next.h() as i64, next.w() as i64, next.d());
    let clamp = |v: i64, hi: i64| v.clamp(0, hi - 1) as usize;
    let mut acc = 0.0f64;
    for oy in -half..=half {
        for ox in -half..=half {
            let ny = clamp(cy as i64 + oy, h);
            let nx = clamp(cx as i64 + ox, w);
            let py = clamp(cy as i64 + oy + dv, h);
            let px = clamp(cx as i64 + ox + du, w);
            let a = next.token(ny, nx);
            let b = prev.token(py, px);
            for ch in 0..d {
                acc += (a[ch] - b[ch]).abs() as f64;
            }
        }
    }
    acc
}

/// Search around `(base_v, base_u)` and return the best total displacement.
/// Ties prefer the smallest displacement magnitude, then the smallest
/// `(v, u)` pair.
fn refine(
    next: &TokenGrid,
    prev: &TokenGrid,
    cy: usize,
    cx: usize,
    base_v: i64,
    base_u: i64,
    radius: i64,
    half: i64,
) -> (i64, i64) {
    let mut best: Option<(f64, i64, i64, i64)> = None;
    for dv in -radius..=radius {
        for du in -radius..=radius {
            let tv = base_v + dv;
            let tu = base_u + du;
            let sad = block_sad(next, prev, cy, cx, tv, tu, half);
            let mag = tv * tv + tu * tu;
            let cand = (sad, mag, tv, tu);
            let better = match &best {
                None => true,
                Some(b) => {
                    (cand.0, cand.1, cand.2, cand.3) < (b.0, b.1, b.2, b.3)
                }
            };
            if better {
                best = Some(cand);
            }
        }
    }
    let b = best.expect("non-empty search window");
    (b.2, b.3)
}

/// Dense backward flow (next => prev) by pyramid SAD block matching.
pub fn block_match_flow(prev: &TokenGrid, next: &TokenGrid, params: &BlockMatchParams) -> Result<FlowField> {
    params.validate()?;
    if !prev.same_shape(next) {
        return Err(Error::shape("block_match_flow: frame shapes differ"));
    }
    if prev.h() < params.block || prev.w() < params.block {
        return Err(Error::invalid(format!(
            "frame {}x{} smaller than block {}",
            prev.h(),
            prev.w(),
            params.block
        )));
    }

    // Build pyramids, stopping before a level would shrink below the block.
    let mut prev_pyr = vec![prev.clone()];
    let mut next_pyr = vec![next.clone()];
    for _ in 1..params.levels {
        let p = prev_pyr.last().unwrap();
        if p.h() / 2 < params.block || p.w() / 2 < params.block {
            break;
        }
        prev_pyr.push(downscale(p)?);
        next_pyr.push(downscale(next_pyr.last().unwrap())?);
    }

    let half = (params.block / 2) as i64;
    let radius = params.radius as i64;
    let mut flow_v: Vec<i64> = Vec::new();
    let mut flow_u: Vec<i64> = Vec::new();
    for level in (0..prev_pyr.len()).rev() {
        let p = &prev_pyr[level];
        let n = &next_pyr[level];
        let (h, w) = (n.h(), n.w());
        let coarse_w = if level + 1 < prev_pyr.len() { prev_pyr[level + 1].w() } else { 0 };
        let coarse_h = if level + 1 < prev_pyr.len() { prev_pyr[level + 1].h() } else { 0 };
        let mut nv = vec![0i64; h * w];
        let mut nu = vec![0i64; h * w];
        for y in 0..h {
            for x in 0..w {
                let (bv, bu) = if coarse_w > 0 {
                    let cy = (y / 2).min(coarse_h - 1);
                    let cx = (x / 2).min(coarse_w - 1);
                    (2 * flow_v[cy * coarse_w + cx], 2 * flow_u[cy * coarse_w + cx])
                } else {
                    (0, 0)
                };
                let (tv, tu) = refine(n, p, y, x, bv, bu, radius, half);
                nv[y * w + x] = tv;
                nu[y * w + x] = tu;
            }
        }
        flow_v = nv;
        flow_u = nu;
    }

    FlowField::new(
        next.h(),
        next.w(),
        flow_u.into_iter().map(|v| v as f32).collect(),
        flow_v.into_iter().map(|v| v as f32).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn noise_frame(rng: &mut StdRng, h: usize, w: usize) -> TokenGrid {
        TokenGrid::from_fn(h, w, 1, |_, _, _| rng.gen_range(0.0..1.0)).unwrap()
    }

    fn shift_right(frame: &TokenGrid, by: usize) -> TokenGrid {
        TokenGrid::from_fn(frame.h(), frame.w(), frame.d(), |y, x, ch| {
            frame.get(y, x.saturating_sub(by), ch)
        })
        .unwrap()
    }

    #[test]
    fn identical_frames_yield_zero_flow() {
        let mut rng = StdRng::seed_from_u64(1);
        let frame = noise_frame(&mut rng, 20, 20);
        let params = BlockMatchParams { block: 5, radius: 3, levels: 2 };
        let flow = block_match_flow(&frame, &frame, &params).unwrap();
        assert!(flow.u().iter().all(|&v| v == 0.0));
        assert!(flow.v().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn integer_shift_recovered_in_interior() {
        let mut rng = StdRng::seed_from_u64(2);
        let prev = noise_frame(&mut rng, 24, 24);
        let next = shift_right(&prev, 2);
        let params = BlockMatchParams { block: 5, radius: 3, levels: 1 };
        let flow = block_match_flow(&prev, &next, &params).unwrap();
        for y in 4..20 {
            for x in 4..20 {
                let (u, v) = flow.at(y, x);
                assert_eq!((u, v), (-2.0, 0.0), "at ({y},{x})");
            }
        }
    }

    #[test]
    fn noisy_shift_stays_under_half_pixel() {
        let mut rng = StdRng::seed_from_u64(3);
        let prev = noise_frame(&mut rng, 32, 32);
        let clean_next = shift_right(&prev, 2);
        let next = TokenGrid::from_fn(32, 32, 1, |y, x, ch| {
            clean_next.get(y, x, ch) + rng.gen_range(-0.02..0.02)
        })
        .unwrap();
        let params = BlockMatchParams { block: 7, radius: 3, levels: 1 };
        let flow = block_match_flow(&prev, &next, &params).unwrap();
        let mut err = 0.0f64;
        let mut count = 0usize;
        for y in 5..27 {
            for x in 5..27 {
                let (u, v) = flow.at(y, x);
                err += (((u + 2.0).powi(2) + v.powi(2)) as f64).sqrt();
                count += 1;
            }
        }
        let mean_epe = err / count as f64;
        assert!(mean_epe < 0.5, "mean EPE {mean_epe}");
    }

    #[test]
    fn frame_smaller_than_block_rejected() {
        let frame = TokenGrid::filled(4, 4, 1, 0.0).unwrap();
        let params = BlockMatchParams { block: 5, radius: 1, levels: 1 };
        assert!(block_match_flow(&frame, &frame, &params).is_err());
    }

    #[test]
    fn even_block_rejected() {
        let frame = TokenGrid::filled(8, 8, 1, 0.0).unwrap();
        let params = BlockMatchParams { block: 4, radius: 1, levels: 1 };
        assert!(block_match_flow(&frame, &frame, &params).is_err());
    }
}
