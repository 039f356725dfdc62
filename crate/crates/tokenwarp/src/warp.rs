//! Flow resizing, backward bilinear warping, occlusion-mask fusion, and
//! forward-backward occlusion estimation.
//!
//! All functions are pure; sample coordinates are clamped to the grid border
//! (edge replication) so no synthetic zeros leak in at frame boundaries.

use crate::error::{Error, Result};
use crate::grid::{FlowField, OcclusionMask, TokenGrid};
use serde::{Deserialize, Serialize};

/// Thresholds for forward-backward consistency checking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OcclusionParams {
    /// Quadratic term on the flow magnitudes.
    pub alpha: f32,
    /// Constant slack term.
    pub beta: f32,
    /// Emit a smooth mask instead of a binary one.
    pub soft: bool,
}

impl Default for OcclusionParams {
    fn default() -> Self {
        Self { alpha: 0.01, beta: 0.5, soft: false }
    }
}

impl OcclusionParams {
    fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) || !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::invalid("occlusion alpha/beta must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Resample one scalar plane to a new size: coverage-weighted area averaging
/// on shrinking axes, pixel-center linear interpolation on growing axes.
/// Both passes are separable 1-D resamples.
pub(crate) fn resample_plane(src: &[f32], h: usize, w: usize, th: usize, tw: usize) -> Vec<f32> {
    let rows = resample_axis_major(src, h, w, tw);
    // rows is h x tw; resample columns by transposing twice.
    let t = transpose(&rows, h, tw);
    let cols = resample_axis_major(&t, tw, h, th);
    transpose(&cols, tw, th)
}

fn transpose(src: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; src.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

/// Resample the minor (contiguous) axis of a `rows x cols` plane to `target`.
fn resample_axis_major(src: &[f32], rows: usize, cols: usize, target: usize) -> Vec<f32> {
    if target == cols {
        return src.to_vec();
    }
    let mut out = vec![0.0f32; rows * target];
    if target < cols {
        // Area average: output cell k covers [k*s, (k+1)*s) in source cells.
        let s = cols as f64 / target as f64;
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            for k in 0..target {
                let lo = k as f64 * s;
                let hi = (k + 1) as f64 * s;
                let mut acc = 0.0f64;
                let first = lo.floor() as usize;
                let last = (hi.ceil() as usize).min(cols);
                for c in first..last {
                    let cover = (hi.min((c + 1) as f64) - lo.max(c as f64)).max(0.0);
                    acc += row[c] as f64 * cover;
                }
                out[r * target + k] = (acc / s) as f32;
            }
        }
    } else {
        // Linear interpolation between source pixel centers.
        let scale = cols as f64 / target as f64;
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            for k in 0..target {
                let x = ((k as f64 + 0.5) * scale - 0.5).clamp(0.0, (cols - 1) as f64);
                let x0 = x.floor() as usize;
                let x1 = (x0 + 1).min(cols - 1);
                let f = (x - x0 as f64) as f32;
                out[r * target + k] = row[x0] * (1.0 - f) + row[x1] * f;
            }
        }
    }
    out
}

/// Resample a flow field to `(target_h, target_w)` and rescale its
/// displacements into the target grid's pixel units.
pub fn resize_flow(flow: &FlowField, target_h: usize, target_w: usize) -> Result<FlowField> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::invalid("resize_flow target size must be positive"));
    }
    if target_h == flow.h() && target_w == flow.w() {
        return FlowField::new(target_h, target_w, flow.u().to_vec(), flow.v().to_vec());
    }
    let su = target_w as f32 / flow.w() as f32;
    let sv = target_h as f32 / flow.h() as f32;
    let mut u = resample_plane(flow.u(), flow.h(), flow.w(), target_h, target_w);
    let mut v = resample_plane(flow.v(), flow.h(), flow.w(), target_h, target_w);
    for x in &mut u {
        *x *= su;
    }
    for x in &mut v {
        *x *= sv;
    }
    FlowField::new(target_h, target_w, u, v)
}

/// Resample an occlusion mask to a new size, clamping back into [0, 1].
pub fn resize_mask(mask: &OcclusionMask, target_h: usize, target_w: usize) -> Result<OcclusionMask> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::invalid("resize_mask target size must be positive"));
    }
    let m = resample_plane(mask.values(), mask.h(), mask.w(), target_h, target_w);
    OcclusionMask::new(target_h, target_w, m.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

#[inline]
fn bilinear_taps(coord: f32, limit: usize) -> (usize, usize, f32) {
    let c = coord.clamp(0.0, (limit - 1) as f32);
    let i0 = c.floor() as usize;
    let i1 = (i0 + 1).min(limit - 1);
    (i0, i1, c - i0 as f32)
}

/// Backward-warp a token grid: `out(y, x) = grid(x + u, y + v)` with bilinear
/// interpolation, channels handled independently, coordinates border-clamped.
pub fn backward_warp(grid: &TokenGrid, flow: &FlowField) -> Result<TokenGrid> {
    if grid.h() != flow.h() || grid.w() != flow.w() {
        return Err(Error::shape(format!(
            "backward_warp: grid ({}, {}) vs flow ({}, {})",
            grid.h(),
            grid.w(),
            flow.h(),
            flow.w()
        )));
    }
    let (h, w, d) = (grid.h(), grid.w(), grid.d());
    let mut data = Vec::with_capacity(h * w * d);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.at(y, x);
            let (x0, x1, fx) = bilinear_taps(x as f32 + u, w);
            let (y0, y1, fy) = bilinear_taps(y as f32 + v, h);
            let w00 = (1.0 - fx) * (1.0 - fy);
            let w10 = fx * (1.0 - fy);
            let w01 = (1.0 - fx) * fy;
            let w11 = fx * fy;
            for ch in 0..d {
                data.push(
                    grid.get(y0, x0, ch) * w00
                        + grid.get(y0, x1, ch) * w10
                        + grid.get(y1, x0, ch) * w01
                        + grid.get(y1, x1, ch) * w11,
                );
            }
        }
    }
    TokenGrid::new(h, w, d, data)
}

/// Occlusion-gated fusion: `out = m * warped + (1 - m) * current`, the mask
/// broadcast over channels.
pub fn fuse_tokens(warped: &TokenGrid, current: &TokenGrid, mask: &OcclusionMask) -> Result<TokenGrid> {
    if !warped.same_shape(current) {
        return Err(Error::shape("fuse_tokens: warped and current shapes differ"));
    }
    if mask.h() != warped.h() || mask.w() != warped.w() {
        return Err(Error::shape("fuse_tokens: mask resolution differs from grids"));
    }
    let d = warped.d();
    let mut data = Vec::with_capacity(warped.values().len());
    for (i, &m) in mask.values().iter().enumerate() {
        let a = &warped.values()[i * d..(i + 1) * d];
        let b = &current.values()[i * d..(i + 1) * d];
        for ch in 0..d {
            data.push(m * a[ch] + (1.0 - m) * b[ch]);
        }
    }
    TokenGrid::new(warped.h(), warped.w(), d, data)
}

/// Estimate an occlusion mask by forward-backward flow consistency.
///
/// For pixel `p` the round trip `r = f_bwd(p) + f_fwd(p + f_bwd(p))` should
/// vanish where the correspondence is valid; a pixel is kept when
/// `|r|^2 < alpha * (|f_bwd|^2 + |f_fwd o|^2) + beta`. With `soft = true` the
/// mask decays as `exp(-|r|^2 / (alpha * magnitudes + beta))`.
pub fn estimate_occlusion(
    f_bwd: &FlowField,
    f_fwd: &FlowField,
    params: &OcclusionParams,
) -> Result<OcclusionMask> {
    params.validate()?;
    if f_bwd.h() != f_fwd.h() || f_bwd.w() != f_fwd.w() {
        return Err(Error::shape("estimate_occlusion: flow shapes differ"));
    }
    let (h, w) = (f_bwd.h(), f_bwd.w());
    let mut m = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (bu, bv) = f_bwd.at(y, x);
            // Sample the forward flow at the backward-displaced position.
            let (x0, x1, fx) = bilinear_taps(x as f32 + bu, w);
            let (y0, y1, fy) = bilinear_taps(y as f32 + bv, h);
            let w00 = (1.0 - fx) * (1.0 - fy);
            let w10 = fx * (1.0 - fy);
            let w01 = (1.0 - fx) * fy;
            let w11 = fx * fy;
            let sample = |comp: &[f32]| {
                comp[y0 * w + x0] * w00
                    + comp[y0 * w + x1] * w10
                    + comp[y1 * w + x0] * w01
                    + comp[y1 * w + x1] * w11
            };
            let fu = sample(f_fwd.u());
            let fv = sample(f_fwd.v());
            let r2 = (bu + fu).powi(2) + (bv + fv).powi(2);
            let mag = bu * bu + bv * bv + fu * fu + fv * fv;
            let bound = params.alpha * mag + params.beta;
            let value = if params.soft {
                (-r2 / bound).exp().clamp(0.0, 1.0)
            } else if r2 < bound {
                1.0
            } else {
                0.0
            };
            m.push(value);
        }
    }
    OcclusionMask::new(h, w, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    // Independent scalar oracle: 4-neighbor interpolation written directly
    // against the definition, one pixel and channel at a time.
    fn warp_oracle(grid: &TokenGrid, flow: &FlowField) -> TokenGrid {
        let (h, w, d) = (grid.h(), grid.w(), grid.d());
        TokenGrid::from_fn(h, w, d, |y, x, ch| {
            let (u, v) = flow.at(y, x);
            let sx = (x as f32 + u).clamp(0.0, (w - 1) as f32);
            let sy = (y as f32 + v).clamp(0.0, (h - 1) as f32);
            let x0 = sx.floor() as usize;
            let y0 = sy.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let fx = sx - x0 as f32;
            let fy = sy - y0 as f32;
            let top = grid.get(y0, x0, ch) * (1.0 - fx) + grid.get(y0, x1, ch) * fx;
            let bot = grid.get(y1, x0, ch) * (1.0 - fx) + grid.get(y1, x1, ch) * fx;
            top * (1.0 - fy) + bot * fy
        })
        .unwrap()
    }

    fn random_grid(rng: &mut StdRng, h: usize, w: usize, d: usize) -> TokenGrid {
        TokenGrid::from_fn(h, w, d, |_, _, _| rng.gen_range(-2.0..2.0)).unwrap()
    }

    #[test]
    fn zero_flow_is_identity_bitwise() {
        let mut rng = StdRng::seed_from_u64(11);
        let grid = random_grid(&mut rng, 5, 4, 3);
        let out = backward_warp(&grid, &FlowField::zero(5, 4).unwrap()).unwrap();
        assert_eq!(out.values(), grid.values());
    }

    #[test]
    fn integer_shift_copies_left_token() {
        let grid = TokenGrid::new(1, 2, 1, vec![1.0, 2.0]).unwrap();
        let flow = FlowField::new(1, 2, vec![0.0, -1.0], vec![0.0, 0.0]).unwrap();
        let out = backward_warp(&grid, &flow).unwrap();
        assert_eq!(out.values(), &[1.0, 1.0]);
    }

    #[test]
    fn half_pixel_shift_interpolates_midpoint() {
        let grid = TokenGrid::new(1, 2, 1, vec![1.0, 2.0]).unwrap();
        let flow = FlowField::new(1, 2, vec![0.0, -0.5], vec![0.0, 0.0]).unwrap();
        let out = backward_warp(&grid, &flow).unwrap();
        assert!((out.values()[1] - 1.5).abs() < 1e-6);
    }

    #[test]
    fn random_warp_matches_oracle() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..20 {
            let grid = random_grid(&mut rng, 6, 7, 3);
            let flow = FlowField::from_fn(6, 7, |_, _| {
                (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))
            })
            .unwrap();
            let out = backward_warp(&grid, &flow).unwrap();
            let expect = warp_oracle(&grid, &flow);
            assert!(out.max_abs_diff(&expect).unwrap() < 1e-5);
        }
    }

    #[test]
    fn warp_shape_mismatch_rejected() {
        let grid = TokenGrid::filled(2, 2, 1, 0.0).unwrap();
        let flow = FlowField::zero(3, 2).unwrap();
        assert!(backward_warp(&grid, &flow).is_err());
    }

    #[test]
    fn warp_is_linear_in_grid() {
        let mut rng = StdRng::seed_from_u64(21);
        let g1 = random_grid(&mut rng, 5, 5, 2);
        let g2 = random_grid(&mut rng, 5, 5, 2);
        let flow = FlowField::from_fn(5, 5, |_, _| {
            (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5))
        })
        .unwrap();
        let (a, b) = (0.7f32, -1.3f32);
        let combined = g1.scale(a).unwrap().add(&g2.scale(b).unwrap()).unwrap();
        let lhs = backward_warp(&combined, &flow).unwrap();
        let rhs = backward_warp(&g1, &flow)
            .unwrap()
            .scale(a)
            .unwrap()
            .add(&backward_warp(&g2, &flow).unwrap().scale(b).unwrap())
            .unwrap();
        assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-5);
    }

    #[test]
    fn fuse_extremes_and_blend() {
        let warped = TokenGrid::filled(2, 2, 3, 4.0).unwrap();
        let current = TokenGrid::filled(2, 2, 3, 0.0).unwrap();
        let ones = OcclusionMask::filled(2, 2, 1.0).unwrap();
        let zeros = OcclusionMask::filled(2, 2, 0.0).unwrap();
        let quarter = OcclusionMask::filled(2, 2, 0.25).unwrap();
        assert_eq!(fuse_tokens(&warped, &current, &ones).unwrap().values(), warped.values());
        assert_eq!(fuse_tokens(&warped, &current, &zeros).unwrap().values(), current.values());
        for &v in fuse_tokens(&warped, &current, &quarter).unwrap().values() {
            assert!((v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn fuse_same_grid_is_identity() {
        let mut rng = StdRng::seed_from_u64(3);
        let g = random_grid(&mut rng, 4, 3, 2);
        let mask = OcclusionMask::new(4, 3, (0..12).map(|i| (i as f32) / 11.0).collect()).unwrap();
        let out = fuse_tokens(&g, &g, &mask).unwrap();
        assert!(out.max_abs_diff(&g).unwrap() < 1e-6);
    }

    #[test]
    fn resize_constant_flow_scales_with_resolution() {
        let flow = FlowField::constant(8, 8, 4.0, 2.0).unwrap();
        let out = resize_flow(&flow, 4, 4).unwrap();
        for i in 0..16 {
            assert!((out.u()[i] - 2.0).abs() < 1e-6);
            assert!((out.v()[i] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn resize_same_size_is_identity() {
        let mut rng = StdRng::seed_from_u64(5);
        let flow = FlowField::from_fn(6, 5, |_, _| {
            (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0))
        })
        .unwrap();
        let out = resize_flow(&flow, 6, 5).unwrap();
        for i in 0..30 {
            assert!((out.u()[i] - flow.u()[i]).abs() < 1e-6);
            assert!((out.v()[i] - flow.v()[i]).abs() < 1e-6);
        }
    }

    // Brute-force block-average oracle for an integer downscale ratio.
    #[test]
    fn downscale_matches_block_average_oracle() {
        let mut rng = StdRng::seed_from_u64(9);
        let flow = FlowField::from_fn(16, 16, |_, _| {
            (rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0))
        })
        .unwrap();
        let out = resize_flow(&flow, 4, 4).unwrap();
        for by in 0..4 {
            for bx in 0..4 {
                let mut su = 0.0f64;
                let mut sv = 0.0f64;
                for y in 0..4 {
                    for x in 0..4 {
                        let (u, v) = flow.at(by * 4 + y, bx * 4 + x);
                        su += u as f64;
                        sv += v as f64;
                    }
                }
                let eu = (su / 16.0) as f32 * (4.0 / 16.0);
                let ev = (sv / 16.0) as f32 * (4.0 / 16.0);
                let (gu, gv) = out.at(by, bx);
                assert!((gu - eu).abs() < 1e-5, "u at ({by},{bx}): {gu} vs {eu}");
                assert!((gv - ev).abs() < 1e-5, "v at ({by},{bx}): {gv} vs {ev}");
            }
        }
    }

    #[test]
    fn resize_rejects_zero_target() {
        let flow = FlowField::zero(4, 4).unwrap();
        assert!(resize_flow(&flow, 0, 4).is_err());
        assert!(resize_flow(&flow, 4, 0).is_err());
    }

    #[test]
    fn consistent_flows_are_unoccluded() {
        let zero = FlowField::zero(6, 6).unwrap();
        let m = estimate_occlusion(&zero, &zero, &OcclusionParams::default()).unwrap();
        assert!(m.values().iter().all(|&v| v == 1.0));

        let bwd = FlowField::constant(6, 6, 1.0, 0.0).unwrap();
        let fwd = FlowField::constant(6, 6, -1.0, 0.0).unwrap();
        let m = estimate_occlusion(&bwd, &fwd, &OcclusionParams::default()).unwrap();
        assert!(m.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn negating_both_constant_flows_keeps_mask() {
        let bwd = FlowField::constant(5, 5, 2.0, -1.0).unwrap();
        let fwd = FlowField::constant(5, 5, -1.0, 0.5).unwrap();
        let params = OcclusionParams { soft: true, ..OcclusionParams::default() };
        let a = estimate_occlusion(&bwd, &fwd, &params).unwrap();
        let b = estimate_occlusion(&bwd.negated(), &fwd.negated(), &params).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn soft_mask_decays_with_inconsistency() {
        let bwd = FlowField::constant(4, 4, 3.0, 0.0).unwrap();
        let fwd = FlowField::zero(4, 4).unwrap();
        let params = OcclusionParams { soft: true, ..OcclusionParams::default() };
        let m = estimate_occlusion(&bwd, &fwd, &params).unwrap();
        // |r|^2 = 9 against alpha * 9 + beta = 0.59.
        let expect = (-9.0f32 / 0.59).exp();
        for &v in m.values() {
            assert!((v - expect).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn fuse_identity_property(seed in 0u64..500) {
            let mut rng = StdRng::seed_from_u64(seed);
            let h = rng.gen_range(1..5);
            let w = rng.gen_range(1..5);
            let d = rng.gen_range(1..4);
            let g = random_grid(&mut rng, h, w, d);
            let mask = OcclusionMask::new(h, w, (0..h * w).map(|_| rng.gen_range(0.0..=1.0)).collect()).unwrap();
            let out = fuse_tokens(&g, &g, &mask).unwrap();
            prop_assert!(out.max_abs_diff(&g).unwrap() < 1e-6);
        }
    }
}
