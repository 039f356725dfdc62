//! Synthetic scenes with analytic ground-truth flow and occlusion: moving
//! rectangles and discs composited over flat, gradient, or checkered
//! backgrounds with sub-pixel placement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FlowField, OcclusionMask, VideoTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Background {
    Flat,
    Gradient,
    Checker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Rect,
    Disc,
}

/// One moving object: an axis-aligned square or a disc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub shape: ShapeKind,
    /// Side length for rects, diameter for discs, in pixels.
    pub size: f32,
    pub color: [f32; 3],
    /// Pixels per frame, `(vx, vy)`.
    pub velocity: (f32, f32),
    /// Center `(x, y)` at frame 0.
    pub position: (f32, f32),
}

/// Scene description; the generator derives frames, flows, and masks from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub h: usize,
    pub w: usize,
    /// Frame count.
    pub n: usize,
    pub background: Background,
    pub objects: Vec<SceneObject>,
    pub seed: u64,
    /// Clamp objects at the canvas border instead of rejecting the spec.
    pub clamp_motion: bool,
}

impl Default for SceneSpec {
    /// The canonical translating-square scene: a 10 px square crossing a
    /// 32x32 flat canvas at 1 px/frame for 16 frames.
    fn default() -> Self {
        Self {
            h: 32,
            w: 32,
            n: 16,
            background: Background::Flat,
            objects: vec![SceneObject {
                shape: ShapeKind::Rect,
                size: 10.0,
                color: [0.85, 0.35, 0.2],
                velocity: (1.0, 0.0),
                position: (8.0, 16.0),
            }],
            seed: 0,
            clamp_motion: false,
        }
    }
}

/// Generated frames plus the analytic motion ground truth. `bwd_flows[i]`
/// and `occlusion[i]` describe frame `i + 1` relative to frame `i`;
/// `fwd_flows[i]` maps frame `i` forward to frame `i + 1`.
#[derive(Debug, Clone)]
pub struct SceneBundle {
    pub video: VideoTensor,
    pub fwd_flows: Vec<FlowField>,
    pub bwd_flows: Vec<FlowField>,
    pub occlusion: Vec<OcclusionMask>,
}

/// Center of `obj` at frame `t`, clamped to keep the object inside the
/// canvas when the spec allows it.
fn center_at(spec: &SceneSpec, obj: &SceneObject, t: usize) -> (f32, f32) {
    let cx = obj.position.0 + t as f32 * obj.velocity.0;
    let cy = obj.position.1 + t as f32 * obj.velocity.1;
    if spec.clamp_motion {
        let half = obj.size / 2.0;
        (
            cx.clamp(half, spec.w as f32 - half),
            cy.clamp(half, spec.h as f32 - half),
        )
    } else {
        (cx, cy)
    }
}

/// Coverage of pixel cell `[x, x+1) x [y, y+1)` by the object at `center`.
fn coverage(obj: &SceneObject, center: (f32, f32), x: usize, y: usize) -> f32 {
    let half = obj.size / 2.0;
    match obj.shape {
        ShapeKind::Rect => {
            let ox = ((x as f32 + 1.0).min(center.0 + half) - (x as f32).max(center.0 - half)).clamp(0.0, 1.0);
            let oy = ((y as f32 + 1.0).min(center.1 + half) - (y as f32).max(center.1 - half)).clamp(0.0, 1.0);
            ox * oy
        }
        ShapeKind::Disc => {
            let dx = x as f32 + 0.5 - center.0;
            let dy = y as f32 + 0.5 - center.1;
            (half + 0.5 - (dx * dx + dy * dy).sqrt()).clamp(0.0, 1.0)
        }
    }
}

fn background_pixel(spec: &SceneSpec, shades: &[[f32; 3]; 2], x: usize, y: usize) -> [f32; 3] {
    match spec.background {
        Background::Flat => shades[0],
        Background::Gradient => {
            let fx = if spec.w > 1 { x as f32 / (spec.w - 1) as f32 } else { 0.0 };
            let fy = if spec.h > 1 { y as f32 / (spec.h - 1) as f32 } else { 0.0 };
            let t = 0.5 * (fx + fy);
            [
                shades[0][0] * (1.0 - t) + shades[1][0] * t,
                shades[0][1] * (1.0 - t) + shades[1][1] * t,
                shades[0][2] * (1.0 - t) + shades[1][2] * t,
            ]
        }
        Background::Checker => {
            let tile = ((x / 4) + (y / 4)) % 2;
            shades[tile]
        }
    }
}

/// Topmost object id covering each pixel (coverage >= 0.5, -1 for
/// background), plus a flag for anti-aliased pixels whose content mixes two
/// surfaces.
fn surface_ids(spec: &SceneSpec, t: usize) -> (Vec<i32>, Vec<bool>) {
    let mut ids = vec![-1i32; spec.h * spec.w];
    let mut mixed = vec![false; spec.h * spec.w];
    for (oi, obj) in spec.objects.iter().enumerate() {
        let c = center_at(spec, obj, t);
        for y in 0..spec.h {
            for x in 0..spec.w {
                let a = coverage(obj, c, x, y);
                if a >= 0.5 {
                    ids[y * spec.w + x] = oi as i32;
                }
                if a > 1e-4 && a < 1.0 - 1e-4 {
                    mixed[y * spec.w + x] = true;
                }
            }
        }
    }
    (ids, mixed)
}

/// Render frames and derive per-pair ground-truth flow and occlusion.
///
/// Backward flow inside an object is its negated per-frame displacement;
/// background flow is zero. A pixel is occluded (mask 0) when its backward
/// sample has no clean ancestor in the previous frame: the dis-occlusion
/// band behind a mover, a spot another object covered, or an anti-aliased
/// rim pixel whose content mixes two surfaces.
pub fn gen_scene(spec: &SceneSpec) -> Result<SceneBundle> {
    if spec.n == 0 {
        return Err(Error::invalid("scene needs at least one frame"));
    }
    if spec.h == 0 || spec.w == 0 {
        return Err(Error::invalid("scene canvas must be non-empty"));
    }
    // Objects must fit the canvas at frame 0, and at every later frame
    // unless clamping is enabled.
    for (oi, obj) in spec.objects.iter().enumerate() {
        if obj.size <= 0.0 || !obj.size.is_finite() {
            return Err(Error::invalid(format!("object {oi} size must be positive")));
        }
        let half = obj.size / 2.0;
        let frames_to_check = if spec.clamp_motion { 1 } else { spec.n };
        for t in 0..frames_to_check {
            let cx = obj.position.0 + t as f32 * obj.velocity.0;
            let cy = obj.position.1 + t as f32 * obj.velocity.1;
            let inside = cx - half >= 0.0
                && cx + half <= spec.w as f32
                && cy - half >= 0.0
                && cy + half <= spec.h as f32;
            if !inside {
                return Err(Error::invalid(format!(
                    "object {oi} leaves the {}x{} canvas at frame {t}",
                    spec.w, spec.h
                )));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut shades = [[0.0f32; 3]; 2];
    for shade in &mut shades {
        for ch in shade.iter_mut() {
            *ch = rng.gen_range(0.15..0.45);
        }
    }

    let mut data = Vec::with_capacity(spec.n * spec.h * spec.w * 3);
    for t in 0..spec.n {
        for y in 0..spec.h {
            for x in 0..spec.w {
                let mut px = background_pixel(spec, &shades, x, y);
                for obj in &spec.objects {
                    let a = coverage(obj, center_at(spec, obj, t), x, y);
                    if a > 0.0 {
                        for ch in 0..3 {
                            px[ch] = (1.0 - a) * px[ch] + a * obj.color[ch];
                        }
                    }
                }
                data.extend_from_slice(&px);
            }
        }
    }
    let video = VideoTensor::new(spec.n, spec.h, spec.w, 3, data)?;

    let mut fwd_flows = Vec::with_capacity(spec.n.saturating_sub(1));
    let mut bwd_flows = Vec::with_capacity(spec.n.saturating_sub(1));
    let mut occlusion = Vec::with_capacity(spec.n.saturating_sub(1));
    let (mut prev_ids, mut prev_mixed) = surface_ids(spec, 0);
    for t in 1..spec.n {
        let (ids, mixed) = surface_ids(spec, t);
        let displacement: Vec<(f32, f32)> = spec
            .objects
            .iter()
            .map(|obj| {
                let now = center_at(spec, obj, t);
                let before = center_at(spec, obj, t - 1);
                (now.0 - before.0, now.1 - before.1)
            })
            .collect();

        let bwd = FlowField::from_fn(spec.h, spec.w, |y, x| {
            match ids[y * spec.w + x] {
                -1 => (0.0, 0.0),
                oi => {
                    let d = displacement[oi as usize];
                    (-d.0, -d.1)
                }
            }
        })?;
        let fwd = FlowField::from_fn(spec.h, spec.w, |y, x| {
            match prev_ids[y * spec.w + x] {
                -1 => (0.0, 0.0),
                oi => displacement[oi as usize],
            }
        })?;
        let mask = OcclusionMask::new(
            spec.h,
            spec.w,
            (0..spec.h * spec.w)
                .map(|i| {
                    let (y, x) = (i / spec.w, i % spec.w);
                    if mixed[i] {
                        return 0.0;
                    }
                    let (u, v) = bwd.at(y, x);
                    let sx = (x as f32 + u).clamp(0.0, (spec.w - 1) as f32);
                    let sy = (y as f32 + v).clamp(0.0, (spec.h - 1) as f32);
                    let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
                    let (x1, y1) = ((x0 + 1).min(spec.w - 1), (y0 + 1).min(spec.h - 1));
                    let (fx, fy) = (sx - x0 as f32, sy - y0 as f32);
                    let taps = [
                        (x0, y0, (1.0 - fx) * (1.0 - fy)),
                        (x1, y0, fx * (1.0 - fy)),
                        (x0, y1, (1.0 - fx) * fy),
                        (x1, y1, fx * fy),
                    ];
                    let clean = taps.iter().all(|&(tx, ty, weight)| {
                        weight == 0.0
                            || (prev_ids[ty * spec.w + tx] == ids[i] && !prev_mixed[ty * spec.w + tx])
                    });
                    if clean {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
        )?;
        fwd_flows.push(fwd);
        bwd_flows.push(bwd);
        occlusion.push(mask);
        prev_ids = ids;
        prev_mixed = mixed;
    }

    Ok(SceneBundle { video, fwd_flows, bwd_flows, occlusion })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warp::{backward_warp, estimate_occlusion, OcclusionParams};

    fn static_spec() -> SceneSpec {
        SceneSpec {
            objects: vec![SceneObject {
                velocity: (0.0, 0.0),
                ..SceneSpec::default().objects[0]
            }],
            n: 4,
            ..SceneSpec::default()
        }
    }

    #[test]
    fn static_scene_has_zero_flow_and_full_masks() {
        let b = gen_scene(&static_spec()).unwrap();
        for f in &b.bwd_flows {
            assert!(f.u().iter().all(|&v| v == 0.0));
            assert!(f.v().iter().all(|&v| v == 0.0));
        }
        for m in &b.occlusion {
            assert!(m.values().iter().all(|&v| v == 1.0));
        }
        let f0 = b.video.frame(0).unwrap();
        for i in 1..b.video.n() {
            assert_eq!(b.video.frame(i).unwrap().values(), f0.values());
        }
    }

    #[test]
    fn interior_backward_flow_negates_velocity() {
        let b = gen_scene(&SceneSpec::default()).unwrap();
        // Frame 1: square centered at x = 9; probe its interior.
        let f = &b.bwd_flows[0];
        assert_eq!(f.at(16, 9), (-1.0, 0.0));
        assert_eq!(f.at(14, 7), (-1.0, 0.0));
        // Background stays put.
        assert_eq!(f.at(2, 2), (0.0, 0.0));
    }

    #[test]
    fn trailing_band_width_matches_integer_velocity() {
        let spec = SceneSpec {
            objects: vec![SceneObject {
                velocity: (3.0, 0.0),
                ..SceneSpec::default().objects[0]
            }],
            n: 3,
            ..SceneSpec::default()
        };
        let b = gen_scene(&spec).unwrap();
        let m = &b.occlusion[0];
        // Frame 1: square spans x in [6, 16); revealed band is [3, 6).
        for y in 12..20 {
            let zeros: Vec<usize> = (0..32).filter(|&x| m.at(y, x) == 0.0).collect();
            assert_eq!(zeros, vec![3, 4, 5], "row {y}");
        }
        // Rows outside the square are unoccluded.
        for x in 0..32 {
            assert_eq!(m.at(2, x), 1.0);
        }
    }

    #[test]
    fn object_escaping_canvas_rejected_unless_clamped() {
        let mut spec = SceneSpec::default();
        spec.objects[0].velocity = (4.0, 0.0);
        assert!(gen_scene(&spec).is_err());
        spec.clamp_motion = true;
        let b = gen_scene(&spec).unwrap();
        assert_eq!(b.video.n(), 16);
        // Once pinned at the wall the per-frame displacement collapses to 0.
        let last = b.bwd_flows.last().unwrap();
        assert!(last.u().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn warp_consistency_on_unoccluded_pixels() {
        for spec in [
            SceneSpec::default(),
            SceneSpec {
                objects: vec![SceneObject {
                    shape: ShapeKind::Disc,
                    size: 9.0,
                    color: [0.2, 0.6, 0.9],
                    velocity: (2.0, 1.0),
                    position: (10.0, 10.0),
                }],
                n: 6,
                background: Background::Gradient,
                ..SceneSpec::default()
            },
            // Sub-pixel motion over a textured background.
            SceneSpec {
                objects: vec![SceneObject {
                    shape: ShapeKind::Rect,
                    size: 8.0,
                    color: [0.9, 0.8, 0.1],
                    velocity: (0.75, -0.5),
                    position: (10.0, 20.0),
                }],
                n: 8,
                background: Background::Checker,
                ..SceneSpec::default()
            },
        ] {
            let b = gen_scene(&spec).unwrap();
            for i in 1..spec.n {
                let prev = b.video.frame(i - 1).unwrap();
                let cur = b.video.frame(i).unwrap();
                let warped = backward_warp(&prev, &b.bwd_flows[i - 1]).unwrap();
                let m = &b.occlusion[i - 1];
                for y in 0..spec.h {
                    for x in 0..spec.w {
                        if m.at(y, x) == 1.0 {
                            for ch in 0..3 {
                                let diff = (warped.get(y, x, ch) - cur.get(y, x, ch)).abs();
                                assert!(diff < 2e-2, "frame {i} at ({y},{x},{ch}): {diff}");
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn estimated_occlusion_matches_analytic_on_integer_scenes() {
        for vel in 1..=4 {
            let spec = SceneSpec {
                objects: vec![SceneObject {
                    velocity: (vel as f32, 0.0),
                    ..SceneSpec::default().objects[0]
                }],
                n: 4,
                ..SceneSpec::default()
            };
            let b = gen_scene(&spec).unwrap();
            let mut inter = 0usize;
            let mut union = 0usize;
            for i in 0..b.bwd_flows.len() {
                let est = estimate_occlusion(&b.bwd_flows[i], &b.fwd_flows[i], &OcclusionParams::default()).unwrap();
                for (e, a) in est.values().iter().zip(b.occlusion[i].values()) {
                    let e0 = *e == 0.0;
                    let a0 = *a == 0.0;
                    inter += (e0 && a0) as usize;
                    union += (e0 || a0) as usize;
                }
            }
            assert!(union > 0);
            let iou = inter as f64 / union as f64;
            assert!(iou >= 0.9, "velocity {vel}: IoU {iou}");
        }
    }
}
