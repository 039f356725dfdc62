//! Estimate flow with the block-matching fallback and derive an occlusion
//! mask from forward-backward consistency, then compare both against a
//! synthetic scene's analytic ground truth.
//!
//! ```text
//! cargo run --example estimate_flow
//! ```

use tokenwarp::{
    block_match_flow, estimate_occlusion, gen_scene, Background, BlockMatchParams, OcclusionParams,
    SceneObject, SceneSpec, ShapeKind,
};

fn main() -> tokenwarp::Result<()> {
    let spec = SceneSpec {
        h: 40,
        w: 40,
        n: 2,
        background: Background::Checker,
        objects: vec![SceneObject {
            shape: ShapeKind::Rect,
            size: 12.0,
            color: [0.9, 0.3, 0.1],
            velocity: (3.0, 0.0),
            position: (12.0, 20.0),
        }],
        seed: 3,
        clamp_motion: false,
    };
    let bundle = gen_scene(&spec)?;
    let prev = bundle.video.frame(0)?;
    let next = bundle.video.frame(1)?;

    let params = BlockMatchParams { block: 7, radius: 4, levels: 2 };
    let bwd = block_match_flow(&prev, &next, &params)?;
    let fwd = block_match_flow(&next, &prev, &params)?;

    // Endpoint error against the analytic backward flow.
    let truth = &bundle.bwd_flows[0];
    let mut err = 0.0f64;
    for i in 0..bwd.u().len() {
        let du = (bwd.u()[i] - truth.u()[i]) as f64;
        let dv = (bwd.v()[i] - truth.v()[i]) as f64;
        err += (du * du + dv * dv).sqrt();
    }
    println!("mean endpoint error: {:.3} px", err / bwd.u().len() as f64);

    let mask = estimate_occlusion(&bwd, &fwd, &OcclusionParams::default())?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (e, a) in mask.values().iter().zip(bundle.occlusion[0].values()) {
        inter += (*e == 0.0 && *a == 0.0) as usize;
        union += (*e == 0.0 || *a == 0.0) as usize;
    }
    println!(
        "occlusion IoU vs analytic: {:.3} ({} estimated, {} true occluded pixels)",
        inter as f64 / union as f64,
        mask.values().iter().filter(|&&m| m == 0.0).count(),
        bundle.occlusion[0].values().iter().filter(|&&m| m == 0.0).count(),
    );

    // The soft variant decays smoothly instead of thresholding.
    let soft = estimate_occlusion(&bwd, &fwd, &OcclusionParams { soft: true, ..Default::default() })?;
    let mean: f64 = soft.values().iter().map(|&v| v as f64).sum::<f64>() / soft.values().len() as f64;
    println!("soft mask mean validity: {mean:.3}");
    Ok(())
}
