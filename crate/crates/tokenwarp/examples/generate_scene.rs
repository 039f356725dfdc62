//! Render a synthetic scene with analytic ground-truth flow and occlusion,
//! then write everything as TKWP containers.
//!
//! ```text
//! cargo run --example generate_scene [out_dir]
//! ```

use std::path::PathBuf;

use tokenwarp::container;
use tokenwarp::{gen_scene, Background, SceneObject, SceneSpec, ShapeKind};

fn main() -> tokenwarp::Result<()> {
    let out_dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "scene_out".into()));

    let spec = SceneSpec {
        h: 48,
        w: 48,
        n: 8,
        background: Background::Checker,
        objects: vec![
            SceneObject {
                shape: ShapeKind::Rect,
                size: 12.0,
                color: [0.85, 0.3, 0.2],
                velocity: (2.0, 0.0),
                position: (10.0, 14.0),
            },
            SceneObject {
                shape: ShapeKind::Disc,
                size: 10.0,
                color: [0.2, 0.5, 0.9],
                velocity: (-1.0, 1.5),
                position: (34.0, 16.0),
            },
        ],
        seed: 7,
        clamp_motion: false,
    };
    let bundle = gen_scene(&spec)?;

    std::fs::create_dir_all(&out_dir)?;
    container::write_tensor(&out_dir.join("video.tkwp"), &container::video_tensor(&bundle.video))?;
    for i in 1..spec.n {
        container::write_tensor(
            &out_dir.join(format!("fwd_{i:03}.tkwp")),
            &container::flow_tensor(&bundle.fwd_flows[i - 1]),
        )?;
        container::write_tensor(
            &out_dir.join(format!("bwd_{i:03}.tkwp")),
            &container::flow_tensor(&bundle.bwd_flows[i - 1]),
        )?;
        container::write_tensor(
            &out_dir.join(format!("occ_{i:03}.tkwp")),
            &container::mask_tensor(&bundle.occlusion[i - 1]),
        )?;
    }

    println!("scene: {}x{} pixels, {} frames, {} objects", spec.w, spec.h, spec.n, spec.objects.len());
    for (i, mask) in bundle.occlusion.iter().enumerate() {
        let occluded = mask.values().iter().filter(|&&m| m < 0.5).count();
        println!("  pair {} -> {}: {occluded} occluded pixels", i, i + 1);
    }
    println!("wrote containers to {}", out_dir.display());
    Ok(())
}
