//! Backward warping and occlusion-mask fusion on a small token grid:
//! the two ingredients that align the previous frame's tokens with the
//! current frame before attention.
//!
//! ```text
//! cargo run --example warp_tokens
//! ```

use tokenwarp::{backward_warp, fuse_tokens, FlowField, OcclusionMask, TokenGrid};

fn print_channel(label: &str, grid: &TokenGrid, ch: usize) {
    println!("{label}:");
    for y in 0..grid.h() {
        let row: Vec<String> = (0..grid.w()).map(|x| format!("{:5.2}", grid.get(y, x, ch))).collect();
        println!("  {}", row.join(" "));
    }
}

fn main() -> tokenwarp::Result<()> {
    // A bright 2x2 patch on a dark background.
    let prev = TokenGrid::from_fn(6, 8, 2, |y, x, ch| {
        if (2..4).contains(&y) && (2..4).contains(&x) {
            1.0 + ch as f32
        } else {
            0.1
        }
    })?;

    // The patch moved one pixel right and half a pixel down, so the
    // backward flow points one left and half up.
    let flow = FlowField::constant(6, 8, -1.0, -0.5)?;
    let warped = backward_warp(&prev, &flow)?;

    print_channel("previous frame (channel 0)", &prev, 0);
    print_channel("warped toward the current frame", &warped, 0);

    // Fuse with the current frame's tokens: pretend the right half of the
    // grid is occluded and must keep the current content.
    let current = TokenGrid::filled(6, 8, 2, 0.5)?;
    let mask = OcclusionMask::new(6, 8, (0..48).map(|i| if i % 8 < 4 { 1.0 } else { 0.0 }).collect())?;
    let fused = fuse_tokens(&warped, &current, &mask)?;
    print_channel("fused (left half from warp, right half current)", &fused, 0);

    // Zero flow is an exact identity.
    let same = backward_warp(&prev, &FlowField::zero(6, 8)?)?;
    println!("zero-flow warp identical: {}", same.values() == prev.values());
    Ok(())
}
