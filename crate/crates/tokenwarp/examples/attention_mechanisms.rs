//! The three attention paths side by side on one frame pair: plain
//! self-attention, anchor cross-frame attention, and flow-guided attention
//! over warped-and-fused tokens. Also shows the debug hook by writing the
//! attention-weight matrix to a TKWP container.
//!
//! ```text
//! cargo run --example attention_mechanisms
//! ```

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use tokenwarp::container::{self, RawTensor};
use tokenwarp::*;

fn main() -> tokenwarp::Result<()> {
    let (h, w, d, heads) = (8, 8, 8, 2);
    let mut rng = StdRng::seed_from_u64(5);
    let mut grid = |scale: f32| {
        TokenGrid::from_fn(h, w, d, |_, _, _| rng.gen_range(-scale..scale)).unwrap()
    };

    // Frame 1 tokens become the anchor and the cached previous frame.
    let (q1, k1, v1) = (grid(1.0), grid(1.0), grid(1.0));
    let (out1, anchor) = first_frame_attention(&q1, &k1, &v1, heads)?;
    let prev = LayerTokens { q: q1.clone(), k: k1.clone(), v: v1.clone() };

    // Frame 2 tokens, plus motion: everything shifted one pixel right.
    let (q2, k2, v2) = (grid(1.0), grid(1.0), grid(1.0));
    let flow = FlowField::constant(h, w, -1.0, 0.0)?;
    let mask = OcclusionMask::new(
        h,
        w,
        (0..h * w).map(|i| if i % w == 0 { 0.0 } else { 1.0 }).collect(),
    )?;

    let self_out = scaled_dot_attention(&q2, &k2, &v2, heads)?;
    let cross = cross_frame_attention(&q2, &anchor.k, &anchor.v, heads)?;
    let guided = flow_guided_attention(
        &q2,
        &k2,
        &v2,
        &prev,
        &anchor,
        &flow,
        &mask,
        &AttentionConfig::full(),
        heads,
    )?;

    let diff = |a: &TokenGrid, b: &TokenGrid| a.max_abs_diff(b).unwrap();
    println!("max |self - cross_frame|  = {:.4}", diff(&self_out, &cross));
    println!("max |self - flow_guided|  = {:.4}", diff(&self_out, &guided));
    println!("max |cross - flow_guided| = {:.4}", diff(&cross, &guided));
    println!("max |frame1 - flow_guided| = {:.4} (guided output leans on frame 1)", diff(&out1, &guided));

    // Debug hook: per-head weight matrices as a (heads, n_q, n_k) tensor.
    let (_, weights) = scaled_dot_attention_with_weights(&q2, &k2, &v2, heads, 0.0)?;
    let path = std::env::temp_dir().join("attention_weights.tkwp");
    container::write_tensor(
        &path,
        &RawTensor::new(
            vec![weights.heads as u64, weights.n_q as u64, weights.n_k as u64],
            weights.data.clone(),
        )?,
    )?;
    let row_sum: f32 = weights.row(0, 0).iter().sum();
    println!("wrote weight matrix to {} (row 0 sums to {row_sum:.6})", path.display());
    Ok(())
}
