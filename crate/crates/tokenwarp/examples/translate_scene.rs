//! The whole loop on one scene: translate every frame under flow-guided
//! attention and score the result with both metrics, against a per-frame
//! self-attention run for contrast.
//!
//! ```text
//! cargo run --release --example translate_scene
//! ```

use tokenwarp::*;

fn main() -> tokenwarp::Result<()> {
    let bundle = gen_scene(&SceneSpec::default())?;
    let frames: Vec<TokenGrid> = (0..bundle.video.n()).map(|i| bundle.video.frame(i)).collect::<Result<_>>()?;
    let denoiser = ToyAttentionDenoiser::seeded(3, &ToyDenoiserParams::default())?;

    let mut cfg = TranslationConfig::new(11);
    cfg.steps = 10;

    for (label, attention) in [
        ("flow_guided (full)", AttentionConfig::full()),
        ("cross_frame anchor", AttentionConfig::baseline()),
        (
            "per-frame self",
            AttentionConfig {
                mechanism: Mechanism::SelfAttention,
                use_anchor: false,
                warp_q: false,
                warp_kv: false,
                layer_selection: None,
            },
        ),
    ] {
        let mut run = cfg.clone();
        run.attention = attention;
        let (outputs, cache) = translate_video(&frames, &bundle.bwd_flows, &bundle.occlusion, &denoiser, &run)?;
        let video = VideoTensor::from_frames(&outputs)?;
        println!(
            "{label:<20} warp_err = {:.4}  tem_con = {:.4}  (cache holds {} values)",
            warp_error(&video, &bundle.bwd_flows, &bundle.occlusion, true)?,
            temporal_consistency(&video)?,
            cache.total_values(),
        );
    }
    Ok(())
}
