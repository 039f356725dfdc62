use tokenwarp::metrics::{temporal_consistency, warp_error};
use tokenwarp::*;

fn run(bundle: &SceneBundle, den: &ToyAttentionDenoiser, cfg: &TranslationConfig, att: AttentionConfig) -> VideoTensor {
    let frames: Vec<_> = (0..bundle.video.n()).map(|i| bundle.video.frame(i).unwrap()).collect();
    let mut c = cfg.clone();
    c.attention = att;
    let (outs, _) = translate_video(&frames, &bundle.bwd_flows, &bundle.occlusion, den, &c).unwrap();
    VideoTensor::from_frames(&outs).unwrap()
}

fn main() {
    let bundle = gen_scene(&SceneSpec::default()).unwrap();
    let den = ToyAttentionDenoiser::seeded(3, &ToyDenoiserParams::default()).unwrap();
    let mut cfg = TranslationConfig::new(11);
    cfg.steps = 10;
    let variants: Vec<(String, AttentionConfig)> = {
        let mut v = vec![
            ("baseline".into(), AttentionConfig::baseline()),
            ("full".into(), AttentionConfig::full()),
        ];
        for m in [1u32, 2, 4, 3, 5, 6] {
            let layers: Vec<usize> = (0..3).filter(|b| m & (1 << b) != 0).collect();
            let c = AttentionConfig::full().with_layers(layers.clone());
            v.push((c.label(), c));
        }
        v
    };
    for (label, att) in &variants {
        let vid_pf = run(&bundle, &den, &cfg, att.clone());
        let mut shared = cfg.clone();
        shared.noise_mode = NoiseMode::SharedSeed;
        let vid_sh = run(&bundle, &den, &shared, att.clone());
        let we_pf = warp_error(&vid_pf, &bundle.bwd_flows, &bundle.occlusion, true).unwrap();
        let we_sh = warp_error(&vid_sh, &bundle.bwd_flows, &bundle.occlusion, true).unwrap();
        let tc_pf = temporal_consistency(&vid_pf).unwrap();
        let tc_sh = temporal_consistency(&vid_sh).unwrap();
        println!(
            "{:<18} per-frame: we={:.4} tc={:.4}   shared: we={:.4} tc={:.4}",
            label, we_pf, tc_pf, we_sh, tc_sh
        );
    }
}
