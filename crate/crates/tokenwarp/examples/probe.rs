use tokenwarp::metrics::ablation_report_with;
use tokenwarp::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(|s| s.as_str()).unwrap_or("canon");
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(11);
    let dseed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0);

    let bundle = gen_scene(&SceneSpec::default()).unwrap();
    let mut cfg = TranslationConfig::new(seed);
    cfg.steps = 10;
    if std::env::var("PER_STEP").is_ok() { cfg.cache_mode = CacheMode::PerTimestep; }
    let qk: f32 = std::env::var("QK").ok().and_then(|s| s.parse().ok()).unwrap_or(2.0);
    let zg: f32 = std::env::var("ZG").ok().and_then(|s| s.parse().ok()).unwrap_or(1.4);
    let den = ToyAttentionDenoiser::seeded(3, &ToyDenoiserParams { seed: dseed, qk_gain: qk, z_gain: zg, ..Default::default() }).unwrap();
    let variants: Vec<AttentionConfig> = if mode == "canon" {
        vec![
            AttentionConfig::baseline(),
            AttentionConfig::q_warp(),
            AttentionConfig::kv_warp(),
            AttentionConfig::full(),
        ]
    } else {
        let mut v = vec![AttentionConfig::full()];
        for m in 1u32..7 {
            let layers: Vec<usize> = (0..3).filter(|b| m & (1 << b) != 0).collect();
            v.push(AttentionConfig::full().with_layers(layers));
        }
        v.push(AttentionConfig::baseline());
        v
    };
    let rows = ablation_report_with(&bundle, &den, &variants, &cfg).unwrap();
    let full_row = rows.iter().find(|r| r.variant == "full").unwrap();
    let we_ok = rows.iter().all(|r| r.variant == "full" || full_row.warp_err < r.warp_err);
    let tc_ok = rows.iter().all(|r| r.variant == "full" || full_row.tem_con > r.tem_con);
    for r in &rows {
        println!("  {:<22} warp_err={:.6} tem_con={:.6}", r.variant, r.warp_err, r.tem_con);
    }
    println!("seed={seed} dseed={dseed} mode={mode}: warp_ok={we_ok} temcon_ok={tc_ok}");
}
