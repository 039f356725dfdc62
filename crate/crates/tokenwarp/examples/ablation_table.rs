//! Compare attention variants on the default translating-square scene under
//! identical seeds and noise: the four mechanism variants plus every
//! flow-guided block placement.
//!
//! ```text
//! cargo run --release --example ablation_table
//! ```

use tokenwarp::{ablation_csv, ablation_report, AttentionConfig, SceneSpec, TranslationConfig};

fn main() -> tokenwarp::Result<()> {
    let bundle = tokenwarp::gen_scene(&SceneSpec::default())?;
    let mut cfg = TranslationConfig::new(11);
    cfg.steps = 10;

    let mut variants = vec![
        AttentionConfig::baseline(),
        AttentionConfig::q_warp(),
        AttentionConfig::kv_warp(),
        AttentionConfig::full(),
    ];
    for mask in 1u32..7 {
        let layers: Vec<usize> = (0..3).filter(|b| mask & (1 << b) != 0).collect();
        variants.push(AttentionConfig::full().with_layers(layers));
    }

    let rows = ablation_report(&bundle, 0, &variants, &cfg)?;
    print!("{}", ablation_csv(&rows));

    let best = rows.iter().min_by(|a, b| a.warp_err.partial_cmp(&b.warp_err).unwrap()).unwrap();
    println!("\nlowest warp error: {} ({:.6})", best.variant, best.warp_err);
    Ok(())
}
