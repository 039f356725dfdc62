use std::time::Instant;
use tokenwarp::*;
use rand::{Rng, SeedableRng};

fn main() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(1);
    let q = TokenGrid::from_fn(32, 32, 8, |_,_,_| rng.gen_range(-1.0f32..1.0)).unwrap();
    let k = TokenGrid::from_fn(64, 32, 8, |_,_,_| rng.gen_range(-1.0f32..1.0)).unwrap();
    let v = TokenGrid::from_fn(64, 32, 8, |_,_,_| rng.gen_range(-1.0f32..1.0)).unwrap();
    let start = Instant::now();
    let mut sink = 0.0f32;
    for _ in 0..100 {
        let out = scaled_dot_attention(&q, &k, &v, 2).unwrap();
        sink += out.values()[0];
    }
    println!("100 sdpa calls (1024q x 2048k x 8d): {:?}  sink {sink}", start.elapsed());

    let den = ToyAttentionDenoiser::seeded(3, &ToyDenoiserParams::default()).unwrap();
    let z = TokenGrid::from_fn(32, 32, 3, |_,_,_| rng.gen_range(-1.0f32..1.0)).unwrap();
    let start = Instant::now();
    for _ in 0..20 {
        let out = den.predict(&z, 500, 1000, None).unwrap();
        sink += out.eps.values()[0];
    }
    println!("20 denoiser evals (self-attn, 1024 keys): {:?}  sink {sink}", start.elapsed());
}
