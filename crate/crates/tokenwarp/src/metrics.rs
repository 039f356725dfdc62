//! Evaluation metrics at desk scale: warp error against source flow and
//! temporal consistency via a deterministic pooled embedding, plus the
//! ablation runner comparing attention variants on one scene.
//!
//! All metric accumulation runs in f64.

use crate::attention::AttentionConfig;
use crate::denoiser::{ToyAttentionDenoiser, ToyDenoiserParams};
use crate::diffusion::{translate_video, TranslationConfig};
use crate::error::{Error, Result};
use crate::grid::{FlowField, OcclusionMask, VideoTensor};
use crate::synth::SceneBundle;
use crate::warp::backward_warp;

/// Mean squared difference between each frame and its flow-warped
/// predecessor, averaged over consecutive pairs. Flows come from the source
/// video; the frames are the edited ones. With `masked = true` only pixels
/// with mask > 0.5 count.
pub fn warp_error(
    video: &VideoTensor,
    bwd_flows: &[FlowField],
    masks: &[OcclusionMask],
    masked: bool,
) -> Result<f64> {
    let n = video.n();
    if bwd_flows.len() != n - 1 || masks.len() != n - 1 {
        return Err(Error::invalid(format!(
            "expected {} flows and masks for {} frames, got {} and {}",
            n - 1,
            n,
            bwd_flows.len(),
            masks.len()
        )));
    }
    if n < 2 {
        return Err(Error::invalid("warp_error needs at least two frames"));
    }
    let (h, w, c) = (video.h(), video.w(), video.c());
    let mut pair_sum = 0.0f64;
    for i in 1..n {
        let flow = &bwd_flows[i - 1];
        let mask = &masks[i - 1];
        if flow.h() != h || flow.w() != w || mask.h() != h || mask.w() != w {
            return Err(Error::shape(format!("flow/mask {} resolution differs from video", i - 1)));
        }
        let warped = backward_warp(&video.frame(i - 1)?, flow)?;
        let mut acc = 0.0f64;
        let mut count = 0usize;
        for y in 0..h {
            for x in 0..w {
                if masked && mask.at(y, x) <= 0.5 {
                    continue;
                }
                for ch in 0..c {
                    let diff = (warped.get(y, x, ch) - video.get(i, y, x, ch)) as f64;
                    acc += diff * diff;
                }
                count += 1;
            }
        }
        if count > 0 {
            pair_sum += acc / (count * c) as f64;
        }
    }
    Ok(pair_sum / (n - 1) as f64)
}

/// Deterministic frame embedding: every channel area-resampled to 16x16 and
/// flattened. Linear in the frame values.
fn embed_frame(video: &VideoTensor, i: usize) -> Result<Vec<f64>> {
    const POOL: usize = 16;
    let (h, w, c) = (video.h(), video.w(), video.c());
    let mut out = Vec::with_capacity(POOL * POOL * c);
    let mut plane = vec![0.0f32; h * w];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                plane[y * w + x] = video.get(i, y, x, ch);
            }
        }
        let pooled = crate::warp::resample_plane(&plane, h, w, POOL, POOL);
        out.extend(pooled.iter().map(|&v| v as f64));
    }
    Ok(out)
}

/// Mean cosine similarity between consecutive frame embeddings. Two
/// zero-norm embeddings count as similarity 1; one zero-norm counts as 0.
pub fn temporal_consistency(video: &VideoTensor) -> Result<f64> {
    let n = video.n();
    if n < 2 {
        return Err(Error::invalid("temporal_consistency needs at least two frames"));
    }
    let mut prev = embed_frame(video, 0)?;
    let mut total = 0.0f64;
    for i in 1..n {
        let cur = embed_frame(video, i)?;
        let dot: f64 = prev.iter().zip(&cur).map(|(a, b)| a * b).sum();
        let na: f64 = prev.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb: f64 = cur.iter().map(|b| b * b).sum::<f64>().sqrt();
        total += if na == 0.0 && nb == 0.0 {
            1.0
        } else if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        };
        prev = cur;
    }
    Ok(total / (n - 1) as f64)
}

/// One ablation run's metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub warp_err: f64,
    pub tem_con: f64,
}

/// Translate the bundle once per attention variant (identical seeds and
/// noise) and measure both metrics against the bundle's ground truth.
/// The denoiser is seeded from `denoiser_seed` with default toy dimensions.
pub fn ablation_report(
    bundle: &SceneBundle,
    denoiser_seed: u64,
    variants: &[AttentionConfig],
    cfg: &TranslationConfig,
) -> Result<Vec<AblationRow>> {
    let denoiser = ToyAttentionDenoiser::seeded(
        bundle.video.c(),
        &ToyDenoiserParams { seed: denoiser_seed, ..Default::default() },
    )?;
    ablation_report_with(bundle, &denoiser, variants, cfg)
}

/// As [`ablation_report`], with a caller-provided denoiser.
pub fn ablation_report_with(
    bundle: &SceneBundle,
    denoiser: &ToyAttentionDenoiser,
    variants: &[AttentionConfig],
    cfg: &TranslationConfig,
) -> Result<Vec<AblationRow>> {
    if variants.is_empty() {
        return Err(Error::invalid("ablation needs at least one variant"));
    }
    let frames: Vec<_> = (0..bundle.video.n())
        .map(|i| bundle.video.frame(i))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(variants.len());
    for variant in variants {
        let mut run_cfg = cfg.clone();
        run_cfg.attention = variant.clone();
        let (outputs, _) =
            translate_video(&frames, &bundle.bwd_flows, &bundle.occlusion, denoiser, &run_cfg)?;
        let out_video = VideoTensor::from_frames(&outputs)?;
        rows.push(AblationRow {
            variant: variant.label(),
            warp_err: warp_error(&out_video, &bundle.bwd_flows, &bundle.occlusion, true)?,
            tem_con: temporal_consistency(&out_video)?,
        });
    }
    Ok(rows)
}

/// Render rows as CSV with six fractional digits.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("variant,warp_err,tem_con\n");
    for row in rows {
        out.push_str(&format!("{},{:.6},{:.6}\n", row.variant, row.warp_err, row.tem_con));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_video(seed: u64, n: usize, h: usize, w: usize, c: usize) -> VideoTensor {
        let mut rng = StdRng::seed_from_u64(seed);
        let data = (0..n * h * w * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        VideoTensor::new(n, h, w, c, data).unwrap()
    }

    fn zero_flows(n: usize, h: usize, w: usize) -> (Vec<FlowField>, Vec<OcclusionMask>) {
        (
            (1..n).map(|_| FlowField::zero(h, w).unwrap()).collect(),
            (1..n).map(|_| OcclusionMask::filled(h, w, 1.0).unwrap()).collect(),
        )
    }

    #[test]
    fn static_video_zero_flow_scores_zero_and_one() {
        let frame: Vec<f32> = (0..8 * 8 * 3).map(|i| (i % 7) as f32 * 0.1).collect();
        let mut data = Vec::new();
        for _ in 0..3 {
            data.extend_from_slice(&frame);
        }
        let video = VideoTensor::new(3, 8, 8, 3, data).unwrap();
        let (flows, masks) = zero_flows(3, 8, 8);
        assert_eq!(warp_error(&video, &flows, &masks, false).unwrap(), 0.0);
        assert_eq!(temporal_consistency(&video).unwrap(), 1.0);
    }

    #[test]
    fn flow_consistent_video_scores_zero_masked() {
        // Build frame i as the warp of frame i-1 under a fixed flow.
        let mut rng = StdRng::seed_from_u64(1);
        let f0 = crate::grid::TokenGrid::from_fn(8, 8, 2, |_, _, _| rng.gen_range(0.0..1.0)).unwrap();
        let flow = FlowField::constant(8, 8, 0.75, -0.5).unwrap();
        let f1 = backward_warp(&f0, &flow).unwrap();
        let f2 = backward_warp(&f1, &flow).unwrap();
        let video = VideoTensor::from_frames(&[f0, f1, f2]).unwrap();
        let flows = vec![flow.clone(), flow];
        let masks = vec![
            OcclusionMask::filled(8, 8, 1.0).unwrap(),
            OcclusionMask::filled(8, 8, 1.0).unwrap(),
        ];
        let err = warp_error(&video, &flows, &masks, true).unwrap();
        assert!(err < 1e-6, "warp error {err}");
    }

    // Scalar double-loop oracle over pixels and channels.
    #[test]
    fn warp_error_matches_accumulation_oracle() {
        let mut rng = StdRng::seed_from_u64(2);
        let video = random_video(3, 3, 8, 8, 2);
        let flows: Vec<FlowField> = (0..2)
            .map(|_| {
                FlowField::from_fn(8, 8, |_, _| (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))).unwrap()
            })
            .collect();
        let masks: Vec<OcclusionMask> = (0..2)
            .map(|_| OcclusionMask::new(8, 8, (0..64).map(|_| rng.gen_range(0.0..=1.0)).collect()).unwrap())
            .collect();
        for masked in [false, true] {
            let got = warp_error(&video, &flows, &masks, masked).unwrap();
            let mut pair_sum = 0.0f64;
            for i in 1..3 {
                let warped = backward_warp(&video.frame(i - 1).unwrap(), &flows[i - 1]).unwrap();
                let mut acc = 0.0f64;
                let mut count = 0usize;
                for y in 0..8 {
                    for x in 0..8 {
                        if masked && masks[i - 1].at(y, x) <= 0.5 {
                            continue;
                        }
                        for ch in 0..2 {
                            let d = (warped.get(y, x, ch) - video.get(i, y, x, ch)) as f64;
                            acc += d * d;
                        }
                        count += 1;
                    }
                }
                pair_sum += acc / (count * 2) as f64;
            }
            let expect = pair_sum / 2.0;
            assert!((got - expect).abs() < 1e-6, "masked={masked}: {got} vs {expect}");
        }
    }

    #[test]
    fn warp_error_translation_invariant() {
        let video = random_video(4, 3, 8, 8, 2);
        let mut rng = StdRng::seed_from_u64(5);
        let flows: Vec<FlowField> = (0..2)
            .map(|_| {
                FlowField::from_fn(8, 8, |_, _| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).unwrap()
            })
            .collect();
        let (_, masks) = zero_flows(3, 8, 8);
        let base = warp_error(&video, &flows, &masks, false).unwrap();
        let shifted = VideoTensor::new(3, 8, 8, 2, video.values().iter().map(|v| v + 5.0).collect()).unwrap();
        let moved = warp_error(&shifted, &flows, &masks, false).unwrap();
        assert!((base - moved).abs() < 1e-6);
    }

    #[test]
    fn antipodal_frames_score_minus_one() {
        let mut rng = StdRng::seed_from_u64(6);
        let f0: Vec<f32> = (0..6 * 6 * 2).map(|_| rng.gen_range(0.1..1.0)).collect();
        let f1: Vec<f32> = f0.iter().map(|v| -v).collect();
        let mut data = f0.clone();
        data.extend_from_slice(&f1);
        let video = VideoTensor::new(2, 6, 6, 2, data).unwrap();
        let tc = temporal_consistency(&video).unwrap();
        assert!((tc + 1.0).abs() < 1e-9, "got {tc}");
    }

    // Independent dot/norm oracle on the pooled embeddings.
    #[test]
    fn temporal_consistency_matches_cosine_oracle() {
        let video = random_video(7, 4, 12, 10, 3);
        let got = temporal_consistency(&video).unwrap();
        let embed = |i: usize| -> Vec<f64> {
            let mut planes = Vec::new();
            for ch in 0..3 {
                let mut plane = vec![0.0f32; 12 * 10];
                for y in 0..12 {
                    for x in 0..10 {
                        plane[y * 10 + x] = video.get(i, y, x, ch);
                    }
                }
                planes.extend(
                    crate::warp::resample_plane(&plane, 12, 10, 16, 16)
                        .iter()
                        .map(|&v| v as f64),
                );
            }
            planes
        };
        let mut total = 0.0f64;
        for i in 1..4 {
            let (a, b) = (embed(i - 1), embed(i));
            let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            total += dot / (na * nb);
        }
        assert!((got - total / 3.0).abs() < 1e-6);
    }

    #[test]
    fn temporal_consistency_scale_invariant() {
        let video = random_video(8, 3, 8, 8, 2);
        let base = temporal_consistency(&video).unwrap();
        let scaled = VideoTensor::new(3, 8, 8, 2, video.values().iter().map(|v| v * 37.5).collect()).unwrap();
        assert!((base - temporal_consistency(&scaled).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn single_frame_rejected() {
        let video = random_video(9, 1, 4, 4, 1);
        assert!(temporal_consistency(&video).is_err());
        assert!(warp_error(&video, &[], &[], false).is_err());
    }

    #[test]
    fn csv_formatting() {
        let rows = vec![AblationRow { variant: "full".into(), warp_err: 0.1234567, tem_con: 0.9999999 }];
        let csv = ablation_csv(&rows);
        assert_eq!(csv, "variant,warp_err,tem_con\nfull,0.123457,1.000000\n");
    }
}
