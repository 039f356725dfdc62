//! Command-line front end: synthetic scene generation, flow and occlusion
//! estimation, flow-guided video translation, metric evaluation, and the
//! ablation table, all over `.tkwp` tensor container files.
//!
//! Exit codes: 0 success, 1 usage, 2 config error, 3 I/O error, 4 container
//! format error, 5 shape or parameter error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};

use tokenwarp::config::RunConfig;
use tokenwarp::container;
use tokenwarp::denoiser::ToyAttentionDenoiser;
use tokenwarp::error::{Error, Result};
use tokenwarp::grid::{FlowField, OcclusionMask, VideoTensor};
use tokenwarp::metrics::{ablation_csv, ablation_report_with, temporal_consistency, warp_error};
use tokenwarp::synth::gen_scene;
use tokenwarp::warp::{estimate_occlusion, resize_flow, resize_mask, OcclusionParams};
use tokenwarp::{block_match_flow, translate_clips, AttentionConfig, BlockMatchParams};

#[derive(Parser)]
#[command(name = "tokenwarp", version, about = "Flow-guided token-warping video translation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic scene: video plus ground-truth flows and masks
    Synth {
        /// Run configuration (JSON); uses the `scene` section
        #[arg(long)]
        config: PathBuf,
        /// Output directory for video.tkwp, fwd_NNN/bwd_NNN/occ_NNN.tkwp
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Estimate backward flow (next => prev) between two frames
    Flow {
        #[arg(long)]
        prev: PathBuf,
        #[arg(long)]
        next: PathBuf,
        /// Matching block side (odd)
        #[arg(long, default_value_t = 9)]
        block: usize,
        /// Search radius in pixels
        #[arg(long, default_value_t = 4)]
        radius: usize,
        /// Pyramid levels
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate an occlusion mask from forward/backward flow consistency
    Occl {
        #[arg(long)]
        fwd: PathBuf,
        #[arg(long)]
        bwd: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        alpha: f32,
        #[arg(long, default_value_t = 0.5)]
        beta: f32,
        /// Emit a smooth mask instead of a binary one
        #[arg(long)]
        soft: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Translate a latent video clip-by-clip under the configured attention
    Translate {
        #[arg(long)]
        config: PathBuf,
        /// Input latent video (rank-4 container)
        #[arg(long)]
        video: PathBuf,
        /// Directory holding bwd_NNN.tkwp flows
        #[arg(long)]
        flows_dir: PathBuf,
        /// Directory holding occ_NNN.tkwp masks
        #[arg(long)]
        masks_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report warp error and temporal consistency for a video
    Eval {
        #[arg(long)]
        video: PathBuf,
        #[arg(long)]
        flows_dir: PathBuf,
        #[arg(long)]
        masks_dir: PathBuf,
        /// Restrict the warp error to unoccluded pixels
        #[arg(long)]
        masked: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare attention variants on the configured synthetic scene
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Io(_) => 3,
        Error::Format { .. } => 4,
        Error::InvalidParameter(_) | Error::ShapeMismatch(_) => 5,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = e.print();
                return ExitCode::from(1);
            }
            // Help and version output.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let name = Cli::command().get_name().to_string();
            eprintln!("{name}: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn numbered(dir: &Path, stem: &str, index: usize) -> PathBuf {
    dir.join(format!("{stem}_{index:03}.tkwp"))
}

/// Load the n-1 per-pair flows and masks for an n-frame video, resampling
/// them to the video's resolution when they differ.
fn load_pairs(
    flows_dir: &Path,
    masks_dir: &Path,
    n: usize,
    h: usize,
    w: usize,
) -> Result<(Vec<FlowField>, Vec<OcclusionMask>)> {
    let mut flows = Vec::with_capacity(n - 1);
    let mut masks = Vec::with_capacity(n - 1);
    for i in 1..n {
        let flow = container::as_flow(&container::read_tensor(&numbered(flows_dir, "bwd", i))?)?;
        let flow = if flow.h() != h || flow.w() != w { resize_flow(&flow, h, w)? } else { flow };
        flows.push(flow);
        let mask = container::as_mask(&container::read_tensor(&numbered(masks_dir, "occ", i))?)?;
        let mask = if mask.h() != h || mask.w() != w { resize_mask(&mask, h, w)? } else { mask };
        masks.push(mask);
    }
    Ok((flows, masks))
}

/// The canonical ablation variants: the four mechanism variants plus every
/// proper non-empty block placement of the flow-guided path.
fn ablation_variants(blocks: usize) -> Vec<AttentionConfig> {
    let mut variants = vec![
        AttentionConfig::baseline(),
        AttentionConfig::q_warp(),
        AttentionConfig::kv_warp(),
        AttentionConfig::full(),
    ];
    for mask in 1..(1u32 << blocks) - 1 {
        let layers: Vec<usize> = (0..blocks).filter(|b| mask & (1 << b) != 0).collect();
        variants.push(AttentionConfig::full().with_layers(layers));
    }
    variants
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Synth { config, out_dir } => {
            let cfg = RunConfig::load(&config)?;
            let bundle = gen_scene(&cfg.scene_spec())?;
            fs::create_dir_all(&out_dir)?;
            container::write_tensor(&out_dir.join("video.tkwp"), &container::video_tensor(&bundle.video))?;
            for i in 1..bundle.video.n() {
                container::write_tensor(&numbered(&out_dir, "fwd", i), &container::flow_tensor(&bundle.fwd_flows[i - 1]))?;
                container::write_tensor(&numbered(&out_dir, "bwd", i), &container::flow_tensor(&bundle.bwd_flows[i - 1]))?;
                container::write_tensor(&numbered(&out_dir, "occ", i), &container::mask_tensor(&bundle.occlusion[i - 1]))?;
            }
            println!(
                "wrote {} frames and {} flow/mask pairs to {}",
                bundle.video.n(),
                bundle.video.n() - 1,
                out_dir.display()
            );
            Ok(())
        }
        Cmd::Flow { prev, next, block, radius, levels, out } => {
            let prev = container::as_grid(&container::read_tensor(&prev)?)?;
            let next = container::as_grid(&container::read_tensor(&next)?)?;
            let params = BlockMatchParams { block, radius, levels };
            let flow = block_match_flow(&prev, &next, &params)?;
            container::write_tensor(&out, &container::flow_tensor(&flow))?;
            println!("wrote {}x{} flow to {}", flow.h(), flow.w(), out.display());
            Ok(())
        }
        Cmd::Occl { fwd, bwd, alpha, beta, soft, out } => {
            let fwd = container::as_flow(&container::read_tensor(&fwd)?)?;
            let bwd = container::as_flow(&container::read_tensor(&bwd)?)?;
            let mask = estimate_occlusion(&bwd, &fwd, &OcclusionParams { alpha, beta, soft })?;
            container::write_tensor(&out, &container::mask_tensor(&mask))?;
            let occluded = mask.values().iter().filter(|&&v| v < 0.5).count();
            println!(
                "wrote mask to {} ({occluded}/{} pixels occluded)",
                out.display(),
                mask.values().len()
            );
            Ok(())
        }
        Cmd::Translate { config, video, flows_dir, masks_dir, out } => {
            let cfg = RunConfig::load(&config)?;
            let tc = cfg.translation_config()?;
            let video = container::as_video(&container::read_tensor(&video)?)?;
            if video.n() < 1 {
                return Err(Error::invalid("empty video"));
            }
            let frames: Vec<_> = (0..video.n()).map(|i| video.frame(i)).collect::<Result<_>>()?;
            let (flows, masks) = load_pairs(&flows_dir, &masks_dir, video.n(), video.h(), video.w())?;
            let denoiser = ToyAttentionDenoiser::seeded(video.c(), &cfg.denoiser_params())?;
            let outputs = translate_clips(&frames, &flows, &masks, &denoiser, &tc)?;
            let translated = VideoTensor::from_frames(&outputs)?;
            container::write_tensor(&out, &container::video_tensor(&translated))?;
            println!("translated {} frames to {}", translated.n(), out.display());
            Ok(())
        }
        Cmd::Eval { video, flows_dir, masks_dir, masked, out } => {
            let video = container::as_video(&container::read_tensor(&video)?)?;
            let (flows, masks) = load_pairs(&flows_dir, &masks_dir, video.n(), video.h(), video.w())?;
            let we = warp_error(&video, &flows, &masks, masked)?;
            let tc = temporal_consistency(&video)?;
            write_text(&out, &format!("warp_err,tem_con\n{we:.6},{tc:.6}\n"))?;
            println!("warp_err = {we:.6}, tem_con = {tc:.6} -> {}", out.display());
            Ok(())
        }
        Cmd::Ablate { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let tc = cfg.translation_config()?;
            let bundle = gen_scene(&cfg.scene_spec())?;
            let params = cfg.denoiser_params();
            let denoiser = ToyAttentionDenoiser::seeded(bundle.video.c(), &params)?;
            let variants = ablation_variants(params.blocks);
            let rows = ablation_report_with(&bundle, &denoiser, &variants, &tc)?;
            write_text(&out, &ablation_csv(&rows))?;
            for row in &rows {
                println!("{:<24} warp_err = {:.6}  tem_con = {:.6}", row.variant, row.warp_err, row.tem_con);
            }
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}
