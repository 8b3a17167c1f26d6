//! Blur a synthetic light field along a random trajectory and save both.
//!
//! `cargo run --release --example blur_synthesis [OUT_DIR]`

use lfdeblur::blur::{synthesize_blur, WarpMode, DEFAULT_TIME_SAMPLES};
use lfdeblur::lightfield::{save_lightfield, synthetic, BitDepth};
use lfdeblur::metrics::evaluate_lf;
use lfdeblur::motion::{make_random_trajectory, normalize_midpoint, MotionBounds};

fn main() -> lfdeblur::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("lfdeblur_blur"));

    let sharp = synthetic::textured_scene(3, (5, 5), (96, 128));
    let traj = normalize_midpoint(&make_random_trajectory(11, &MotionBounds::default())?)?;
    for mode in [WarpMode::LiteralEq13, WarpMode::SpatialRotation] {
        let pair = synthesize_blur(&sharp, &traj, DEFAULT_TIME_SAMPLES, mode)?;
        let score = evaluate_lf(&pair.blurred, &pair.ground_truth)?.mean;
        println!(
            "{mode:?}: blurred vs sharp PSNR {:.2} dB, SSIM {:.4}",
            score.psnr, score.ssim
        );
        if mode == WarpMode::default() {
            save_lightfield(&pair.blurred, out.join("blurred"), BitDepth::Eight)?;
            save_lightfield(&pair.ground_truth, out.join("sharp"), BitDepth::Eight)?;
        }
    }
    println!("saved to {}", out.display());
    Ok(())
}
