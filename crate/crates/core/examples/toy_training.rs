//! Train a small network on synthetic blur and compare held-out quality.
//!
//! `cargo run --release --example toy_training [ITERATIONS]`

use lfdeblur::blur::{synthesize_blur, BlurPair, WarpMode};
use lfdeblur::lightfield::synthetic;
use lfdeblur::metrics::evaluate_lf;
use lfdeblur::motion::{make_random_trajectory, normalize_midpoint, MotionBounds};
use lfdeblur::net::{deblur_lightfield, smoothed_endpoints, train, NetworkConfig, TrainConfig};

fn pair(seed: u64, bounds: &MotionBounds) -> lfdeblur::Result<BlurPair> {
    let sharp = synthetic::textured_scene(seed, (5, 5), (64, 64));
    let traj = normalize_midpoint(&make_random_trajectory(100 + seed, bounds)?)?;
    synthesize_blur(&sharp, &traj, 32, WarpMode::default())
}

fn main() -> lfdeblur::Result<()> {
    let iterations = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(300);
    let bounds = MotionBounds::default().scaled(0.5);
    let train_set = (0..8)
        .map(|i| pair(i, &bounds))
        .collect::<lfdeblur::Result<Vec<_>>>()?;
    let held_out = pair(8, &bounds)?;

    let net = NetworkConfig {
        base_channels: 8,
        hidden_channels: 8,
        residual_blocks: 2,
        ..NetworkConfig::default()
    };
    let cfg = TrainConfig {
        patch_size: 48,
        angular_samples: 5,
        iterations,
        learning_rate: 3e-3,
        lambda: 1e-6,
        ..TrainConfig::default()
    };
    let out = train(&train_set, &cfg, &net)?;
    let (first, last) = smoothed_endpoints(&out.losses(), 20);
    println!("{iterations} iterations: smoothed loss {first:.5} -> {last:.5}");

    let restored = deblur_lightfield(&held_out.blurred, &out.params)?;
    let before = evaluate_lf(&held_out.blurred, &held_out.ground_truth)?.mean;
    let after = evaluate_lf(&restored, &held_out.ground_truth)?.mean;
    println!(
        "held-out PSNR {:.2} -> {:.2} dB, SSIM {:.4} -> {:.4}",
        before.psnr, after.psnr, before.ssim, after.ssim
    );

    let path = std::env::temp_dir().join("lfdeblur_toy.lfdb");
    out.params.save(&path)?;
    println!("checkpoint: {}", path.display());
    Ok(())
}
