//! Per-view PSNR / SSIM / RMSE of a noisy light field, written as CSV.
//!
//! `cargo run --release --example evaluation`

use lfdeblur::lightfield::synthetic;
use lfdeblur::metrics::evaluate_lf;
use lfdeblur::LightField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> lfdeblur::Result<()> {
    let reference = synthetic::textured_scene(2, (3, 3), (64, 64));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noisy = LightField::from_fn(
        reference.angular_size(),
        reference.spatial_size(),
        *reference.intrinsics(),
        |r, c, y, x, ch| {
            (reference.get(r, c, y, x, ch) + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0)
        },
    )?;
    let report = evaluate_lf(&noisy, &reference)?.with_ids("noisy", "reference");
    print!("{}", report.to_csv());
    Ok(())
}
