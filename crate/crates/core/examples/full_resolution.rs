//! Deblur a full 5x5x320x512 light field and report per-view timings.
//!
//! `cargo run --release --example full_resolution [BASE_CHANNELS]`

use lfdeblur::lightfield::synthetic;
use lfdeblur::net::{deblur_lightfield_timed, NetworkConfig, NetworkParams};

fn main() -> lfdeblur::Result<()> {
    let channels = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(16);
    let net = NetworkConfig {
        base_channels: channels,
        hidden_channels: channels,
        zero_init_output: false,
        ..NetworkConfig::default()
    };
    let params = NetworkParams::<f32>::init(&net)?;
    println!("{} parameters", params.num_params());

    let lf = synthetic::textured_scene(5, (5, 5), (320, 512));
    let out = deblur_lightfield_timed(&lf, &params)?;
    let mut total = 0.0;
    for (step, s) in out.step_seconds.iter().enumerate() {
        total += s;
        if (step + 1) % 5 == 0 {
            println!("{:2} views: {total:.2}s", step + 1);
        }
    }
    let (lo, hi) = out
        .lightfield
        .data()
        .iter()
        .fold((f32::MAX, f32::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    println!("output range [{lo:.3}, {hi:.3}]");
    Ok(())
}
