//! Spiral view ordering, angular sampling and EPI export.
//!
//! `cargo run --example spiral_epi [OUT_DIR]`

use lfdeblur::lightfield::{angular_sample, extract_epi, spiral_order, synthetic, EpiAxis};

fn main() -> lfdeblur::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(std::env::temp_dir);

    let spiral = spiral_order(5, 5)?;
    println!("spiral over 5x5:");
    for r in 0..5 {
        let line: Vec<String> = (0..5)
            .map(|c| {
                let step = spiral.order.iter().position(|&v| v == (r, c)).unwrap();
                format!("{step:3}")
            })
            .collect();
        println!("  {}", line.join(""));
    }
    let sampled = angular_sample(&spiral, 10)?;
    println!("10 sampled views: {:?}", sampled.order);

    let lf = synthetic::textured_scene(7, (5, 5), (64, 96));
    for axis in [EpiAxis::Horizontal, EpiAxis::Vertical] {
        let epi = extract_epi(&lf, axis, 32, 2)?;
        let path = out.join(format!("epi_{axis:?}.png").to_lowercase());
        epi.save_png(&path)?;
        println!(
            "{axis:?} EPI {}x{} -> {}",
            epi.rows,
            epi.cols,
            path.display()
        );
    }
    Ok(())
}
