//! Random 6-DOF shutter trajectories and the small-angle rotation model.
//!
//! `cargo run --example trajectories [SEED]`

use lfdeblur::motion::{
    make_random_trajectory, normalize_midpoint, pose_at, rotation_matrix, sample_poses,
    MotionBounds, RotationMode,
};

fn main() -> lfdeblur::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    let bounds = MotionBounds::default();
    let traj = normalize_midpoint(&make_random_trajectory(seed, &bounds)?)?;
    println!(
        "seed {seed}, midpoint deviation {:.1e}",
        traj.midpoint_deviation()?
    );

    for pose in sample_poses(&traj, 5)? {
        let t = pose.translation;
        let r = pose.rotation;
        println!(
            "  p = ({:+.3}, {:+.3}, {:+.4})  pitch/yaw/roll = ({:+.5}, {:+.5}, {:+.5})",
            t[0], t[1], t[2], r[0], r[1], r[2]
        );
    }

    let end = pose_at(&traj, 1.0)?;
    let exact = rotation_matrix(&end, RotationMode::Exact);
    let small = rotation_matrix(&end, RotationMode::SmallAngle);
    let gap = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| (exact[i][j] - small[i][j]).abs())
        .fold(0.0, f64::max);
    println!("exact vs small-angle rotation gap at s=1: {gap:.2e}");
    Ok(())
}
