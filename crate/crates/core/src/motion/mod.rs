//! 6-DOF camera poses and shutter-time trajectories.
//!
//! Translations follow a cubic Bézier curve over normalized shutter time
//! `s ∈ [0, 1]`; rotations are slerped between two unit quaternions. The
//! pose angles `(φ, θ, ψ)` (pitch about x, yaw about y, roll about z) are the
//! components of the rotation vector, i.e. the entries of the skew matrix
//! whose exponential is the rotation.

mod quat;

pub use quat::{slerp, Quat, UNIT_TOLERANCE};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the seeded generator behind [`make_random_trajectory`].
pub const RNG_NAME: &str = "chacha8";

/// Pitch/yaw magnitude up to which the first-order rotation is trusted.
pub const SMALL_ANGLE_LIMIT: f64 = 0.1;

/// Tolerance for "pose at mid-exposure is the identity".
pub const IDENTITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CameraPose {
    /// `(p_x, p_y, p_z)`: in-plane shift in view-baseline units and the
    /// out-of-plane shear coefficient per pixel.
    pub translation: [f64; 3],
    /// `(φ, θ, ψ)` in radians about the x, y and z axes.
    pub rotation: [f64; 3],
}

impl CameraPose {
    pub const IDENTITY: CameraPose = CameraPose {
        translation: [0.0; 3],
        rotation: [0.0; 3],
    };

    pub fn new(translation: [f64; 3], rotation: [f64; 3]) -> Result<Self> {
        if !translation.iter().chain(&rotation).all(|v| v.is_finite()) {
            return Err(Error::invalid("pose", "components must be finite"));
        }
        Ok(CameraPose {
            translation,
            rotation,
        })
    }

    pub fn pitch(&self) -> f64 {
        self.rotation[0]
    }

    pub fn yaw(&self) -> f64 {
        self.rotation[1]
    }

    pub fn roll(&self) -> f64 {
        self.rotation[2]
    }

    /// Largest absolute component.
    pub fn max_abs(&self) -> f64 {
        self.translation
            .iter()
            .chain(&self.rotation)
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.max_abs() <= tol
    }

    /// Whether pitch and yaw stay inside the first-order rotation regime.
    pub fn within_small_angle(&self, limit: f64) -> bool {
        self.pitch().abs() <= limit && self.yaw().abs() <= limit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationMode {
    /// Matrix exponential of the skew matrix (Rodrigues).
    Exact,
    /// `I + [Ω]`.
    SmallAngle,
}

pub type Mat3 = [[f64; 3]; 3];

/// Out-of-plane rotation of a pose; roll is handled separately by the
/// in-plane warp, so ψ is taken as zero here.
pub fn rotation_matrix(pose: &CameraPose, mode: RotationMode) -> Mat3 {
    let phi = pose.pitch();
    let theta = pose.yaw();
    let omega = [[0.0, 0.0, theta], [0.0, 0.0, -phi], [-theta, phi, 0.0]];
    match mode {
        RotationMode::SmallAngle => [[1.0, 0.0, theta], [0.0, 1.0, -phi], [-theta, phi, 1.0]],
        RotationMode::Exact => {
            let angle = (phi * phi + theta * theta).sqrt();
            let mut r = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
            if angle == 0.0 {
                return r;
            }
            let a = angle.sin() / angle;
            let b = (1.0 - angle.cos()) / (angle * angle);
            let omega2 = mat_mul(&omega, &omega);
            for i in 0..3 {
                for j in 0..3 {
                    r[i][j] += a * omega[i][j] + b * omega2[i][j];
                }
            }
            r
        }
    }
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Cubic Bernstein evaluation. Results are clamped to the per-axis range
/// of the control points, so rounding never leaves the convex hull.
pub fn bezier_eval(control: &[[f64; 3]; 4], s: f64) -> Result<[f64; 3]> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::invalid("s", format!("{s} outside [0, 1]")));
    }
    Ok(bernstein(control, s))
}

fn bernstein(control: &[[f64; 3]; 4], s: f64) -> [f64; 3] {
    if s == 0.0 {
        return control[0];
    }
    if s == 1.0 {
        return control[3];
    }
    let t = 1.0 - s;
    let w = [t * t * t, 3.0 * t * t * s, 3.0 * t * s * s, s * s * s];
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let v = w[0] * control[0][k]
            + w[1] * control[1][k]
            + w[2] * control[2][k]
            + w[3] * control[3][k];
        let lo = control.iter().map(|c| c[k]).fold(f64::INFINITY, f64::min);
        let hi = control
            .iter()
            .map(|c| c[k])
            .fold(f64::NEG_INFINITY, f64::max);
        *o = v.clamp(lo, hi);
    }
    out
}

/// Per-component magnitude limits for random trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionBounds {
    /// Max `|p_x|`, `|p_y|` (baseline units) and `|p_z|` (per pixel).
    pub translation: [f64; 3],
    /// Max `|φ|`, `|θ|`, `|ψ|` in radians.
    pub rotation: [f64; 3],
}

impl Default for MotionBounds {
    fn default() -> Self {
        MotionBounds {
            translation: [2.0, 2.0, 0.02],
            rotation: [0.005, 0.005, 0.02],
        }
    }
}

impl MotionBounds {
    pub fn zero() -> Self {
        MotionBounds {
            translation: [0.0; 3],
            rotation: [0.0; 3],
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        MotionBounds {
            translation: self.translation.map(|v| v * factor),
            rotation: self.rotation.map(|v| v * factor),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .translation
            .iter()
            .chain(&self.rotation)
            .all(|v| v.is_finite() && *v >= 0.0)
        {
            Ok(())
        } else {
            Err(Error::invalid(
                "bounds",
                "all limits must be finite and >= 0",
            ))
        }
    }

    pub fn contains(&self, pose: &CameraPose, slack: f64) -> bool {
        (0..3).all(|k| {
            pose.translation[k].abs() <= self.translation[k] + slack
                && pose.rotation[k].abs() <= self.rotation[k] + slack
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    pub bounds: MotionBounds,
    /// Cubic Bézier control points in `(p_x, p_y, p_z)` space.
    pub translation_control: [[f64; 3]; 4],
    /// Unit quaternions at `s = 0` and `s = 1`.
    pub rotation_endpoints: [Quat; 2],
}

impl Trajectory {
    /// Trajectory that holds `pose` for the whole exposure.
    pub fn constant(pose: &CameraPose) -> Self {
        let q = Quat::from_rotation_vector(pose.rotation);
        Trajectory {
            seed: 0,
            bounds: MotionBounds::zero(),
            translation_control: [pose.translation; 4],
            rotation_endpoints: [q, q],
        }
    }

    pub fn identity() -> Self {
        Trajectory::constant(&CameraPose::IDENTITY)
    }

    /// Straight segment between two poses (linear in `s`).
    pub fn linear(from: &CameraPose, to: &CameraPose) -> Self {
        let lerp =
            |k: usize, t: f64| from.translation[k] + (to.translation[k] - from.translation[k]) * t;
        let point = |t: f64| [lerp(0, t), lerp(1, t), lerp(2, t)];
        Trajectory {
            seed: 0,
            bounds: MotionBounds::zero(),
            translation_control: [point(0.0), point(1.0 / 3.0), point(2.0 / 3.0), point(1.0)],
            rotation_endpoints: [
                Quat::from_rotation_vector(from.rotation),
                Quat::from_rotation_vector(to.rotation),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self
            .translation_control
            .iter()
            .flatten()
            .all(|v| v.is_finite())
        {
            return Err(Error::invalid("translation_control", "must be finite"));
        }
        self.rotation_endpoints[0].ensure_unit("rotation_endpoints")?;
        self.rotation_endpoints[1].ensure_unit("rotation_endpoints")?;
        Ok(())
    }

    /// Deviation of the mid-exposure pose from the identity.
    pub fn midpoint_deviation(&self) -> Result<f64> {
        Ok(pose_at(self, 0.5)?.max_abs())
    }

    pub fn is_normalized(&self) -> bool {
        self.midpoint_deviation()
            .map(|d| d <= IDENTITY_TOLERANCE)
            .unwrap_or(false)
    }
}

pub fn pose_at(traj: &Trajectory, s: f64) -> Result<CameraPose> {
    let translation = bezier_eval(&traj.translation_control, s)?;
    let [q0, q1] = traj.rotation_endpoints;
    let q = slerp(q0, q1, s)?;
    Ok(CameraPose {
        translation,
        rotation: q.to_rotation_vector(),
    })
}

/// Re-anchors a trajectory so that its mid-exposure pose is exactly the
/// identity.
///
/// Translations are shifted by the curve midpoint and the last control point
/// is then re-solved so the Bernstein sum at `s = 0.5` cancels to zero in
/// floating point. Rotations are left-composed with the inverse of the
/// mid-exposure quaternion; the two endpoints are then conjugates, so the
/// slerp midpoint is the identity quaternion.
pub fn normalize_midpoint(traj: &Trajectory) -> Result<Trajectory> {
    traj.validate()?;
    let mid = bernstein(&traj.translation_control, 0.5);
    let mut control = traj.translation_control;
    for p in control.iter_mut() {
        for k in 0..3 {
            p[k] -= mid[k];
        }
    }
    for k in 0..3 {
        // Mirrors the Bernstein evaluation order at s = 0.5 (weights 1,3,3,1 over 8).
        let partial = (control[0][k] + 3.0 * control[1][k]) + 3.0 * control[2][k];
        control[3][k] = -partial;
    }

    let [q0, q1] = traj.rotation_endpoints;
    let q1 = if q0.dot(q1) < 0.0 { -q1 } else { q1 };
    let m = slerp(q0, q1, 0.5)?;
    let mut start = (m.conjugate() * q0).normalized();
    if start.w < 0.0 {
        start = -start;
    }
    Ok(Trajectory {
        seed: traj.seed,
        bounds: traj.bounds,
        translation_control: control,
        rotation_endpoints: [start, start.conjugate()],
    })
}

/// Seeded random trajectory whose normalized poses stay inside `bounds`.
///
/// Control points are drawn in `[-b/2, b/2]` per axis so any two curve
/// points differ by at most `b`. The rotation is a mid-exposure offset
/// times a constant-axis sweep `exp((s - 1/2) ω)` with `|ω_k| ≤ 2 b_k`.
pub fn make_random_trajectory(seed: u64, bounds: &MotionBounds) -> Result<Trajectory> {
    bounds.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut symmetric = |limit: f64| -> f64 { (2.0 * rng.random::<f64>() - 1.0) * limit };

    let mut control = [[0.0; 3]; 4];
    for p in control.iter_mut() {
        for k in 0..3 {
            p[k] = symmetric(0.5 * bounds.translation[k]);
        }
    }
    let mut offset = [0.0; 3];
    let mut sweep = [0.0; 3];
    for k in 0..3 {
        offset[k] = symmetric(bounds.rotation[k]);
    }
    for k in 0..3 {
        sweep[k] = symmetric(2.0 * bounds.rotation[k]);
    }
    let m = Quat::from_rotation_vector(offset);
    let half = sweep.map(|v| 0.5 * v);
    let q0 = (m * Quat::from_rotation_vector(half.map(|v| -v))).normalized();
    let q1 = (m * Quat::from_rotation_vector(half)).normalized();
    Ok(Trajectory {
        seed,
        bounds: *bounds,
        translation_control: control,
        rotation_endpoints: [q0, q1],
    })
}

/// `n` poses at `s = i / (n - 1)`, or the single mid-exposure pose for `n = 1`.
pub fn sample_poses(traj: &Trajectory, n: usize) -> Result<Vec<CameraPose>> {
    match n {
        0 => Err(Error::invalid(
            "n_t",
            "at least one time sample is required",
        )),
        1 => Ok(vec![pose_at(traj, 0.5)?]),
        _ => (0..n)
            .map(|i| pose_at(traj, i as f64 / (n - 1) as f64))
            .collect(),
    }
}

/// Trajectory JSON as exchanged by the command-line tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFile {
    #[serde(flatten)]
    pub trajectory: Trajectory,
    pub n_t: usize,
    #[serde(default = "default_rng_name")]
    pub rng: String,
}

fn default_rng_name() -> String {
    RNG_NAME.to_string()
}

impl TrajectoryFile {
    pub fn new(trajectory: Trajectory, n_t: usize) -> Self {
        TrajectoryFile {
            trajectory,
            n_t,
            rng: RNG_NAME.to_string(),
        }
    }
}
