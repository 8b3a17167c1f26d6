//! 6-DOF light-field motion blur.
//!
//! Each camera pose maps an output sample `(x, y, u, v)` to a continuous
//! source coordinate in the sharp light field: an in-plane roll about the
//! view's principal point, followed by an angular shift from the in-plane
//! translation (plus, in [`WarpMode::LiteralEq13`], the pitch/yaw shift
//! `f·θ`, `−f·φ`) and an out-of-plane shear `−x·p_z`. The blurred light
//! field is the average of the warped copies over the exposure.

mod dataset;

pub use dataset::{
    generate_dataset, list_lightfields, load_dataset, trajectory_seeds, BlurJobConfig,
    DatasetConfig, DatasetEntry, DatasetManifest, DATASET_MANIFEST_FILE,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lightfield::{clamp_axis, Intrinsics, LightField, CHANNELS};
use crate::motion::{sample_poses, CameraPose, Trajectory, IDENTITY_TOLERANCE};

pub const DEFAULT_TIME_SAMPLES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarpMode {
    /// Pitch/yaw shifts folded into the angular translation.
    #[default]
    LiteralEq13,
    /// Pitch/yaw shifts applied to the spatial coordinates of every view.
    SpatialRotation,
}

/// A 4D light-field coordinate. `u` is the horizontal angular coordinate
/// (view column, paired with `x`) and `v` the vertical one (view row,
/// paired with `y`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LfCoord {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
}

/// Geometry needed to place a view's principal point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewGeometry {
    pub intrinsics: Intrinsics,
    pub angular_size: (usize, usize),
}

impl ViewGeometry {
    pub fn of(lf: &LightField) -> Self {
        ViewGeometry {
            intrinsics: *lf.intrinsics(),
            angular_size: lf.angular_size(),
        }
    }
}

/// Per-pose constants hoisted out of the per-pixel loop.
#[derive(Debug, Clone, Copy)]
struct PoseTerms {
    cos: f64,
    sin: f64,
    rotate: bool,
    shift_u: f64,
    shift_v: f64,
    spatial_x: f64,
    spatial_y: f64,
    shear: f64,
}

impl PoseTerms {
    fn new(pose: &CameraPose, focal: f64, mode: WarpMode) -> Self {
        let [px, py, pz] = pose.translation;
        let [phi, theta, psi] = pose.rotation;
        let (rot_x, rot_y) = (focal * theta, -(focal * phi));
        let (shift_u, shift_v, spatial_x, spatial_y) = match mode {
            WarpMode::LiteralEq13 => (px + rot_x, py + rot_y, 0.0, 0.0),
            WarpMode::SpatialRotation => (px, py, rot_x, rot_y),
        };
        PoseTerms {
            cos: psi.cos(),
            sin: psi.sin(),
            rotate: psi != 0.0,
            shift_u,
            shift_v,
            spatial_x,
            spatial_y,
            shear: pz,
        }
    }

    /// `center` is the view's rotation center `(p_c + Δ_u, q_c + Δ_v)`.
    #[inline]
    fn apply(&self, x: f64, y: f64, u: f64, v: f64, center: (f64, f64)) -> LfCoord {
        let (xj, yj) = if self.rotate {
            let dx = x - center.0;
            let dy = y - center.1;
            (
                dx * self.cos - dy * self.sin + center.0,
                dx * self.sin + dy * self.cos + center.1,
            )
        } else {
            (x, y)
        };
        LfCoord {
            x: xj + self.spatial_x,
            y: yj + self.spatial_y,
            u: u + self.shift_u - xj * self.shear,
            v: v + self.shift_v - yj * self.shear,
        }
    }
}

fn rotation_center(geom: &ViewGeometry, u: f64, v: f64) -> (f64, f64) {
    let (du, dv) = geom.intrinsics.view_offset(v, u, geom.angular_size);
    let [pc, qc] = geom.intrinsics.principal_point;
    (pc + du, qc + dv)
}

/// Source coordinate sampled by output coordinate `at` under `pose`.
pub fn warp_coords(pose: &CameraPose, at: LfCoord, geom: &ViewGeometry, mode: WarpMode) -> LfCoord {
    let terms = PoseTerms::new(pose, geom.intrinsics.focal_px, mode);
    terms.apply(at.x, at.y, at.u, at.v, rotation_center(geom, at.u, at.v))
}

/// Accumulates the warped view `(row, col)` for one pose into `acc`.
fn accumulate_view(lf: &LightField, terms: &PoseTerms, row: usize, col: usize, acc: &mut [f64]) {
    let (height, width) = lf.spatial_size();
    let geom = ViewGeometry::of(lf);
    let center = rotation_center(&geom, col as f64, row as f64);
    let (u, v) = (col as f64, row as f64);

    // Without roll, angular coordinates depend on a single spatial axis each,
    // so the angular bracket can be hoisted per row / column.
    if !terms.rotate {
        let (rows, cols) = lf.angular_size();
        let col_terms: Vec<_> = (0..width)
            .map(|x| {
                let c = lf_col(terms, u, x as f64);
                (
                    clamp_axis(x as f64 + terms.spatial_x, width),
                    clamp_axis(c, cols),
                )
            })
            .collect();
        for y in 0..height {
            let r = v + terms.shift_v - (y as f64) * terms.shear;
            let ry = clamp_axis(r, rows);
            let yy = clamp_axis(y as f64 + terms.spatial_y, height);
            let out = &mut acc[y * width * CHANNELS..(y + 1) * width * CHANNELS];
            for (x, &(xx, cc)) in col_terms.iter().enumerate() {
                let s = sample_bracketed(lf, ry, cc, yy, xx);
                let o = &mut out[x * CHANNELS..(x + 1) * CHANNELS];
                o[0] += s[0];
                o[1] += s[1];
                o[2] += s[2];
            }
        }
        return;
    }

    for y in 0..height {
        for x in 0..width {
            let c = terms.apply(x as f64, y as f64, u, v, center);
            let s = lf.sample(c.v, c.u, c.y, c.x);
            let o = &mut acc[(y * width + x) * CHANNELS..(y * width + x + 1) * CHANNELS];
            o[0] += s[0];
            o[1] += s[1];
            o[2] += s[2];
        }
    }
}

#[inline]
fn lf_col(terms: &PoseTerms, u: f64, x: f64) -> f64 {
    u + terms.shift_u - x * terms.shear
}

type Bracket = (usize, usize, f64);

/// Same arithmetic as [`LightField::sample`] with precomputed brackets.
#[inline]
fn sample_bracketed(lf: &LightField, r: Bracket, c: Bracket, y: Bracket, x: Bracket) -> [f64; 3] {
    let (r0, r1, fr) = r;
    let (c0, c1, fc) = c;
    let (y0, y1, fy) = y;
    let (x0, x1, fx) = x;
    let width = lf.spatial_size().1;
    let spatial = |rr: usize, cc: usize| -> [f64; 3] {
        let view = lf.view_data(rr, cc);
        let px = |yy: usize, xx: usize| -> [f64; 3] {
            let i = (yy * width + xx) * CHANNELS;
            [view[i] as f64, view[i + 1] as f64, view[i + 2] as f64]
        };
        let top = if fx == 0.0 {
            px(y0, x0)
        } else {
            lerp3(px(y0, x0), px(y0, x1), fx)
        };
        if fy == 0.0 {
            top
        } else {
            let bottom = if fx == 0.0 {
                px(y1, x0)
            } else {
                lerp3(px(y1, x0), px(y1, x1), fx)
            };
            lerp3(top, bottom, fy)
        }
    };
    let upper = if fc == 0.0 {
        spatial(r0, c0)
    } else {
        lerp3(spatial(r0, c0), spatial(r0, c1), fc)
    };
    if fr == 0.0 {
        upper
    } else {
        let lower = if fc == 0.0 {
            spatial(r1, c0)
        } else {
            lerp3(spatial(r1, c0), spatial(r1, c1), fc)
        };
        lerp3(upper, lower, fr)
    }
}

#[inline]
fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

/// Averages the light field warped by each pose. Views are processed in
/// parallel; poses are summed in list order, so results are deterministic.
pub fn average_warps(lf: &LightField, poses: &[CameraPose], mode: WarpMode) -> Result<LightField> {
    if poses.is_empty() {
        return Err(Error::invalid("poses", "at least one pose is required"));
    }
    let (rows, cols) = lf.angular_size();
    let focal = lf.intrinsics().focal_px;
    let terms: Vec<PoseTerms> = poses
        .iter()
        .map(|p| PoseTerms::new(p, focal, mode))
        .collect();
    let view_len = lf.view_len();
    let count = poses.len() as f64;
    let views: Vec<Vec<f32>> = (0..rows * cols)
        .into_par_iter()
        .map(|idx| {
            let (row, col) = (idx / cols, idx % cols);
            let mut acc = vec![0.0f64; view_len];
            for t in &terms {
                accumulate_view(lf, t, row, col, &mut acc);
            }
            acc.iter()
                .map(|&s| ((s / count) as f32).clamp(0.0, 1.0))
                .collect()
        })
        .collect();
    LightField::from_views(
        lf.angular_size(),
        lf.spatial_size(),
        views,
        *lf.intrinsics(),
    )
}

/// Single-pose warp: `out(u, v, y, x) = lf(warp_coords(pose, x, y, u, v))`.
pub fn warp_lightfield(lf: &LightField, pose: &CameraPose, mode: WarpMode) -> LightField {
    average_warps(lf, std::slice::from_ref(pose), mode).expect("one pose")
}

/// Blurred light field plus its mid-exposure ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurPair {
    pub blurred: LightField,
    pub ground_truth: LightField,
}

/// Time-averages `n_t` uniformly sampled warps of `lf` along a
/// midpoint-normalized trajectory.
pub fn synthesize_blur(
    lf: &LightField,
    traj: &Trajectory,
    n_t: usize,
    mode: WarpMode,
) -> Result<BlurPair> {
    traj.validate()?;
    let deviation = traj.midpoint_deviation()?;
    if deviation > IDENTITY_TOLERANCE {
        return Err(Error::NotNormalized(deviation));
    }
    let poses = sample_poses(traj, n_t)?;
    let blurred = average_warps(lf, &poses, mode)?;
    Ok(BlurPair {
        blurred,
        ground_truth: lf.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightfield::synthetic;
    use crate::motion::{make_random_trajectory, normalize_midpoint, MotionBounds};

    fn geom(principal: [f64; 2]) -> ViewGeometry {
        ViewGeometry {
            intrinsics: Intrinsics::new(500.0, 1.0, principal).unwrap(),
            angular_size: (5, 5),
        }
    }

    fn pose(t: [f64; 3], r: [f64; 3]) -> CameraPose {
        CameraPose::new(t, r).unwrap()
    }

    /// Direct per-pixel evaluation with the public sampler.
    fn naive_warp(lf: &LightField, p: &CameraPose, mode: WarpMode) -> Vec<f32> {
        let g = ViewGeometry::of(lf);
        let (rows, cols) = lf.angular_size();
        let (h, w) = lf.spatial_size();
        let mut out = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                for y in 0..h {
                    for x in 0..w {
                        let at = LfCoord {
                            x: x as f64,
                            y: y as f64,
                            u: c as f64,
                            v: r as f64,
                        };
                        let s = warp_coords(p, at, &g, mode);
                        let v = lf.sample(s.v, s.u, s.y, s.x);
                        out.extend(v.iter().map(|&v| v as f32));
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_pose_leaves_coordinates() {
        let at = LfCoord {
            x: 3.5,
            y: 7.0,
            u: 1.0,
            v: 4.0,
        };
        for mode in [WarpMode::LiteralEq13, WarpMode::SpatialRotation] {
            assert_eq!(
                warp_coords(&CameraPose::IDENTITY, at, &geom([2.0, 2.0]), mode),
                at
            );
        }
    }

    #[test]
    fn quarter_roll_about_origin() {
        let g = ViewGeometry {
            intrinsics: Intrinsics::new(500.0, 1.0, [0.0, 0.0]).unwrap(),
            angular_size: (1, 1),
        };
        let at = LfCoord {
            x: 1.0,
            y: 0.0,
            u: 0.0,
            v: 0.0,
        };
        let p = pose([0.0; 3], [0.0, 0.0, std::f64::consts::FRAC_PI_2]);
        let c = warp_coords(&p, at, &g, WarpMode::LiteralEq13);
        assert!(
            (c.x - 0.0).abs() < 1e-15 && (c.y - 1.0).abs() < 1e-15,
            "{c:?}"
        );
    }

    #[test]
    fn yaw_shifts_horizontal_angular_coordinate() {
        let at = LfCoord {
            x: 10.0,
            y: 10.0,
            u: 2.0,
            v: 2.0,
        };
        let p = pose([0.0; 3], [0.0, 0.002, 0.0]);
        let c = warp_coords(&p, at, &geom([0.0, 0.0]), WarpMode::LiteralEq13);
        assert_eq!((c.x, c.y, c.v), (10.0, 10.0, 2.0));
        assert!((c.u - 3.0).abs() < 1e-12);
        let s = warp_coords(&p, at, &geom([0.0, 0.0]), WarpMode::SpatialRotation);
        assert!((s.x - 11.0).abs() < 1e-12 && s.u == 2.0);
    }

    #[test]
    fn modes_agree_without_pitch_or_yaw() {
        let lf = synthetic::textured_scene(2, (3, 3), (12, 12));
        let p = pose([0.3, -0.7, 0.01], [0.0, 0.0, 0.05]);
        assert_eq!(
            warp_lightfield(&lf, &p, WarpMode::LiteralEq13),
            warp_lightfield(&lf, &p, WarpMode::SpatialRotation)
        );
    }

    #[test]
    fn identity_warp_is_bit_exact() {
        let lf = synthetic::textured_scene(8, (3, 3), (10, 12));
        assert_eq!(
            warp_lightfield(&lf, &CameraPose::IDENTITY, WarpMode::LiteralEq13),
            lf
        );
    }

    #[test]
    fn one_baseline_shift_reads_next_column() {
        let lf = synthetic::textured_scene(4, (3, 3), (8, 8));
        let out = warp_lightfield(&lf, &pose([1.0, 0.0, 0.0], [0.0; 3]), WarpMode::LiteralEq13);
        for r in 0..3 {
            assert_eq!(out.view_data(r, 0), lf.view_data(r, 1));
            assert_eq!(out.view_data(r, 1), lf.view_data(r, 2));
            assert_eq!(out.view_data(r, 2), lf.view_data(r, 2));
        }
    }

    #[test]
    fn fast_paths_match_direct_sampling() {
        let lf = synthetic::textured_scene(12, (3, 3), (9, 11));
        let poses = [
            pose([0.4, -0.3, 0.013], [0.0009, -0.0021, 0.0]),
            pose([-0.8, 0.25, -0.02], [0.001, 0.002, 0.03]),
        ];
        for p in &poses {
            for mode in [WarpMode::LiteralEq13, WarpMode::SpatialRotation] {
                let got = warp_lightfield(&lf, p, mode);
                assert_eq!(got.data(), &naive_warp(&lf, p, mode)[..]);
            }
        }
    }

    #[test]
    fn roll_rotates_about_view_principal_point() {
        let lf = synthetic::textured_scene(6, (3, 3), (16, 16));
        let g = ViewGeometry::of(&lf);
        let psi = 0.03;
        let p = pose([0.0; 3], [0.0, 0.0, psi]);
        let out = warp_lightfield(&lf, &p, WarpMode::LiteralEq13);
        let [pc, qc] = lf.intrinsics().principal_point;
        for &(r, c) in &[(1usize, 1usize), (0, 0), (2, 2)] {
            let cx = pc + (c as f64 - 1.0);
            let cy = qc + (r as f64 - 1.0);
            for &(y, x) in &[(3usize, 4usize), (12, 9), (7, 15)] {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                let sx = dx * psi.cos() - dy * psi.sin() + cx;
                let sy = dx * psi.sin() + dy * psi.cos() + cy;
                let want = lf.sample(r as f64, c as f64, sy, sx);
                for ch in 0..3 {
                    assert_eq!(out.get(r, c, y, x, ch), want[ch] as f32);
                }
            }
        }
        assert_eq!(g.angular_size, (3, 3));
    }

    #[test]
    fn zero_and_single_sample_blur_is_identity() {
        let lf = synthetic::textured_scene(3, (3, 3), (10, 10));
        for n in [1, 2, 7, 32] {
            let pair =
                synthesize_blur(&lf, &Trajectory::identity(), n, WarpMode::LiteralEq13).unwrap();
            assert_eq!(pair.blurred, lf);
            assert_eq!(pair.ground_truth, lf);
        }
        let traj =
            normalize_midpoint(&make_random_trajectory(1, &MotionBounds::default()).unwrap())
                .unwrap();
        let pair = synthesize_blur(&lf, &traj, 1, WarpMode::LiteralEq13).unwrap();
        assert_eq!(pair.blurred, lf);
    }

    #[test]
    fn symmetric_two_pose_shake() {
        let lf = synthetic::textured_scene(5, (3, 3), (10, 10));
        let a = pose([-0.5, 0.0, 0.0], [0.0; 3]);
        let b = pose([0.5, 0.0, 0.0], [0.0; 3]);
        let traj = Trajectory::linear(&a, &b);
        let pair = synthesize_blur(&lf, &traj, 2, WarpMode::LiteralEq13).unwrap();
        let wa = warp_lightfield(&lf, &a, WarpMode::LiteralEq13);
        let wb = warp_lightfield(&lf, &b, WarpMode::LiteralEq13);
        for i in 0..lf.data().len() {
            let want = ((wa.data()[i] as f64 + wb.data()[i] as f64) / 2.0) as f32;
            assert!((pair.blurred.data()[i] - want).abs() <= 1e-7);
        }
    }

    #[test]
    fn rejects_unnormalized_trajectory() {
        let lf = LightField::constant((3, 3), (4, 4), 0.5).unwrap();
        let traj = make_random_trajectory(2, &MotionBounds::default()).unwrap();
        assert!(matches!(
            synthesize_blur(&lf, &traj, 8, WarpMode::LiteralEq13),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn constant_input_stays_constant() {
        let lf = LightField::constant((3, 3), (8, 8), 0.625).unwrap();
        let traj =
            normalize_midpoint(&make_random_trajectory(4, &MotionBounds::default()).unwrap())
                .unwrap();
        let pair = synthesize_blur(&lf, &traj, 16, WarpMode::LiteralEq13).unwrap();
        assert_eq!(pair.blurred, lf);
    }
}
