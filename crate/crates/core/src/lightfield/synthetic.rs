//! Procedural two-layer Lambertian scenes for tests, examples and toy
//! training sets.
//!
//! A textured background plane and an occluding foreground disc sit at
//! different disparities, so neighbouring views differ by a sub-pixel to
//! few-pixel parallax shift.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Intrinsics, LightField};

#[derive(Debug, Clone, Copy)]
pub struct SceneParams {
    /// Background parallax in pixels per view step.
    pub background_disparity: f64,
    /// Foreground parallax in pixels per view step.
    pub foreground_disparity: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            background_disparity: 0.5,
            foreground_disparity: 1.5,
        }
    }
}

struct Wave {
    kx: f64,
    ky: f64,
    phase: [f64; 3],
    amp: f64,
}

struct Layer {
    waves: Vec<Wave>,
    cell: f64,
    cell_amp: f64,
    base: [f64; 3],
}

impl Layer {
    fn random(rng: &mut ChaCha8Rng, freq: f64) -> Self {
        let waves = (0..4)
            .map(|_| {
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let k = freq * rng.random_range(0.5..1.5);
                Wave {
                    kx: k * angle.cos(),
                    ky: k * angle.sin(),
                    phase: [
                        rng.random_range(0.0..std::f64::consts::TAU),
                        rng.random_range(0.0..std::f64::consts::TAU),
                        rng.random_range(0.0..std::f64::consts::TAU),
                    ],
                    amp: rng.random_range(0.05..0.12),
                }
            })
            .collect();
        Layer {
            waves,
            cell: rng.random_range(5.0..11.0),
            cell_amp: rng.random_range(0.08..0.18),
            base: [
                rng.random_range(0.35..0.65),
                rng.random_range(0.35..0.65),
                rng.random_range(0.35..0.65),
            ],
        }
    }

    fn color(&self, x: f64, y: f64, ch: usize) -> f64 {
        let mut v = self.base[ch];
        for w in &self.waves {
            v += w.amp * (w.kx * x + w.ky * y + w.phase[ch]).sin();
        }
        let checker = ((x / self.cell).floor() + (y / self.cell).floor()) as i64;
        if checker.rem_euclid(2) == 0 {
            v += self.cell_amp;
        } else {
            v -= self.cell_amp;
        }
        v.clamp(0.0, 1.0)
    }
}

/// Deterministic scene with default parallax.
pub fn textured_scene(
    seed: u64,
    angular_size: (usize, usize),
    spatial_size: (usize, usize),
) -> LightField {
    scene_with(seed, angular_size, spatial_size, SceneParams::default())
}

pub fn scene_with(
    seed: u64,
    angular_size: (usize, usize),
    spatial_size: (usize, usize),
    params: SceneParams,
) -> LightField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (height, width) = spatial_size;
    let background = Layer::random(&mut rng, 0.35);
    let foreground = Layer::random(&mut rng, 0.6);
    let radius = rng.random_range(0.2..0.35) * height.min(width) as f64;
    let cx = width as f64 * rng.random_range(0.35..0.65);
    let cy = height as f64 * rng.random_range(0.35..0.65);
    let center_row = (angular_size.0 as f64 - 1.0) / 2.0;
    let center_col = (angular_size.1 as f64 - 1.0) / 2.0;

    LightField::from_fn(
        angular_size,
        spatial_size,
        Intrinsics::for_spatial_size(height, width),
        |r, c, y, x, ch| {
            let du = c as f64 - center_col;
            let dv = r as f64 - center_row;
            let fx = x as f64 + params.foreground_disparity * du;
            let fy = y as f64 + params.foreground_disparity * dv;
            let v = if (fx - cx).powi(2) + (fy - cy).powi(2) <= radius * radius {
                foreground.color(fx, fy, ch)
            } else {
                let bx = x as f64 + params.background_disparity * du;
                let by = y as f64 + params.background_disparity * dv;
                background.color(bx, by, ch)
            };
            v as f32
        },
    )
    .expect("procedural samples are clamped into [0, 1]")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_seed_dependent() {
        let a = textured_scene(4, (3, 3), (16, 16));
        assert_eq!(a, textured_scene(4, (3, 3), (16, 16)));
        assert_ne!(a, textured_scene(5, (3, 3), (16, 16)));
    }

    #[test]
    fn views_exhibit_parallax() {
        let lf = textured_scene(1, (3, 3), (24, 24));
        assert_ne!(lf.view_data(1, 0), lf.view_data(1, 2));
    }
}
