//! Dense 4D light fields.
//!
//! A [`LightField`] is a grid of `rows × cols` sub-aperture views, each an
//! `height × width` RGB image with samples in `[0, 1]`. Views are indexed
//! `(row, col)` (the on-disk `u{row}_v{col}` naming); the horizontal angular
//! coordinate that pairs with the spatial `x` axis is the view column.

mod epi;
mod io;
mod spiral;
pub mod synthetic;

pub use epi::{extract_epi, EpiAxis, EpiSlice};
pub use io::{load_lightfield, save_lightfield, BitDepth, Manifest, MANIFEST_FILE};
pub use spiral::{angular_sample, angular_sample_positions, spiral_order, SpiralSequence};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

pub const DEFAULT_FOCAL_PX: f64 = 500.0;

/// Camera intrinsics shared by all views.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub focal_px: f64,
    pub baseline_px: f64,
    /// Central angular principal point `(x, y)` in pixels.
    pub principal_point: [f64; 2],
}

impl Intrinsics {
    pub fn new(focal_px: f64, baseline_px: f64, principal_point: [f64; 2]) -> Result<Self> {
        let intr = Intrinsics {
            focal_px,
            baseline_px,
            principal_point,
        };
        intr.validate()?;
        Ok(intr)
    }

    /// Default intrinsics for a view size: f = 500 px, 1 px baseline,
    /// principal point at the image center.
    pub fn for_spatial_size(height: usize, width: usize) -> Self {
        Intrinsics {
            focal_px: DEFAULT_FOCAL_PX,
            baseline_px: 1.0,
            principal_point: [(width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal_px.is_finite() && self.focal_px > 0.0) {
            return Err(Error::invalid("focal_px", "must be finite and > 0"));
        }
        if !(self.baseline_px.is_finite() && self.baseline_px > 0.0) {
            return Err(Error::invalid("baseline_px", "must be finite and > 0"));
        }
        if !self.principal_point.iter().all(|p| p.is_finite()) {
            return Err(Error::invalid("principal_point", "must be finite"));
        }
        Ok(())
    }

    /// Principal-point offset `(Δ_u, Δ_v)` of a view relative to the central
    /// view; `Δ_u` is horizontal (column) and `Δ_v` vertical (row).
    pub fn view_offset(&self, row: f64, col: f64, angular_size: (usize, usize)) -> (f64, f64) {
        let center_row = (angular_size.0 as f64 - 1.0) / 2.0;
        let center_col = (angular_size.1 as f64 - 1.0) / 2.0;
        (
            (col - center_col) * self.baseline_px,
            (row - center_row) * self.baseline_px,
        )
    }
}

/// Borrowed single RGB view, row-major with interleaved channels.
#[derive(Debug, Clone, Copy)]
pub struct View<'a> {
    pub height: usize,
    pub width: usize,
    pub data: &'a [f32],
}

impl<'a> View<'a> {
    pub fn new(height: usize, width: usize, data: &'a [f32]) -> Result<Self> {
        if data.len() != height * width * CHANNELS {
            return Err(Error::Shape(format!(
                "view buffer of {} samples does not match {height}x{width}x{CHANNELS}",
                data.len()
            )));
        }
        Ok(View {
            height,
            width,
            data,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LightField {
    rows: usize,
    cols: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
    intrinsics: Intrinsics,
}

impl LightField {
    /// Builds a light field from a flat `(row, col, y, x, c)` buffer.
    pub fn new(
        angular_size: (usize, usize),
        spatial_size: (usize, usize),
        data: Vec<f32>,
        intrinsics: Intrinsics,
    ) -> Result<Self> {
        let (rows, cols) = angular_size;
        let (height, width) = spatial_size;
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("angular_size", "view counts must be >= 1"));
        }
        if height == 0 || width == 0 {
            return Err(Error::invalid("spatial_size", "dimensions must be >= 1"));
        }
        let expected = rows * cols * height * width * CHANNELS;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "buffer holds {} samples, expected {expected} for {rows}x{cols}x{height}x{width}x{CHANNELS}",
                data.len()
            )));
        }
        if let Some(bad) = data
            .iter()
            .position(|v| !(v.is_finite() && (0.0..=1.0).contains(v)))
        {
            return Err(Error::invalid(
                "data",
                format!("sample {bad} = {} is outside [0, 1]", data[bad]),
            ));
        }
        intrinsics.validate()?;
        Ok(LightField {
            rows,
            cols,
            height,
            width,
            data,
            intrinsics,
        })
    }

    /// Light field with every sample equal to `value`.
    pub fn constant(
        angular_size: (usize, usize),
        spatial_size: (usize, usize),
        value: f32,
    ) -> Result<Self> {
        let n = angular_size.0 * angular_size.1 * spatial_size.0 * spatial_size.1 * CHANNELS;
        LightField::new(
            angular_size,
            spatial_size,
            vec![value; n],
            Intrinsics::for_spatial_size(spatial_size.0, spatial_size.1),
        )
    }

    /// Builds a light field from a per-sample function of `(row, col, y, x, c)`.
    pub fn from_fn(
        angular_size: (usize, usize),
        spatial_size: (usize, usize),
        intrinsics: Intrinsics,
        mut f: impl FnMut(usize, usize, usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let (rows, cols) = angular_size;
        let (height, width) = spatial_size;
        let mut data = Vec::with_capacity(rows * cols * height * width * CHANNELS);
        for r in 0..rows {
            for c in 0..cols {
                for y in 0..height {
                    for x in 0..width {
                        for ch in 0..CHANNELS {
                            data.push(f(r, c, y, x, ch));
                        }
                    }
                }
            }
        }
        LightField::new(angular_size, spatial_size, data, intrinsics)
    }

    /// Assembles a light field from per-view buffers listed in row-major
    /// angular order.
    pub fn from_views(
        angular_size: (usize, usize),
        spatial_size: (usize, usize),
        views: Vec<Vec<f32>>,
        intrinsics: Intrinsics,
    ) -> Result<Self> {
        if views.len() != angular_size.0 * angular_size.1 {
            return Err(Error::Shape(format!(
                "{} views supplied for a {}x{} grid",
                views.len(),
                angular_size.0,
                angular_size.1
            )));
        }
        let data = views.concat();
        LightField::new(angular_size, spatial_size, data, intrinsics)
    }

    pub fn angular_size(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn spatial_size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn num_views(&self) -> usize {
        self.rows * self.cols
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    pub fn with_intrinsics(mut self, intrinsics: Intrinsics) -> Result<Self> {
        intrinsics.validate()?;
        self.intrinsics = intrinsics;
        Ok(self)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn view_len(&self) -> usize {
        self.height * self.width * CHANNELS
    }

    fn view_start(&self, row: usize, col: usize) -> usize {
        (row * self.cols + col) * self.view_len()
    }

    pub fn view_data(&self, row: usize, col: usize) -> &[f32] {
        assert!(
            row < self.rows && col < self.cols,
            "view ({row}, {col}) out of range"
        );
        let start = self.view_start(row, col);
        &self.data[start..start + self.view_len()]
    }

    pub fn view(&self, row: usize, col: usize) -> View<'_> {
        View {
            height: self.height,
            width: self.width,
            data: self.view_data(row, col),
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, y: usize, x: usize, c: usize) -> f32 {
        self.data[self.view_start(row, col) + (y * self.width + x) * CHANNELS + c]
    }

    /// Applies `f` to every sample, clamping the result into `[0, 1]`.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> LightField {
        LightField {
            data: self.data.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect(),
            ..self.clone()
        }
    }

    /// Continuous sample at view coordinates `(row, col)` and pixel `(y, x)`.
    ///
    /// Separable linear interpolation over all four axes; coordinates outside
    /// the grid are clamped to the border (edge replication).
    #[inline]
    pub fn sample(&self, row: f64, col: f64, y: f64, x: f64) -> [f64; 3] {
        let (r0, r1, fr) = clamp_axis(row, self.rows);
        let (c0, c1, fc) = clamp_axis(col, self.cols);
        let (y0, y1, fy) = clamp_axis(y, self.height);
        let (x0, x1, fx) = clamp_axis(x, self.width);
        let spatial = |r: usize, c: usize| -> [f64; 3] {
            let view = self.view_data(r, c);
            let px = |yy: usize, xx: usize| -> [f64; 3] {
                let i = (yy * self.width + xx) * CHANNELS;
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
}

/// Clamps a continuous coordinate onto `[0, n-1]` and returns the two
/// bracketing nodes plus the fractional weight of the upper one.
#[inline]
pub(crate) fn clamp_axis(coord: f64, n: usize) -> (usize, usize, f64) {
    let max = (n - 1) as f64;
    let c = coord.clamp(0.0, max);
    let i0 = c.floor();
    let f = c - i0;
    let i0 = i0 as usize;
    if f == 0.0 {
        (i0, i0, 0.0)
    } else {
        (i0, (i0 + 1).min(n - 1), f)
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

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_lf() -> LightField {
        LightField::from_fn(
            (3, 3),
            (4, 5),
            Intrinsics::for_spatial_size(4, 5),
            |r, c, y, x, ch| ((r * 7 + c * 5 + y * 3 + x + ch) % 17) as f32 / 16.0,
        )
        .unwrap()
    }

    #[test]
    fn rejects_out_of_range_samples() {
        let err = LightField::new(
            (1, 1),
            (1, 1),
            vec![0.0, 1.5, 0.2],
            Intrinsics::for_spatial_size(1, 1),
        );
        assert!(err.is_err());
        let err = LightField::new(
            (1, 1),
            (1, 1),
            vec![0.0, f32::NAN, 0.2],
            Intrinsics::for_spatial_size(1, 1),
        );
        assert!(err.is_err());
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(Intrinsics::new(0.0, 1.0, [0.0, 0.0]).is_err());
        assert!(Intrinsics::new(500.0, -1.0, [0.0, 0.0]).is_err());
    }

    #[test]
    fn central_view_has_zero_offset() {
        let intr = Intrinsics::for_spatial_size(8, 8);
        assert_eq!(intr.view_offset(2.0, 2.0, (5, 5)), (0.0, 0.0));
        assert_eq!(intr.view_offset(0.0, 4.0, (5, 5)), (2.0, -2.0));
    }

    #[test]
    fn on_grid_sampling_is_exact() {
        let lf = ramp_lf();
        for r in 0..3 {
            for c in 0..3 {
                for y in 0..4 {
                    for x in 0..5 {
                        let s = lf.sample(r as f64, c as f64, y as f64, x as f64);
                        for ch in 0..3 {
                            assert_eq!(s[ch], lf.get(r, c, y, x, ch) as f64);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn angular_blend_between_constant_views() {
        let lf = LightField::from_fn(
            (3, 3),
            (2, 2),
            Intrinsics::for_spatial_size(2, 2),
            |r, _, _, _, _| [0.0, 0.2, 0.4][r],
        )
        .unwrap();
        let s = lf.sample(1.5, 1.0, 0.5, 0.5);
        for v in s {
            assert!((v - 0.3).abs() < 1e-7, "{v}");
        }
    }

    #[test]
    fn clamps_outside_coordinates() {
        let lf = ramp_lf();
        assert_eq!(
            lf.sample(1.0, 1.0, 2.0, -5.0),
            lf.sample(1.0, 1.0, 2.0, 0.0)
        );
        assert_eq!(
            lf.sample(9.0, -3.0, 10.0, 10.0),
            lf.sample(2.0, 0.0, 3.0, 4.0)
        );
    }

    #[test]
    fn constant_field_is_reproduced_exactly() {
        let lf = LightField::constant((3, 3), (4, 4), 0.37).unwrap();
        for &(r, c, y, x) in &[
            (0.3, 1.7, 2.2, 0.9),
            (-1.0, 5.5, 1.25, 3.99),
            (1.0, 1.0, 0.5, 0.5),
        ] {
            assert_eq!(lf.sample(r, c, y, x), [0.37f32 as f64; 3]);
        }
    }
}
