use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io, LightField, CHANNELS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpiAxis {
    /// Rows are views `u = 0..U` at a fixed view column and pixel row `y`;
    /// columns span `x`.
    Horizontal,
    /// Rows are views `v = 0..V` at a fixed view row and pixel column `x`;
    /// columns span `y`.
    Vertical,
}

/// Epipolar plane image: one angular axis against one spatial axis.
#[derive(Debug, Clone, PartialEq)]
pub struct EpiSlice {
    pub rows: usize,
    pub cols: usize,
    /// Row-major RGB.
    pub data: Vec<f32>,
}

impl EpiSlice {
    pub fn get(&self, row: usize, col: usize, c: usize) -> f32 {
        self.data[(row * self.cols + col) * CHANNELS + c]
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_rgb_png(path.as_ref(), self.rows, self.cols, &self.data)
    }
}

/// `fixed_spatial` is the pixel row (horizontal) or column (vertical);
/// `fixed_angular` is the view column (horizontal) or view row (vertical).
pub fn extract_epi(
    lf: &LightField,
    axis: EpiAxis,
    fixed_spatial: usize,
    fixed_angular: usize,
) -> Result<EpiSlice> {
    let (rows, cols) = lf.angular_size();
    let (height, width) = lf.spatial_size();
    let (n_views, n_pixels, spatial_limit, angular_limit) = match axis {
        EpiAxis::Horizontal => (rows, width, height, cols),
        EpiAxis::Vertical => (cols, height, width, rows),
    };
    if fixed_spatial >= spatial_limit {
        return Err(Error::invalid(
            "fixed_spatial",
            format!("{fixed_spatial} out of range 0..{spatial_limit}"),
        ));
    }
    if fixed_angular >= angular_limit {
        return Err(Error::invalid(
            "fixed_angular",
            format!("{fixed_angular} out of range 0..{angular_limit}"),
        ));
    }
    let mut data = Vec::with_capacity(n_views * n_pixels * CHANNELS);
    for a in 0..n_views {
        for p in 0..n_pixels {
            let (r, c, y, x) = match axis {
                EpiAxis::Horizontal => (a, fixed_angular, fixed_spatial, p),
                EpiAxis::Vertical => (fixed_angular, a, p, fixed_spatial),
            };
            for ch in 0..CHANNELS {
                data.push(lf.get(r, c, y, x, ch));
            }
        }
    }
    Ok(EpiSlice {
        rows: n_views,
        cols: n_pixels,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightfield::Intrinsics;

    #[test]
    fn shape_matches_source() {
        let lf = LightField::constant((5, 5), (32, 48), 0.5).unwrap();
        let h = extract_epi(&lf, EpiAxis::Horizontal, 10, 2).unwrap();
        assert_eq!((h.rows, h.cols), (5, 48));
        let v = extract_epi(&lf, EpiAxis::Vertical, 10, 2).unwrap();
        assert_eq!((v.rows, v.cols), (5, 32));
    }

    #[test]
    fn view_indexed_values() {
        let lf = LightField::from_fn(
            (5, 3),
            (4, 6),
            Intrinsics::for_spatial_size(4, 6),
            |r, _, _, _, _| r as f32 / 10.0,
        )
        .unwrap();
        let epi = extract_epi(&lf, EpiAxis::Horizontal, 1, 0).unwrap();
        for i in 0..5 {
            for x in 0..6 {
                assert_eq!(epi.get(i, x, 0), i as f32 / 10.0);
            }
        }
    }

    #[test]
    fn identical_views_give_identical_rows() {
        let base = super::super::synthetic::textured_scene(2, (1, 1), (8, 8));
        let lf = LightField::from_fn((3, 3), (8, 8), *base.intrinsics(), |_, _, y, x, c| {
            base.get(0, 0, y, x, c)
        })
        .unwrap();
        let epi = extract_epi(&lf, EpiAxis::Vertical, 3, 1).unwrap();
        let row_len = epi.cols * CHANNELS;
        for r in 1..epi.rows {
            assert_eq!(
                epi.data[..row_len],
                epi.data[r * row_len..(r + 1) * row_len]
            );
        }
    }

    #[test]
    fn out_of_range() {
        let lf = LightField::constant((3, 3), (4, 4), 0.0).unwrap();
        assert!(extract_epi(&lf, EpiAxis::Horizontal, 4, 0).is_err());
        assert!(extract_epi(&lf, EpiAxis::Vertical, 0, 3).is_err());
    }
}
