//! Full-resolution deblurring of a light field along its complete spiral.

use std::time::Instant;

use super::layers::Tensor;
use super::model::{forward_step, frame_window, initial_hidden};
use super::params::{NetworkParams, RGB};
use crate::error::{Error, Result};
use crate::lightfield::{spiral_order, LightField};

/// Interleaved view buffer to a CHW tensor.
pub fn view_tensor(lf: &LightField, row: usize, col: usize) -> Tensor<f32> {
    let (h, w) = lf.spatial_size();
    let view = lf.view_data(row, col);
    let mut t = Tensor::zeros(RGB, h, w);
    for c in 0..RGB {
        for (d, px) in t.data[c * h * w..(c + 1) * h * w]
            .iter_mut()
            .zip(view.chunks_exact(RGB))
        {
            *d = px[c];
        }
    }
    t
}

/// CHW tensor back to an interleaved view buffer.
pub fn tensor_view(t: &Tensor<f32>) -> Vec<f32> {
    let plane = t.height * t.width;
    let mut out = vec![0.0; plane * RGB];
    for (i, px) in out.chunks_exact_mut(RGB).enumerate() {
        for c in 0..RGB {
            px[c] = t.data[c * plane + i];
        }
    }
    out
}

/// Restored light field plus the wall time of each recurrence step, in
/// spiral order.
#[derive(Debug, Clone)]
pub struct Deblurred {
    pub lightfield: LightField,
    pub step_seconds: Vec<f64>,
}

/// Deblurs every view, walking the full spiral. Spatial dimensions must be
/// even; see [`deblur_lightfield_padded`] otherwise.
pub fn deblur_lightfield(lf: &LightField, params: &NetworkParams<f32>) -> Result<LightField> {
    Ok(deblur_lightfield_timed(lf, params)?.lightfield)
}

pub fn deblur_lightfield_timed(lf: &LightField, params: &NetworkParams<f32>) -> Result<Deblurred> {
    let (h, w) = lf.spatial_size();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::invalid(
            "spatial_size",
            format!("{h}x{w} is not divisible by the network stride 2; pad the input first"),
        ));
    }
    let (rows, cols) = lf.angular_size();
    let spiral = spiral_order(rows, cols)?;
    let inputs: Vec<Tensor<f32>> = spiral
        .order
        .iter()
        .map(|&(r, c)| view_tensor(lf, r, c))
        .collect();

    let mut views = vec![Vec::new(); rows * cols];
    let mut step_seconds = Vec::with_capacity(inputs.len());
    let mut hidden = initial_hidden(params, h, w);
    for (a, &(r, c)) in spiral.order.iter().enumerate() {
        let start = Instant::now();
        let frames: Vec<&Tensor<f32>> =
            frame_window(inputs.len(), a, params.config.temporal_radius)
                .into_iter()
                .map(|i| &inputs[i])
                .collect();
        let (step, _) = forward_step(params, &frames, &hidden, false, true)?;
        hidden = step.hidden;
        views[r * cols + c] = tensor_view(&step.restored);
        step_seconds.push(start.elapsed().as_secs_f64());
    }
    let lightfield = LightField::from_views((rows, cols), (h, w), views, *lf.intrinsics())?;
    Ok(Deblurred {
        lightfield,
        step_seconds,
    })
}

/// Reflect index into `0..n` without repeating the edge sample.
fn reflect(i: usize, n: usize) -> usize {
    if i < n || n == 1 {
        i.min(n - 1)
    } else {
        2 * (n - 1) - i
    }
}

/// Like [`deblur_lightfield`], but reflect-pads odd spatial dimensions by
/// one sample and crops the result back.
pub fn deblur_lightfield_padded(
    lf: &LightField,
    params: &NetworkParams<f32>,
) -> Result<LightField> {
    let (h, w) = lf.spatial_size();
    if h % 2 == 0 && w % 2 == 0 {
        return deblur_lightfield(lf, params);
    }
    let (ph, pw) = (h + h % 2, w + w % 2);
    let padded = LightField::from_fn(
        lf.angular_size(),
        (ph, pw),
        *lf.intrinsics(),
        |r, c, y, x, ch| lf.get(r, c, reflect(y, h), reflect(x, w), ch),
    )?;
    let out = deblur_lightfield(&padded, params)?;
    LightField::from_fn(
        lf.angular_size(),
        (h, w),
        *lf.intrinsics(),
        |r, c, y, x, ch| out.get(r, c, y, x, ch),
    )
}
