//! Forward and reverse-mode kernels for the layers of the network. Feature
//! maps are single-instance `channels x height x width`, row-major.

use super::real::{gemm, par_gemm, Mat, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "{} values for a {channels}x{height}x{width} tensor",
                data.len()
            )));
        }
        Ok(Tensor {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    /// Channels `[from, to)` as a new tensor.
    pub fn slice_channels(&self, from: usize, to: usize) -> Tensor<T> {
        let n = self.plane_len();
        Tensor {
            channels: to - from,
            height: self.height,
            width: self.width,
            data: self.data[from * n..to * n].to_vec(),
        }
    }

    /// Channel-wise concatenation.
    pub fn concat(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let (h, w) = (parts[0].height, parts[0].width);
        if parts.iter().any(|p| (p.height, p.width) != (h, w)) {
            return Err(Error::Shape(
                "concatenated tensors differ in spatial size".into(),
            ));
        }
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor {
            channels: parts.iter().map(|p| p.channels).sum(),
            height: h,
            width: w,
            data,
        })
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
        }
    }
}

/// Geometry of a sliding window over an image of `channels x height x width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Window {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let span = |n: usize| (n + 2 * pad).checked_sub(kernel).map(|d| d / stride + 1);
        match (span(height), span(width)) {
            (Some(out_h), Some(out_w)) => Ok(Window {
                channels,
                height,
                width,
                kernel,
                stride,
                pad,
                out_h,
                out_w,
            }),
            _ => Err(Error::Shape(format!(
                "{height}x{width} input is smaller than a {kernel}x{kernel} kernel with padding {pad}"
            ))),
        }
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Source coordinate of output `o` and kernel tap `k`, if inside.
    #[inline]
    fn source(&self, o: usize, k: usize, n: usize) -> Option<usize> {
        (o * self.stride + k)
            .checked_sub(self.pad)
            .filter(|&v| v < n)
    }
}

/// Unfolds `image` into a `patch_len x positions` matrix (zero padding).
pub fn im2col<T: Real>(image: &[T], g: &Window) -> Vec<T> {
    let positions = g.positions();
    let mut cols = vec![T::zero(); g.patch_len() * positions];
    for c in 0..g.channels {
        let plane = &image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let out = &mut cols[row * positions..(row + 1) * positions];
                for oy in 0..g.out_h {
                    let Some(y) = g.source(oy, ky, g.height) else {
                        continue;
                    };
                    let src = &plane[y * g.width..(y + 1) * g.width];
                    let dst = &mut out[oy * g.out_w..(oy + 1) * g.out_w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        if let Some(x) = g.source(ox, kx, g.width) {
                            *d = src[x];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters-and-adds columns back into `image`.
pub fn col2im<T: Real>(cols: &[T], g: &Window, image: &mut [T]) {
    let positions = g.positions();
    for c in 0..g.channels {
        let plane = &mut image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let src = &cols[row * positions..(row + 1) * positions];
                for oy in 0..g.out_h {
                    let Some(y) = g.source(oy, ky, g.height) else {
                        continue;
                    };
                    let dst = &mut plane[y * g.width..(y + 1) * g.width];
                    for ox in 0..g.out_w {
                        if let Some(x) = g.source(ox, kx, g.width) {
                            dst[x] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Convolution hyper-parameters. Kernels are `[out, in, k, k]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvSpec {
    pub const fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.in_channels * self.out_channels * self.kernel * self.kernel
    }

    fn window(&self, height: usize, width: usize, channels: usize) -> Result<Window> {
        Window::new(channels, height, width, self.kernel, self.stride, self.pad)
    }
}

fn check_channels<T>(x: &Tensor<T>, expected: usize, what: &str) -> Result<()> {
    if x.channels != expected {
        return Err(Error::Shape(format!(
            "{what} expects {expected} channels, got {}",
            x.channels
        )));
    }
    Ok(())
}

fn mm<T: Real>(parallel: bool, a: Mat<'_, T>, b: Mat<'_, T>, beta: T, c: &mut [T]) {
    if parallel {
        par_gemm(a, b, beta, c)
    } else {
        gemm(a, b, beta, c)
    }
}

pub fn conv_forward<T: Real>(
    x: &Tensor<T>,
    weight: &[T],
    bias: Option<&[T]>,
    spec: &ConvSpec,
    parallel: bool,
) -> Result<Tensor<T>> {
    check_channels(x, spec.in_channels, "convolution")?;
    let g = spec.window(x.height, x.width, x.channels)?;
    let cols = im2col(&x.data, &g);
    let mut out = Tensor::zeros(spec.out_channels, g.out_h, g.out_w);
    mm(
        parallel,
        Mat::new(weight, spec.out_channels, g.patch_len()),
        Mat::new(&cols, g.patch_len(), g.positions()),
        T::zero(),
        &mut out.data,
    );
    if let Some(b) = bias {
        for (c, &bc) in b.iter().enumerate() {
            out.data[c * g.positions()..(c + 1) * g.positions()]
                .iter_mut()
                .for_each(|v| *v += bc);
        }
    }
    Ok(out)
}

/// Accumulates kernel (and bias) gradients; returns the input gradient
/// when `need_input` is set.
pub fn conv_backward<T: Real>(
    x: &Tensor<T>,
    weight: &[T],
    spec: &ConvSpec,
    dy: &Tensor<T>,
    dweight: &mut [T],
    dbias: Option<&mut [T]>,
    need_input: bool,
) -> Result<Option<Tensor<T>>> {
    let g = spec.window(x.height, x.width, x.channels)?;
    let cols = im2col(&x.data, &g);
    let dy_mat = Mat::new(&dy.data, spec.out_channels, g.positions());
    gemm(
        dy_mat,
        Mat::new(&cols, g.patch_len(), g.positions()).t(),
        T::one(),
        dweight,
    );
    if let Some(db) = dbias {
        for (c, d) in db.iter_mut().enumerate() {
            *d += dy.plane(c).iter().copied().sum::<T>();
        }
    }
    if !need_input {
        return Ok(None);
    }
    let mut dcols = vec![T::zero(); g.patch_len() * g.positions()];
    gemm(
        Mat::new(weight, spec.out_channels, g.patch_len()).t(),
        dy_mat,
        T::zero(),
        &mut dcols,
    );
    let mut dx = Tensor::zeros(x.channels, x.height, x.width);
    col2im(&dcols, &g, &mut dx.data);
    Ok(Some(dx))
}

/// Output spatial size of a transposed convolution.
pub fn deconv_output(spec: &ConvSpec, height: usize, width: usize) -> Result<(usize, usize)> {
    let size = |n: usize| ((n - 1) * spec.stride + spec.kernel).checked_sub(2 * spec.pad);
    match (size(height), size(width)) {
        (Some(h), Some(w)) if h > 0 && w > 0 && height > 0 && width > 0 => Ok((h, w)),
        _ => Err(Error::Shape(format!(
            "transposed convolution of {height}x{width} is empty"
        ))),
    }
}

/// Transposed convolution; kernels are `[in, out, k, k]`.
pub fn deconv_forward<T: Real>(
    x: &Tensor<T>,
    weight: &[T],
    spec: &ConvSpec,
    parallel: bool,
) -> Result<Tensor<T>> {
    check_channels(x, spec.in_channels, "transposed convolution")?;
    let (oh, ow) = deconv_output(spec, x.height, x.width)?;
    let g = spec.window(oh, ow, spec.out_channels)?;
    if (g.out_h, g.out_w) != (x.height, x.width) {
        return Err(Error::Shape(
            "transposed convolution geometry mismatch".into(),
        ));
    }
    let mut cols = vec![T::zero(); g.patch_len() * g.positions()];
    mm(
        parallel,
        Mat::new(weight, spec.in_channels, g.patch_len()).t(),
        Mat::new(&x.data, spec.in_channels, g.positions()),
        T::zero(),
        &mut cols,
    );
    let mut out = Tensor::zeros(spec.out_channels, oh, ow);
    col2im(&cols, &g, &mut out.data);
    Ok(out)
}

pub fn deconv_backward<T: Real>(
    x: &Tensor<T>,
    weight: &[T],
    spec: &ConvSpec,
    dy: &Tensor<T>,
    dweight: &mut [T],
    need_input: bool,
) -> Result<Option<Tensor<T>>> {
    let g = spec.window(dy.height, dy.width, spec.out_channels)?;
    let dcols = im2col(&dy.data, &g);
    let dcols_mat = Mat::new(&dcols, g.patch_len(), g.positions());
    gemm(
        Mat::new(&x.data, spec.in_channels, g.positions()),
        dcols_mat.t(),
        T::one(),
        dweight,
    );
    if !need_input {
        return Ok(None);
    }
    let mut dx = Tensor::zeros(x.channels, x.height, x.width);
    gemm(
        Mat::new(weight, spec.in_channels, g.patch_len()),
        dcols_mat,
        T::zero(),
        &mut dx.data,
    );
    Ok(Some(dx))
}

/// Per-channel statistics kept for the backward pass.
#[derive(Debug, Clone)]
pub struct NormCache<T> {
    pub normalized: Tensor<T>,
    pub inv_std: Vec<f64>,
}

/// `(x - mean) / sqrt(var + eps) * gamma + beta` per channel, with
/// population statistics accumulated in `f64`.
pub fn instance_norm_forward<T: Real>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    eps: f64,
) -> (Tensor<T>, NormCache<T>) {
    let n = x.plane_len();
    let mut normalized = Tensor::zeros(x.channels, x.height, x.width);
    let mut out = Tensor::zeros(x.channels, x.height, x.width);
    let mut inv_std = Vec::with_capacity(x.channels);
    for c in 0..x.channels {
        let plane = x.plane(c);
        let mean = plane.iter().map(|v| v.f64()).sum::<f64>() / n as f64;
        let var = plane.iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / n as f64;
        let inv = 1.0 / (var + eps).sqrt();
        inv_std.push(inv);
        let (g, b) = (gamma[c], beta[c]);
        let range = c * n..(c + 1) * n;
        for ((xh, o), &v) in normalized.data[range.clone()]
            .iter_mut()
            .zip(&mut out.data[range])
            .zip(plane)
        {
            *xh = T::of((v.f64() - mean) * inv);
            *o = *xh * g + b;
        }
    }
    (
        out,
        NormCache {
            normalized,
            inv_std,
        },
    )
}

pub fn instance_norm_backward<T: Real>(
    cache: &NormCache<T>,
    gamma: &[T],
    dy: &Tensor<T>,
    dgamma: &mut [T],
    dbeta: &mut [T],
) -> Tensor<T> {
    let xhat = &cache.normalized;
    let n = xhat.plane_len();
    let mut dx = Tensor::zeros(xhat.channels, xhat.height, xhat.width);
    for c in 0..xhat.channels {
        let (xp, dp) = (xhat.plane(c), dy.plane(c));
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for (&h, &d) in xp.iter().zip(dp) {
            sum_dy += d.f64();
            sum_dy_xhat += d.f64() * h.f64();
        }
        dgamma[c] += T::of(sum_dy_xhat);
        dbeta[c] += T::of(sum_dy);
        let g = gamma[c].f64();
        let scale = g * cache.inv_std[c];
        let (mean_dy, mean_dy_xhat) = (sum_dy / n as f64, sum_dy_xhat / n as f64);
        for ((o, &h), &d) in dx.data[c * n..(c + 1) * n].iter_mut().zip(xp).zip(dp) {
            *o = T::of(scale * (d.f64() - mean_dy - h.f64() * mean_dy_xhat));
        }
    }
    dx
}

pub fn relu_inplace<T: Real>(x: &mut Tensor<T>) {
    x.data.iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = T::zero()
        }
    });
}

/// Masks `dy` where the ReLU output was not positive.
pub fn relu_backward_inplace<T: Real>(output: &Tensor<T>, dy: &mut Tensor<T>) {
    for (d, &o) in dy.data.iter_mut().zip(&output.data) {
        if o <= T::zero() {
            *d = T::zero();
        }
    }
}
