//! Recurrent forward pass, loss and backpropagation through the unroll.

use super::layers::{
    conv_backward, conv_forward, deconv_backward, deconv_forward, instance_norm_backward,
    instance_norm_forward, relu_backward_inplace, relu_inplace, NormCache, Tensor,
};
use super::params::{Architecture, NetworkParams, Norm, RGB};
use super::real::Real;
use crate::error::{Error, Result};

struct BlockCache<T> {
    input: Tensor<T>,
    norm_a: NormCache<T>,
    relu_a: Tensor<T>,
    norm_b: NormCache<T>,
}

/// Activations of one recurrent step needed by the backward pass.
pub struct StepCache<T> {
    stacked: Tensor<T>,
    norm1: NormCache<T>,
    relu1: Tensor<T>,
    norm2: NormCache<T>,
    relu2: Tensor<T>,
    blocks: Vec<BlockCache<T>>,
    features: Tensor<T>,
    deconv_norm: NormCache<T>,
    deconv_relu: Tensor<T>,
    conv3_norm: NormCache<T>,
    hidden: Tensor<T>,
    tanh: Tensor<T>,
    unclamped: Tensor<T>,
}

/// Output of one step: restored centre view and the next hidden state.
pub struct StepOutput<T> {
    pub restored: Tensor<T>,
    pub hidden: Tensor<T>,
}

fn norm_relu<T: Real>(x: &Tensor<T>, n: &Norm<T>, eps: f64) -> (Tensor<T>, NormCache<T>) {
    let (mut y, cache) = instance_norm_forward(x, &n.gamma, &n.beta, eps);
    relu_inplace(&mut y);
    (y, cache)
}

fn check_inputs<T: Real>(
    params: &NetworkParams<T>,
    frames: &[&Tensor<T>],
    hidden: &Tensor<T>,
) -> Result<()> {
    let cfg = &params.config;
    if frames.len() != cfg.frames() {
        return Err(Error::Shape(format!(
            "expected {} frames, got {}",
            cfg.frames(),
            frames.len()
        )));
    }
    let (c, h, w) = frames[0].shape();
    if c != RGB || frames.iter().any(|f| f.shape() != (c, h, w)) {
        return Err(Error::Shape(
            "frames must be RGB views of one spatial size".into(),
        ));
    }
    if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
        return Err(Error::Shape(format!(
            "spatial size {h}x{w} is not divisible by 2"
        )));
    }
    if hidden.shape() != (cfg.hidden_channels, h / 2, w / 2) {
        return Err(Error::Shape(format!(
            "hidden state {:?} does not match ({}, {}, {})",
            hidden.shape(),
            cfg.hidden_channels,
            h / 2,
            w / 2
        )));
    }
    Ok(())
}

/// Zero hidden state for views of `height x width`.
pub fn initial_hidden<T: Real>(
    params: &NetworkParams<T>,
    height: usize,
    width: usize,
) -> Tensor<T> {
    Tensor::zeros(params.config.hidden_channels, height / 2, width / 2)
}

pub(crate) fn forward_step<T: Real>(
    params: &NetworkParams<T>,
    frames: &[&Tensor<T>],
    hidden: &Tensor<T>,
    keep: bool,
    parallel: bool,
) -> Result<(StepOutput<T>, Option<StepCache<T>>)> {
    check_inputs(params, frames, hidden)?;
    let arch: Architecture = params.config.arch();
    let eps = params.config.norm_eps;
    let center = frames[params.config.temporal_radius];

    let stacked = Tensor::concat(frames)?;
    let a1 = conv_forward(&stacked, &params.conv1, None, &arch.conv1, parallel)?;
    let (relu1, norm1) = norm_relu(&a1, &params.norm1, eps);
    let a2 = conv_forward(&relu1, &params.conv2, None, &arch.conv2, parallel)?;
    let (relu2, norm2) = norm_relu(&a2, &params.norm2, eps);

    let mut x = Tensor::concat(&[&relu2, hidden])?;
    let wide = arch.block.out_channels;
    let mut blocks = Vec::with_capacity(params.blocks.len());
    for (i, b) in params.blocks.iter().enumerate() {
        let ca = conv_forward(&x, &b.conv_a, None, &arch.block_a(i), parallel)?;
        let (relu_a, norm_a) = norm_relu(&ca, &b.norm_a, eps);
        let cb = conv_forward(&relu_a, &b.conv_b, None, &arch.block, parallel)?;
        let (mut out, norm_b) = instance_norm_forward(&cb, &b.norm_b.gamma, &b.norm_b.beta, eps);
        for (o, &s) in out.data.iter_mut().zip(&x.data[..wide * x.plane_len()]) {
            *o += s;
        }
        let input = std::mem::replace(&mut x, out);
        if keep {
            blocks.push(BlockCache {
                input,
                norm_a,
                relu_a,
                norm_b,
            });
        }
    }
    let features = x;

    let d = deconv_forward(&features, &params.deconv, &arch.deconv, parallel)?;
    let (deconv_relu, deconv_norm) = norm_relu(&d, &params.deconv_norm, eps);
    let c3 = conv_forward(&features, &params.conv3, None, &arch.conv3, parallel)?;
    let (next_hidden, conv3_norm) = norm_relu(&c3, &params.conv3_norm, eps);

    let r = conv_forward(
        &deconv_relu,
        &params.conv4,
        Some(&params.conv4_bias),
        &arch.conv4,
        parallel,
    )?;
    let tanh = Tensor {
        data: r.data.iter().map(|v| v.tanh()).collect(),
        ..r
    };
    let unclamped = Tensor {
        data: center
            .data
            .iter()
            .zip(&tanh.data)
            .map(|(&c, &t)| c + t)
            .collect(),
        ..tanh.clone()
    };
    let restored = Tensor {
        data: unclamped
            .data
            .iter()
            .map(|&v| v.max(T::zero()).min(T::one()))
            .collect(),
        ..unclamped.clone()
    };
    let cache = keep.then(|| StepCache {
        stacked,
        norm1,
        relu1,
        norm2,
        relu2,
        blocks,
        features,
        deconv_norm,
        deconv_relu,
        conv3_norm,
        hidden: next_hidden.clone(),
        tanh,
        unclamped,
    });
    Ok((
        StepOutput {
            restored,
            hidden: next_hidden,
        },
        cache,
    ))
}

/// One recurrent step: restores the centre of `frames` (`2b + 1` RGB views)
/// given the previous hidden state.
pub fn net_forward<T: Real>(
    params: &NetworkParams<T>,
    frames: &[&Tensor<T>],
    hidden: &Tensor<T>,
) -> Result<StepOutput<T>> {
    Ok(forward_step(params, frames, hidden, false, false)?.0)
}

fn norm_back<T: Real>(
    cache: &NormCache<T>,
    n: &Norm<T>,
    g: &mut Norm<T>,
    dy: &Tensor<T>,
) -> Tensor<T> {
    instance_norm_backward(cache, &n.gamma, dy, &mut g.gamma, &mut g.beta)
}

/// Backpropagates one step. `d_restored` is the loss gradient w.r.t. the
/// restored view and `d_hidden` w.r.t. the emitted hidden state; returns
/// the gradient w.r.t. the incoming hidden state.
pub(crate) fn backward_step<T: Real>(
    params: &NetworkParams<T>,
    cache: &StepCache<T>,
    d_restored: &Tensor<T>,
    d_hidden: Option<&Tensor<T>>,
    grads: &mut NetworkParams<T>,
) -> Result<Tensor<T>> {
    let arch = params.config.arch();

    // Clamp passes gradient inside [0, 1]; tanh' = 1 - t^2.
    let mut dr = d_restored.clone();
    for ((d, &u), &t) in dr
        .data
        .iter_mut()
        .zip(&cache.unclamped.data)
        .zip(&cache.tanh.data)
    {
        *d = if u >= T::zero() && u <= T::one() {
            *d * (T::one() - t * t)
        } else {
            T::zero()
        };
    }
    let mut d_dec = conv_backward(
        &cache.deconv_relu,
        &params.conv4,
        &arch.conv4,
        &dr,
        &mut grads.conv4,
        Some(&mut grads.conv4_bias),
        true,
    )?
    .expect("input gradient");
    relu_backward_inplace(&cache.deconv_relu, &mut d_dec);
    let d_dec = norm_back(
        &cache.deconv_norm,
        &params.deconv_norm,
        &mut grads.deconv_norm,
        &d_dec,
    );
    let mut d_feat = deconv_backward(
        &cache.features,
        &params.deconv,
        &arch.deconv,
        &d_dec,
        &mut grads.deconv,
        true,
    )?
    .expect("input gradient");

    if let Some(dh) = d_hidden {
        let mut dh = dh.clone();
        relu_backward_inplace(&cache.hidden, &mut dh);
        let dh = norm_back(
            &cache.conv3_norm,
            &params.conv3_norm,
            &mut grads.conv3_norm,
            &dh,
        );
        let d3 = conv_backward(
            &cache.features,
            &params.conv3,
            &arch.conv3,
            &dh,
            &mut grads.conv3,
            None,
            true,
        )?
        .expect("input gradient");
        d_feat
            .data
            .iter_mut()
            .zip(&d3.data)
            .for_each(|(a, &b)| *a += b);
    }

    let wide = arch.block.out_channels;
    let mut d_out = d_feat;
    for (i, (b, c)) in params.blocks.iter().zip(&cache.blocks).enumerate().rev() {
        let g = &mut grads.blocks[i];
        let d_cb = norm_back(&c.norm_b, &b.norm_b, &mut g.norm_b, &d_out);
        let mut d_ra = conv_backward(
            &c.relu_a,
            &b.conv_b,
            &arch.block,
            &d_cb,
            &mut g.conv_b,
            None,
            true,
        )?
        .expect("input gradient");
        relu_backward_inplace(&c.relu_a, &mut d_ra);
        let d_ca = norm_back(&c.norm_a, &b.norm_a, &mut g.norm_a, &d_ra);
        let mut d_in = conv_backward(
            &c.input,
            &b.conv_a,
            &arch.block_a(i),
            &d_ca,
            &mut g.conv_a,
            None,
            true,
        )?
        .expect("input gradient");
        let skip = wide * d_in.plane_len();
        d_in.data[..skip]
            .iter_mut()
            .zip(&d_out.data)
            .for_each(|(a, &b)| *a += b);
        d_out = d_in;
    }

    let d_hidden_prev = d_out.slice_channels(wide, d_out.channels);
    let mut d_relu2 = d_out.slice_channels(0, wide);
    relu_backward_inplace(&cache.relu2, &mut d_relu2);
    let d_a2 = norm_back(&cache.norm2, &params.norm2, &mut grads.norm2, &d_relu2);
    let mut d_relu1 = conv_backward(
        &cache.relu1,
        &params.conv2,
        &arch.conv2,
        &d_a2,
        &mut grads.conv2,
        None,
        true,
    )?
    .expect("input gradient");
    relu_backward_inplace(&cache.relu1, &mut d_relu1);
    let d_a1 = norm_back(&cache.norm1, &params.norm1, &mut grads.norm1, &d_relu1);
    conv_backward(
        &cache.stacked,
        &params.conv1,
        &arch.conv1,
        &d_a1,
        &mut grads.conv1,
        None,
        false,
    )?;
    Ok(d_hidden_prev)
}

/// Mean squared error over every sample, accumulated in `f64`.
pub fn mse<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (x.f64() - y.f64()).powi(2))
        .sum();
    Ok(sum / a.data.len() as f64)
}

/// Single-step objective: mean squared error plus `lambda * sum w^2`.
pub fn loss<T: Real>(
    restored: &Tensor<T>,
    sharp: &Tensor<T>,
    params: &NetworkParams<T>,
    lambda: f64,
) -> Result<f64> {
    Ok(mse(restored, sharp)? + lambda * params.sum_squares())
}

/// Indices of the `2b + 1` frames around step `a`, replicated at the ends.
pub fn frame_window(len: usize, a: usize, radius: usize) -> Vec<usize> {
    (0..=2 * radius)
        .map(|k| (a + k).saturating_sub(radius).min(len - 1))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnrollLoss {
    /// Mean data term over the steps plus the weight penalty.
    pub total: f64,
    pub per_step: Vec<f64>,
    pub penalty: f64,
}

fn check_sequence<T>(blurred: &[Tensor<T>], sharp: &[Tensor<T>]) -> Result<()> {
    if blurred.is_empty() || blurred.len() != sharp.len() {
        return Err(Error::Shape(format!(
            "sequence lengths {} (blurred) and {} (sharp)",
            blurred.len(),
            sharp.len()
        )));
    }
    Ok(())
}

/// Runs the recurrence over a view sequence, returning each restored view.
pub fn run_sequence<T: Real>(
    params: &NetworkParams<T>,
    views: &[Tensor<T>],
    parallel: bool,
) -> Result<Vec<Tensor<T>>> {
    if views.is_empty() {
        return Ok(Vec::new());
    }
    let mut hidden = initial_hidden(params, views[0].height, views[0].width);
    let mut out = Vec::with_capacity(views.len());
    for a in 0..views.len() {
        let frames: Vec<&Tensor<T>> = frame_window(views.len(), a, params.config.temporal_radius)
            .into_iter()
            .map(|i| &views[i])
            .collect();
        let (step, _) = forward_step(params, &frames, &hidden, false, parallel)?;
        hidden = step.hidden;
        out.push(step.restored);
    }
    Ok(out)
}

/// Unrolled objective without gradients.
pub fn unroll_loss<T: Real>(
    params: &NetworkParams<T>,
    blurred: &[Tensor<T>],
    sharp: &[Tensor<T>],
    lambda: f64,
) -> Result<UnrollLoss> {
    check_sequence(blurred, sharp)?;
    let restored = run_sequence(params, blurred, false)?;
    let per_step = restored
        .iter()
        .zip(sharp)
        .map(|(p, s)| mse(p, s))
        .collect::<Result<Vec<_>>>()?;
    let penalty = lambda * params.sum_squares();
    Ok(UnrollLoss {
        total: per_step.iter().sum::<f64>() / per_step.len() as f64 + penalty,
        per_step,
        penalty,
    })
}

/// Unrolled objective and its exact gradient, backpropagated through the
/// hidden state across all steps.
pub fn unroll_gradients<T: Real>(
    params: &NetworkParams<T>,
    blurred: &[Tensor<T>],
    sharp: &[Tensor<T>],
    lambda: f64,
) -> Result<(UnrollLoss, NetworkParams<T>)> {
    check_sequence(blurred, sharp)?;
    let n = blurred.len();
    let mut hidden = initial_hidden(params, blurred[0].height, blurred[0].width);
    let mut caches = Vec::with_capacity(n);
    let mut restored = Vec::with_capacity(n);
    for a in 0..n {
        let frames: Vec<&Tensor<T>> = frame_window(n, a, params.config.temporal_radius)
            .into_iter()
            .map(|i| &blurred[i])
            .collect();
        let (step, cache) = forward_step(params, &frames, &hidden, true, false)?;
        hidden = step.hidden;
        restored.push(step.restored);
        caches.push(cache.expect("cache kept"));
    }
    let per_step = restored
        .iter()
        .zip(sharp)
        .map(|(p, s)| mse(p, s))
        .collect::<Result<Vec<_>>>()?;
    let penalty = lambda * params.sum_squares();

    let mut grads = params.zeros_like();
    let mut d_hidden: Option<Tensor<T>> = None;
    for a in (0..n).rev() {
        let (p, s) = (&restored[a], &sharp[a]);
        let scale = 2.0 / (n as f64 * p.data.len() as f64);
        let dp = Tensor {
            data: p
                .data
                .iter()
                .zip(&s.data)
                .map(|(&x, &y)| T::of(scale * (x.f64() - y.f64())))
                .collect(),
            ..p.clone()
        };
        let dh_prev = backward_step(params, &caches[a], &dp, d_hidden.as_ref(), &mut grads)?;
        d_hidden = Some(dh_prev);
    }
    for (g, w) in grads.tensors_mut().into_iter().zip(params.tensors()) {
        for (gv, &wv) in g.iter_mut().zip(w) {
            *gv += T::of(2.0 * lambda * wv.f64());
        }
    }
    Ok((
        UnrollLoss {
            total: per_step.iter().sum::<f64>() / n as f64 + penalty,
            per_step,
            penalty,
        },
        grads,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::params::NetworkConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny(seed: u64) -> NetworkConfig {
        NetworkConfig {
            base_channels: 2,
            hidden_channels: 2,
            residual_blocks: 1,
            seed,
            zero_init_output: false,
            ..NetworkConfig::default()
        }
    }

    fn views(seed: u64, n: usize, h: usize, w: usize) -> Vec<Tensor<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Tensor::from_vec(
                    3,
                    h,
                    w,
                    (0..3 * h * w).map(|_| rng.random_range(0.2..0.8)).collect(),
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn frame_window_replicates_ends() {
        assert_eq!(frame_window(5, 0, 1), vec![0, 0, 1]);
        assert_eq!(frame_window(5, 2, 1), vec![1, 2, 3]);
        assert_eq!(frame_window(5, 4, 1), vec![3, 4, 4]);
        assert_eq!(frame_window(1, 0, 2), vec![0; 5]);
        assert_eq!(frame_window(4, 1, 0), vec![1]);
    }

    #[test]
    fn zero_params_return_centre_frame() {
        let cfg = tiny(0);
        let p = NetworkParams::<f32>::zeros(&cfg).unwrap();
        let v: Vec<Tensor<f32>> = views(1, 3, 6, 8).iter().map(|t| t.cast()).collect();
        let h = initial_hidden(&p, 6, 8);
        let out = net_forward(&p, &[&v[0], &v[1], &v[2]], &h).unwrap();
        assert_eq!(out.restored, v[1]);
        assert_eq!(out.hidden.shape(), (2, 3, 4));
    }

    #[test]
    fn shapes_follow_layer_table() {
        let cfg = NetworkConfig {
            base_channels: 3,
            hidden_channels: 5,
            residual_blocks: 2,
            ..NetworkConfig::default()
        };
        let p = NetworkParams::<f32>::init(&cfg).unwrap();
        let v = Tensor::<f32>::zeros(3, 10, 14);
        let out = net_forward(&p, &[&v, &v, &v], &initial_hidden(&p, 10, 14)).unwrap();
        assert_eq!(out.restored.shape(), (3, 10, 14));
        assert_eq!(out.hidden.shape(), (5, 5, 7));
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = NetworkParams::<f32>::init(&tiny(0)).unwrap();
        let odd = Tensor::<f32>::zeros(3, 5, 6);
        assert!(net_forward(&p, &[&odd, &odd, &odd], &Tensor::zeros(2, 2, 3)).is_err());
        let v = Tensor::<f32>::zeros(3, 6, 6);
        assert!(net_forward(&p, &[&v, &v], &initial_hidden(&p, 6, 6)).is_err());
        assert!(net_forward(&p, &[&v, &v, &v], &Tensor::zeros(2, 2, 2)).is_err());
    }

    #[test]
    fn loss_closed_forms() {
        let cfg = tiny(0);
        let mut p = NetworkParams::<f64>::zeros(&cfg).unwrap();
        let s = Tensor::from_vec(3, 2, 2, vec![0.5; 12]).unwrap();
        assert_eq!(loss(&s, &s, &p, 1e-4).unwrap(), 0.0);
        let shifted = Tensor::from_vec(3, 2, 2, vec![0.6; 12]).unwrap();
        assert!((loss(&shifted, &s, &p, 0.0).unwrap() - 0.01).abs() < 1e-12);
        p.conv4_bias[0] = 2.0;
        assert!((loss(&s, &s, &p, 1e-4).unwrap() - 4e-4).abs() < 1e-18);
    }

    #[test]
    fn penalty_gradient_is_two_lambda_w() {
        let cfg = tiny(3);
        let p = NetworkParams::<f64>::init(&cfg).unwrap();
        let b = views(4, 2, 4, 4);
        let (_, g0) = unroll_gradients(&p, &b, &b, 0.0).unwrap();
        let (_, g1) = unroll_gradients(&p, &b, &b, 0.5).unwrap();
        for ((a, c), w) in g0.tensors().iter().zip(g1.tensors()).zip(p.tensors()) {
            for i in 0..w.len() {
                assert!((c[i] - a[i] - w[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_fixed_point_has_zero_bias_gradient() {
        let cfg = NetworkConfig {
            zero_init_output: true,
            ..tiny(5)
        };
        let p = NetworkParams::<f64>::init(&cfg).unwrap();
        let b = views(6, 3, 4, 6);
        let (l, g) = unroll_gradients(&p, &b, &b, 0.0).unwrap();
        assert_eq!(l.total, 0.0);
        assert!(g.conv4_bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unroll_loss_matches_gradient_pass() {
        let p = NetworkParams::<f64>::init(&tiny(7)).unwrap();
        let b = views(8, 3, 4, 4);
        let s = views(9, 3, 4, 4);
        let a = unroll_loss(&p, &b, &s, 1e-3).unwrap();
        let (c, _) = unroll_gradients(&p, &b, &s, 1e-3).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn f64_gradients_match_central_differences() {
        let p = NetworkParams::<f64>::init(&tiny(10)).unwrap();
        let b = views(11, 3, 4, 4);
        let s = views(12, 3, 4, 4);
        let lambda = 1e-3;
        let (_, g) = unroll_gradients(&p, &b, &s, lambda).unwrap();
        let h = 1e-6;
        for (t, grad) in g.tensors().iter().enumerate() {
            for i in 0..grad.len() {
                let mut q = p.clone();
                q.tensors_mut()[t][i] += h;
                let up = unroll_loss(&q, &b, &s, lambda).unwrap().total;
                q.tensors_mut()[t][i] -= 2.0 * h;
                let down = unroll_loss(&q, &b, &s, lambda).unwrap().total;
                let num = (up - down) / (2.0 * h);
                assert!(
                    (num - grad[i]).abs() <= 1e-6 * (1e-4 + num.abs()),
                    "tensor {t}[{i}]: {} vs {num}",
                    grad[i]
                );
            }
        }
    }
}
