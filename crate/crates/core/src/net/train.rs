//! Patch-based training over spiral-ordered, angularly sampled view
//! sequences with ADAM and backpropagation through the whole unroll.

use std::collections::HashMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::Tensor;
use super::model::unroll_gradients;
use super::params::{NetworkConfig, NetworkParams, RGB};
use crate::blur::BlurPair;
use crate::error::{Error, Result};
use crate::lightfield::{angular_sample, spiral_order, LightField, SpiralSequence};

fn d_patch() -> usize {
    256
}
fn d_samples() -> usize {
    10
}
fn d_batch() -> usize {
    1
}
fn d_lr() -> f64 {
    1e-4
}
fn d_iterations() -> usize {
    1000
}
fn d_lambda() -> f64 {
    1e-4
}
fn d_true() -> bool {
    true
}
fn d_beta1() -> f64 {
    0.9
}
fn d_beta2() -> f64 {
    0.999
}
fn d_adam_eps() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "d_patch")]
    pub patch_size: usize,
    /// Views per unroll, sampled along the spiral.
    #[serde(default = "d_samples")]
    pub angular_samples: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_iterations")]
    pub iterations: usize,
    /// Weight-penalty coefficient.
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    /// Randomly permute RGB channels of input and target alike.
    #[serde(default = "d_true")]
    pub color_augment: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "d_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "d_adam_eps")]
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields default")
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 2 || self.patch_size % 2 != 0 {
            return Err(Error::invalid(
                "patch_size",
                "must be an even number of at least 2",
            ));
        }
        if self.angular_samples == 0 {
            return Err(Error::invalid("angular_samples", "must be at least 1"));
        }
        if self.batch_size != 1 {
            return Err(Error::invalid(
                "batch_size",
                "only a batch size of 1 is supported",
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) {
            return Err(Error::invalid("adam_beta1", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::invalid("adam_beta2", "must lie in [0, 1)"));
        }
        if self.adam_eps <= 0.0 {
            return Err(Error::invalid("adam_eps", "must be positive"));
        }
        Ok(())
    }
}

/// First and second moment estimates for every parameter.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    step: i32,
}

impl Adam {
    pub fn new(params: &NetworkParams<f32>) -> Self {
        let zeros: Vec<Vec<f32>> = params
            .tensors()
            .iter()
            .map(|t| vec![0.0; t.len()])
            .collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn update(
        &mut self,
        params: &mut NetworkParams<f32>,
        grads: &NetworkParams<f32>,
        cfg: &TrainConfig,
    ) {
        self.step += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        for (((w, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..w.len() {
                let gi = g[i] as f64;
                let mi = b1 * m[i] as f64 + (1.0 - b1) * gi;
                let vi = b2 * v[i] as f64 + (1.0 - b2) * gi * gi;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let step = cfg.learning_rate * (mi / c1) / ((vi / c2).sqrt() + cfg.adam_eps);
                w[i] = (w[i] as f64 - step) as f32;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub iteration: usize,
    pub loss: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams<f32>,
    pub log: Vec<TrainRecord>,
}

impl TrainOutcome {
    pub fn losses(&self) -> Vec<f64> {
        self.log.iter().map(|r| r.loss).collect()
    }
}

const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Crops a `size x size` patch of view `(row, col)` into a CHW tensor,
/// with output channel `k` taken from source channel `perm[k]`.
pub fn crop_view(
    lf: &LightField,
    row: usize,
    col: usize,
    y0: usize,
    x0: usize,
    size: usize,
    perm: [usize; 3],
) -> Tensor<f32> {
    let width = lf.spatial_size().1;
    let view = lf.view_data(row, col);
    let mut t = Tensor::zeros(RGB, size, size);
    for (k, &src) in perm.iter().enumerate() {
        for y in 0..size {
            let base = ((y0 + y) * width + x0) * RGB;
            let dst = &mut t.data[(k * size + y) * size..(k * size + y + 1) * size];
            for (x, d) in dst.iter_mut().enumerate() {
                *d = view[base + x * RGB + src];
            }
        }
    }
    t
}

/// Trailing moving average with the given window.
pub fn smooth(losses: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..losses.len())
        .map(|i| {
            let from = (i + 1).saturating_sub(window);
            losses[from..=i].iter().sum::<f64>() / (i + 1 - from) as f64
        })
        .collect()
}

/// Mean of the first and of the last `window` losses.
pub fn smoothed_endpoints(losses: &[f64], window: usize) -> (f64, f64) {
    let w = window.clamp(1, losses.len().max(1));
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    (mean(&losses[..w]), mean(&losses[losses.len() - w..]))
}

fn check_pairs(pairs: &[BlurPair], cfg: &TrainConfig) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::invalid("dataset", "contains no pairs"));
    }
    for (i, p) in pairs.iter().enumerate() {
        let (b, s) = (&p.blurred, &p.ground_truth);
        if b.angular_size() != s.angular_size() || b.spatial_size() != s.spatial_size() {
            return Err(Error::Shape(format!(
                "pair {i}: blurred and sharp light fields differ in size"
            )));
        }
        let (h, w) = b.spatial_size();
        if cfg.patch_size > h || cfg.patch_size > w {
            return Err(Error::invalid(
                "patch_size",
                format!("{} exceeds the {h}x{w} views of pair {i}", cfg.patch_size),
            ));
        }
        let (rows, cols) = b.angular_size();
        if cfg.angular_samples > rows * cols {
            return Err(Error::invalid(
                "angular_samples",
                format!(
                    "{} exceeds the {} views of pair {i}",
                    cfg.angular_samples,
                    rows * cols
                ),
            ));
        }
    }
    Ok(())
}

/// Trains from a fresh initialization of `net`.
pub fn train(pairs: &[BlurPair], cfg: &TrainConfig, net: &NetworkConfig) -> Result<TrainOutcome> {
    let params = NetworkParams::<f32>::init(net)?;
    train_from(pairs, cfg, params, |_| {})
}

/// Trains `params` in place, reporting each iteration to `on_record`.
pub fn train_from(
    pairs: &[BlurPair],
    cfg: &TrainConfig,
    mut params: NetworkParams<f32>,
    mut on_record: impl FnMut(&TrainRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_pairs(pairs, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&params);
    let mut orders: HashMap<(usize, usize), SpiralSequence> = HashMap::new();
    let mut log = Vec::with_capacity(cfg.iterations);
    let start = Instant::now();
    let p = cfg.patch_size;

    for iteration in 0..cfg.iterations {
        let pair = &pairs[rng.random_range(0..pairs.len())];
        let (h, w) = pair.blurred.spatial_size();
        let y0 = rng.random_range(0..=h - p);
        let x0 = rng.random_range(0..=w - p);
        let perm = if cfg.color_augment {
            PERMUTATIONS[rng.random_range(0..PERMUTATIONS.len())]
        } else {
            PERMUTATIONS[0]
        };
        let grid = pair.blurred.angular_size();
        let order = match orders.get(&grid) {
            Some(o) => o,
            None => {
                let full = spiral_order(grid.0, grid.1)?;
                orders
                    .entry(grid)
                    .or_insert(angular_sample(&full, cfg.angular_samples)?)
            }
        };
        let crop = |lf: &LightField| -> Vec<Tensor<f32>> {
            order
                .order
                .iter()
                .map(|&(r, c)| crop_view(lf, r, c, y0, x0, p, perm))
                .collect()
        };
        let blurred = crop(&pair.blurred);
        let sharp = crop(&pair.ground_truth);

        let (loss, grads) = unroll_gradients(&params, &blurred, &sharp, cfg.lambda)?;
        if !loss.total.is_finite() {
            return Err(Error::invalid(
                "learning_rate",
                format!("loss diverged at iteration {iteration}"),
            ));
        }
        adam.update(&mut params, &grads, cfg);
        let record = TrainRecord {
            iteration,
            loss: loss.total,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        on_record(&record);
        log.push(record);
    }
    Ok(TrainOutcome { params, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightfield::synthetic;

    fn pairs(n: usize) -> Vec<BlurPair> {
        (0..n)
            .map(|i| {
                let sharp = synthetic::textured_scene(i as u64, (3, 3), (12, 12));
                BlurPair {
                    blurred: sharp.map(|v| 0.5 * v + 0.25),
                    ground_truth: sharp,
                }
            })
            .collect()
    }

    fn tiny_net() -> NetworkConfig {
        NetworkConfig {
            base_channels: 2,
            hidden_channels: 2,
            residual_blocks: 1,
            zero_init_output: false,
            ..NetworkConfig::default()
        }
    }

    fn quick(iterations: usize) -> TrainConfig {
        TrainConfig {
            patch_size: 8,
            angular_samples: 4,
            iterations,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn crop_permutes_channels() {
        let lf = synthetic::textured_scene(1, (3, 3), (10, 10));
        let t = crop_view(&lf, 2, 1, 3, 4, 4, [2, 0, 1]);
        assert_eq!(t.data[0], lf.get(2, 1, 3, 4, 2));
        assert_eq!(t.data[16 + 5], lf.get(2, 1, 4, 5, 0));
        assert_eq!(t.data[32 + 15], lf.get(2, 1, 6, 7, 1));
    }

    #[test]
    fn deterministic_given_seed() {
        let data = pairs(2);
        let a = train(&data, &quick(6), &tiny_net()).unwrap();
        let b = train(&data, &quick(6), &tiny_net()).unwrap();
        assert_eq!(a.losses(), b.losses());
        assert_eq!(a.params, b.params);
        let other = TrainConfig {
            seed: 1,
            ..quick(6)
        };
        assert_ne!(
            train(&data, &other, &tiny_net()).unwrap().losses(),
            a.losses()
        );
    }

    #[test]
    fn loss_decreases_on_toy_problem() {
        let out = train(&pairs(2), &quick(60), &tiny_net()).unwrap();
        let (first, last) = smoothed_endpoints(&out.losses(), 10);
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn single_view_sequences_train() {
        let cfg = TrainConfig {
            angular_samples: 1,
            ..quick(3)
        };
        let out = train(&pairs(1), &cfg, &tiny_net()).unwrap();
        assert_eq!(out.log.len(), 3);
    }

    #[test]
    fn rejects_invalid_setups() {
        let data = pairs(1);
        let big = TrainConfig {
            patch_size: 14,
            ..quick(1)
        };
        assert!(train(&data, &big, &tiny_net())
            .unwrap_err()
            .to_string()
            .contains("patch_size"));
        let many = TrainConfig {
            angular_samples: 10,
            ..quick(1)
        };
        assert!(train(&data, &many, &tiny_net())
            .unwrap_err()
            .to_string()
            .contains("angular_samples"));
        assert!(train(&[], &quick(1), &tiny_net()).is_err());
        assert!(serde_json::from_str::<TrainConfig>(r#"{"lr": 1.0}"#).is_err());
    }

    #[test]
    fn smoothing_helpers() {
        let l = [4.0, 2.0, 0.0, 2.0];
        assert_eq!(smooth(&l, 2), vec![4.0, 3.0, 1.0, 1.0]);
        assert_eq!(smoothed_endpoints(&l, 2), (3.0, 1.0));
    }
}
