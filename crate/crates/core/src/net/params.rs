use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::ConvSpec;
use super::real::Real;
use crate::error::{Error, Result};

pub const RGB: usize = 3;

fn default_radius() -> usize {
    1
}
fn default_width() -> usize {
    64
}
fn default_blocks() -> usize {
    12
}
fn default_eps() -> f64 {
    1e-5
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// Views on each side of the centre frame; the input holds `2b + 1`.
    #[serde(default = "default_radius")]
    pub temporal_radius: usize,
    #[serde(default = "default_width")]
    pub base_channels: usize,
    #[serde(default = "default_width")]
    pub hidden_channels: usize,
    #[serde(default = "default_blocks")]
    pub residual_blocks: usize,
    #[serde(default = "default_eps")]
    pub norm_eps: f64,
    #[serde(default)]
    pub seed: u64,
    /// Start the output convolution at zero, i.e. at the identity mapping.
    #[serde(default = "default_true")]
    pub zero_init_output: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            temporal_radius: default_radius(),
            base_channels: default_width(),
            hidden_channels: default_width(),
            residual_blocks: default_blocks(),
            norm_eps: default_eps(),
            seed: 0,
            zero_init_output: true,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 {
            return Err(Error::invalid("base_channels", "must be at least 1"));
        }
        if self.hidden_channels == 0 {
            return Err(Error::invalid("hidden_channels", "must be at least 1"));
        }
        if self.residual_blocks == 0 {
            return Err(Error::invalid("residual_blocks", "must be at least 1"));
        }
        if !(self.norm_eps > 0.0 && self.norm_eps.is_finite()) {
            return Err(Error::invalid("norm_eps", "must be positive"));
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        2 * self.temporal_radius + 1
    }

    pub fn arch(&self) -> Architecture {
        let c = self.base_channels;
        let wide = 2 * c;
        Architecture {
            conv1: ConvSpec::new(RGB * self.frames(), c, 5, 1, 2),
            conv2: ConvSpec::new(c, wide, 3, 2, 1),
            first_block: ConvSpec::new(wide + self.hidden_channels, wide, 3, 1, 1),
            block: ConvSpec::new(wide, wide, 3, 1, 1),
            deconv: ConvSpec::new(wide, c, 4, 2, 1),
            conv3: ConvSpec::new(wide, self.hidden_channels, 3, 1, 1),
            conv4: ConvSpec::new(c, RGB, 3, 1, 1),
        }
    }
}

/// Convolution shapes implied by a [`NetworkConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub conv1: ConvSpec,
    pub conv2: ConvSpec,
    /// First conv of block 1, which also reads the hidden state.
    pub first_block: ConvSpec,
    pub block: ConvSpec,
    /// Transposed; kernel stored `[in, out, k, k]`.
    pub deconv: ConvSpec,
    pub conv3: ConvSpec,
    pub conv4: ConvSpec,
}

impl Architecture {
    pub fn block_a(&self, index: usize) -> ConvSpec {
        if index == 0 {
            self.first_block
        } else {
            self.block
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Norm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResBlock<T> {
    pub conv_a: Vec<T>,
    pub norm_a: Norm<T>,
    pub conv_b: Vec<T>,
    pub norm_b: Norm<T>,
}

/// Every trainable tensor of the network. Convolutions followed by
/// instance normalization carry no bias, since the mean subtraction
/// cancels it.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T = f32> {
    pub config: NetworkConfig,
    pub conv1: Vec<T>,
    pub norm1: Norm<T>,
    pub conv2: Vec<T>,
    pub norm2: Norm<T>,
    pub blocks: Vec<ResBlock<T>>,
    pub deconv: Vec<T>,
    pub deconv_norm: Norm<T>,
    pub conv3: Vec<T>,
    pub conv3_norm: Norm<T>,
    pub conv4: Vec<T>,
    pub conv4_bias: Vec<T>,
}

/// Name and shape of one stored tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn kernel_shape(s: &ConvSpec) -> Vec<usize> {
    vec![s.out_channels, s.in_channels, s.kernel, s.kernel]
}

/// Tensor names and shapes in canonical order.
pub fn layout(config: &NetworkConfig) -> Vec<TensorInfo> {
    let a = config.arch();
    let mut out = Vec::new();
    let mut push = |name: String, shape: Vec<usize>| out.push(TensorInfo { name, shape });
    let norm = |push: &mut dyn FnMut(String, Vec<usize>), name: &str, c: usize| {
        push(format!("{name}.gamma"), vec![c]);
        push(format!("{name}.beta"), vec![c]);
    };
    push("conv1.weight".into(), kernel_shape(&a.conv1));
    norm(&mut push, "norm1", a.conv1.out_channels);
    push("conv2.weight".into(), kernel_shape(&a.conv2));
    norm(&mut push, "norm2", a.conv2.out_channels);
    for i in 0..config.residual_blocks {
        push(
            format!("blocks.{i}.conv_a.weight"),
            kernel_shape(&a.block_a(i)),
        );
        norm(
            &mut push,
            &format!("blocks.{i}.norm_a"),
            a.block.out_channels,
        );
        push(format!("blocks.{i}.conv_b.weight"), kernel_shape(&a.block));
        norm(
            &mut push,
            &format!("blocks.{i}.norm_b"),
            a.block.out_channels,
        );
    }
    let d = a.deconv;
    push(
        "deconv.weight".into(),
        vec![d.in_channels, d.out_channels, d.kernel, d.kernel],
    );
    norm(&mut push, "deconv_norm", d.out_channels);
    push("conv3.weight".into(), kernel_shape(&a.conv3));
    norm(&mut push, "conv3_norm", a.conv3.out_channels);
    push("conv4.weight".into(), kernel_shape(&a.conv4));
    push("conv4.bias".into(), vec![RGB]);
    out
}

impl<T: Real> NetworkParams<T> {
    /// All tensors zero (including norm scales).
    pub fn zeros(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let a = config.arch();
        let z = |n: usize| vec![T::zero(); n];
        let norm = |c: usize| Norm {
            gamma: z(c),
            beta: z(c),
        };
        let wide = a.block.out_channels;
        Ok(NetworkParams {
            config: config.clone(),
            conv1: z(a.conv1.weight_len()),
            norm1: norm(a.conv1.out_channels),
            conv2: z(a.conv2.weight_len()),
            norm2: norm(wide),
            blocks: (0..config.residual_blocks)
                .map(|i| ResBlock {
                    conv_a: z(a.block_a(i).weight_len()),
                    norm_a: norm(wide),
                    conv_b: z(a.block.weight_len()),
                    norm_b: norm(wide),
                })
                .collect(),
            deconv: z(a.deconv.weight_len()),
            deconv_norm: norm(a.deconv.out_channels),
            conv3: z(a.conv3.weight_len()),
            conv3_norm: norm(a.conv3.out_channels),
            conv4: z(a.conv4.weight_len()),
            conv4_bias: z(RGB),
        })
    }

    /// Seeded initialization: kernels uniform in `±1/sqrt(fan_in)`, biases
    /// and norm shifts zero, norm scales one.
    pub fn init(config: &NetworkConfig) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let a = config.arch();
        let mut fill = |w: &mut Vec<T>, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            w.iter_mut()
                .for_each(|v| *v = T::of(rng.random_range(-bound..bound)));
        };
        let fan = |s: &ConvSpec| s.in_channels * s.kernel * s.kernel;
        fill(&mut p.conv1, fan(&a.conv1));
        fill(&mut p.conv2, fan(&a.conv2));
        for (i, b) in p.blocks.iter_mut().enumerate() {
            fill(&mut b.conv_a, fan(&a.block_a(i)));
            fill(&mut b.conv_b, fan(&a.block));
        }
        // Each output pixel of a stride-2 transposed conv sees k*k/4 taps per input channel.
        fill(
            &mut p.deconv,
            fan(&a.deconv) / (a.deconv.stride * a.deconv.stride),
        );
        fill(&mut p.conv3, fan(&a.conv3));
        if !config.zero_init_output {
            fill(&mut p.conv4, fan(&a.conv4));
        }
        for n in p.norms_mut() {
            n.gamma.iter_mut().for_each(|g| *g = T::one());
        }
        Ok(p)
    }

    fn norms_mut(&mut self) -> Vec<&mut Norm<T>> {
        let mut v = vec![&mut self.norm1, &mut self.norm2];
        for b in &mut self.blocks {
            v.push(&mut b.norm_a);
            v.push(&mut b.norm_b);
        }
        v.push(&mut self.deconv_norm);
        v.push(&mut self.conv3_norm);
        v
    }

    /// Tensors in [`layout`] order.
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut v: Vec<&[T]> = vec![
            &self.conv1,
            &self.norm1.gamma,
            &self.norm1.beta,
            &self.conv2,
            &self.norm2.gamma,
            &self.norm2.beta,
        ];
        for b in &self.blocks {
            v.extend([
                &b.conv_a[..],
                &b.norm_a.gamma,
                &b.norm_a.beta,
                &b.conv_b,
                &b.norm_b.gamma,
                &b.norm_b.beta,
            ]);
        }
        v.extend([
            &self.deconv[..],
            &self.deconv_norm.gamma,
            &self.deconv_norm.beta,
            &self.conv3,
            &self.conv3_norm.gamma,
            &self.conv3_norm.beta,
            &self.conv4,
            &self.conv4_bias,
        ]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut v: Vec<&mut [T]> = vec![
            &mut self.conv1,
            &mut self.norm1.gamma,
            &mut self.norm1.beta,
            &mut self.conv2,
            &mut self.norm2.gamma,
            &mut self.norm2.beta,
        ];
        for b in &mut self.blocks {
            v.extend([
                &mut b.conv_a[..],
                &mut b.norm_a.gamma,
                &mut b.norm_a.beta,
                &mut b.conv_b,
                &mut b.norm_b.gamma,
                &mut b.norm_b.beta,
            ]);
        }
        v.extend([
            &mut self.deconv[..],
            &mut self.deconv_norm.gamma,
            &mut self.deconv_norm.beta,
            &mut self.conv3,
            &mut self.conv3_norm.gamma,
            &mut self.conv3_norm.beta,
            &mut self.conv4,
            &mut self.conv4_bias,
        ]);
        v
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `sum w^2` over every trainable value.
    pub fn sum_squares(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v.f64() * v.f64())
            .sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config).expect("validated config")
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        let mut out = NetworkParams::<U>::zeros(&self.config).expect("validated config");
        for (dst, src) in out.tensors_mut().into_iter().zip(self.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = U::of(s.f64());
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}

const MAGIC: &[u8; 8] = b"LFDBNET\0";
pub const CHECKPOINT_VERSION: u32 = 1;

impl NetworkParams<f32> {
    /// Layout: magic, version, length-prefixed JSON config, tensor count,
    /// then per tensor a name, rank, dims and little-endian `f32` values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let config = serde_json::to_vec(&self.config).expect("config serializes");
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(&config);
        let infos = layout(&self.config);
        out.extend_from_slice(&(infos.len() as u32).to_le_bytes());
        for (info, data) in infos.iter().zip(self.tensors()) {
            out.extend_from_slice(&(info.name.len() as u32).to_le_bytes());
            out.extend_from_slice(info.name.as_bytes());
            out.extend_from_slice(&(info.shape.len() as u32).to_le_bytes());
            for &d in &info.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let len = read_u32(&mut r)? as usize;
        let mut config = vec![0u8; len];
        read_exact(&mut r, &mut config)?;
        let config: NetworkConfig = serde_json::from_slice(&config)
            .map_err(|e| Error::Checkpoint(format!("config block: {e}")))?;
        let mut params = NetworkParams::<f32>::zeros(&config)?;
        let infos = layout(&config);
        let count = read_u32(&mut r)? as usize;
        if count != infos.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {count}",
                infos.len()
            )));
        }
        for (info, dst) in infos.iter().zip(params.tensors_mut()) {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            read_exact(&mut r, &mut name)?;
            if name != info.name.as_bytes() {
                return Err(Error::Checkpoint(format!(
                    "expected tensor {}, found {}",
                    info.name,
                    String::from_utf8_lossy(&name)
                )));
            }
            let rank = read_u32(&mut r)? as usize;
            let shape = (0..rank)
                .map(|_| read_u32(&mut r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            if shape != info.shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {} has shape {shape:?}, expected {:?}",
                    info.name, info.shape
                )));
            }
            for v in dst.iter_mut() {
                let mut b = [0u8; 4];
                read_exact(&mut r, &mut b)?;
                *v = f32::from_le_bytes(b);
            }
        }
        if !r.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.len())));
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Checkpoint("truncated file".into()))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> NetworkConfig {
        NetworkConfig {
            base_channels: 4,
            hidden_channels: 3,
            residual_blocks: 2,
            seed: 11,
            ..NetworkConfig::default()
        }
    }

    #[test]
    fn layout_matches_tensors() {
        let p = NetworkParams::<f32>::init(&small()).unwrap();
        let infos = layout(&p.config);
        let tensors = p.tensors();
        assert_eq!(infos.len(), tensors.len());
        for (i, t) in infos.iter().zip(&tensors) {
            assert_eq!(i.len(), t.len(), "{}", i.name);
        }
        assert_eq!(infos[0].shape, vec![4, 9, 5, 5]);
        assert_eq!(infos[6].shape, vec![8, 11, 3, 3]);
        let names: std::collections::BTreeSet<_> = infos.iter().map(|i| &i.name).collect();
        assert_eq!(names.len(), infos.len());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = NetworkParams::<f32>::init(&small()).unwrap();
        assert_eq!(a, NetworkParams::<f32>::init(&small()).unwrap());
        let other = NetworkConfig {
            seed: 12,
            ..small()
        };
        assert_ne!(a, NetworkParams::<f32>::init(&other).unwrap());
        assert!(a.conv4.iter().all(|&v| v == 0.0));
        assert!(a.norm1.gamma.iter().all(|&v| v == 1.0));
        let bound = 1.0 / ((9 * 25) as f32).sqrt();
        assert!(a.conv1.iter().all(|v| v.abs() <= bound) && a.conv1.iter().any(|&v| v != 0.0));
        let random_out = NetworkConfig {
            zero_init_output: false,
            ..small()
        };
        assert!(NetworkParams::<f32>::init(&random_out)
            .unwrap()
            .conv4
            .iter()
            .any(|&v| v != 0.0));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let cfg = NetworkConfig {
            zero_init_output: false,
            ..small()
        };
        let p = NetworkParams::<f32>::init(&cfg).unwrap();
        let bytes = p.to_bytes();
        assert_eq!(&bytes[..8], MAGIC);
        let back = NetworkParams::from_bytes(&bytes).unwrap();
        assert_eq!(back, p);
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("net.ckpt");
        p.save(&path).unwrap();
        assert_eq!(NetworkParams::load(&path).unwrap(), p);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let p = NetworkParams::<f32>::init(&small()).unwrap();
        let bytes = p.to_bytes();
        assert!(NetworkParams::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(NetworkParams::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(NetworkParams::from_bytes(&extra).is_err());
    }

    #[test]
    fn config_validation_names_field() {
        let cfg = NetworkConfig {
            residual_blocks: 0,
            ..NetworkConfig::default()
        };
        assert!(NetworkParams::<f32>::zeros(&cfg)
            .unwrap_err()
            .to_string()
            .contains("residual_blocks"));
        assert!(serde_json::from_str::<NetworkConfig>(r#"{"channels": 4}"#).is_err());
    }
}
