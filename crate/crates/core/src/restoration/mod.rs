//! The restoration network: a vanilla UNet trained to rebuild clean images
//! from corrupted high-frequency components.
//!
//! Architecture (pinned): `depth` encoder stages with channel widths
//! `c * min(2^i, 8)`, two conv3x3 + GroupNorm + ReLU blocks per stage,
//! 2x max-pool downsampling, nearest-neighbor upsampling, optional skip
//! concatenation, and a linear 1x1 output head. GroupNorm keeps eval-mode
//! behavior independent of batch composition.
//!
//! Weight initialization is derived deterministically from `(seed, parameter
//! name)`, so two models built with the same seed are bit-identical.

mod checkpoint;
mod loss;
mod optim;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, LoadedCheckpoint, FORMAT_TAG};
pub use loss::{loss_terms, mean_ssim, restoration_loss, LossBreakdown};
pub use optim::{Adam, AdamParams};

use candle_core::{DType, Device, Tensor, Var};
use candle_nn::{Conv2d, Conv2dConfig, GroupNorm, Module, VarBuilder, VarMap};
use ndarray::Array3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::imagecore::{ColorSpace, Image};

/// Base widths the restoration network is specified for.
pub const SUPPORTED_BASE_WIDTHS: [usize; 3] = [32, 64, 128];

/// Identifier of the deterministic weight-init scheme, logged in run records.
pub const INIT_SCHEME: &str = "he-uniform(fan_in), per-parameter seed";

/// Restoration network configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct NetConfig {
    /// Base channel width `c`; stage widths are `c * min(2^i, 8)`.
    pub base_width: usize,
    /// Channels produced by the configured extractor.
    pub in_channels: usize,
    /// Always 3: the network restores the clean sRGB image.
    pub out_channels: usize,
    pub use_skips: bool,
    /// Number of encoder stages.
    pub depth: usize,
}

impl NetConfig {
    pub fn new(base_width: usize, in_channels: usize, use_skips: bool, depth: usize) -> Result<Self> {
        let cfg = NetConfig { base_width, in_channels, out_channels: 3, use_skips, depth };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_BASE_WIDTHS.contains(&self.base_width) {
            return Err(Error::config(format!(
                "base width must be one of {SUPPORTED_BASE_WIDTHS:?}, got {}",
                self.base_width
            )));
        }
        if self.in_channels == 0 {
            return Err(Error::config("network needs at least one input channel"));
        }
        if self.out_channels != 3 {
            return Err(Error::config("the restoration target is always 3-channel sRGB"));
        }
        if !(1..=6).contains(&self.depth) {
            return Err(Error::config(format!("depth must lie in 1..=6, got {}", self.depth)));
        }
        Ok(())
    }

    /// Channel width of encoder stage `i`.
    pub fn stage_width(&self, i: usize) -> usize {
        self.base_width * (1usize << i).min(8)
    }

    /// Input dims must be divisible by this.
    pub fn size_multiple(&self) -> usize {
        1usize << self.depth
    }
}

fn norm_groups(channels: usize) -> usize {
    for g in [8, 4, 2] {
        if channels % g == 0 {
            return g;
        }
    }
    1
}

struct ConvBlock {
    c1: Conv2d,
    n1: GroupNorm,
    c2: Conv2d,
    n2: GroupNorm,
}

impl ConvBlock {
    fn new(in_c: usize, out_c: usize, vb: VarBuilder) -> candle_core::Result<Self> {
        let conv_cfg = Conv2dConfig { padding: 1, ..Default::default() };
        Ok(ConvBlock {
            c1: candle_nn::conv2d(in_c, out_c, 3, conv_cfg, vb.pp("conv1"))?,
            n1: candle_nn::group_norm(norm_groups(out_c), out_c, 1e-5, vb.pp("norm1"))?,
            c2: candle_nn::conv2d(out_c, out_c, 3, conv_cfg, vb.pp("conv2"))?,
            n2: candle_nn::group_norm(norm_groups(out_c), out_c, 1e-5, vb.pp("norm2"))?,
        })
    }

    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let x = self.n1.forward(&self.c1.forward(x)?)?.relu()?;
        self.n2.forward(&self.c2.forward(&x)?)?.relu()
    }
}

struct UNet {
    encoder: Vec<ConvBlock>,
    decoder: Vec<ConvBlock>,
    head: Conv2d,
    cfg: NetConfig,
}

impl UNet {
    fn new(cfg: &NetConfig, vb: VarBuilder) -> candle_core::Result<Self> {
        let mut encoder = Vec::with_capacity(cfg.depth);
        for i in 0..cfg.depth {
            let in_c = if i == 0 { cfg.in_channels } else { cfg.stage_width(i - 1) };
            encoder.push(ConvBlock::new(in_c, cfg.stage_width(i), vb.pp(format!("enc{i}")))?);
        }
        let mut decoder = Vec::new();
        for j in 0..cfg.depth.saturating_sub(1) {
            let level = cfg.depth - 2 - j;
            let skip_c = if cfg.use_skips { cfg.stage_width(level) } else { 0 };
            let in_c = cfg.stage_width(level + 1) + skip_c;
            decoder.push(ConvBlock::new(in_c, cfg.stage_width(level), vb.pp(format!("dec{level}")))?);
        }
        let head = candle_nn::conv2d(
            cfg.stage_width(0),
            cfg.out_channels,
            1,
            Conv2dConfig::default(),
            vb.pp("head"),
        )?;
        Ok(UNet { encoder, decoder, head, cfg: *cfg })
    }

    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let mut skips = Vec::with_capacity(self.cfg.depth);
        let mut x = x.clone();
        for (i, block) in self.encoder.iter().enumerate() {
            if i > 0 {
                x = x.max_pool2d(2)?;
            }
            x = block.forward(&x)?;
            skips.push(x.clone());
        }
        for (j, block) in self.decoder.iter().enumerate() {
            let level = self.cfg.depth - 2 - j;
            let target = &skips[level];
            let (h, w) = (target.dim(2)?, target.dim(3)?);
            x = x.upsample_nearest2d(h, w)?;
            if self.cfg.use_skips {
                x = Tensor::cat(&[&x, target], 1)?;
            }
            x = block.forward(&x)?;
        }
        self.head.forward(&x)
    }
}

/// The trained (or in-training) restoration model.
pub struct RestorationModel {
    varmap: VarMap,
    net: UNet,
    cfg: NetConfig,
    device: Device,
}

fn fnv1a(s: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

impl RestorationModel {
    /// Builds a model with deterministic per-parameter initialization.
    pub fn new(cfg: &NetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let device = Device::Cpu;
        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, DType::F32, &device);
        let net = UNet::new(cfg, vb)?;
        let model = RestorationModel { varmap, net, cfg: *cfg, device };
        model.deterministic_init(seed)?;
        Ok(model)
    }

    /// Re-initializes every parameter from `(seed, name)`:
    /// - rank-4 conv weights: He-uniform over fan-in,
    /// - conv biases: uniform `+-1/sqrt(fan_in)` of the sibling weight,
    /// - norm weights: 1, norm biases: 0.
    fn deterministic_init(&self, seed: u64) -> Result<()> {
        let data = self.varmap.data().lock().unwrap();
        let fan_in_of = |name: &str| -> Option<usize> {
            let weight_name = name.strip_suffix(".bias").map(|p| format!("{p}.weight"))?;
            let w = data.get(&weight_name)?;
            let d = w.dims();
            if d.len() == 4 {
                Some(d[1] * d[2] * d[3])
            } else {
                None
            }
        };
        for (name, var) in data.iter() {
            let dims = var.dims().to_vec();
            let n: usize = dims.iter().product();
            let mut rng = ChaCha12Rng::seed_from_u64(crate::synth::sample_seed(seed, fnv1a(name)));
            let values: Vec<f32> = if dims.len() == 4 {
                let fan_in = dims[1] * dims[2] * dims[3];
                let bound = (6.0 / fan_in as f64).sqrt();
                (0..n).map(|_| rng.random_range(-bound..bound) as f32).collect()
            } else if name.ends_with(".bias") {
                match fan_in_of(name) {
                    Some(fan_in) => {
                        let bound = 1.0 / (fan_in as f64).sqrt();
                        (0..n).map(|_| rng.random_range(-bound..bound) as f32).collect()
                    }
                    None => vec![0.0; n], // norm bias
                }
            } else {
                vec![1.0; n] // norm weight
            };
            let t = Tensor::from_vec(values, dims, &self.device)?;
            var.set(&t)?;
        }
        Ok(())
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Named trainable variables, sorted by name.
    pub fn named_vars(&self) -> Vec<(String, Var)> {
        let data = self.varmap.data().lock().unwrap();
        let mut vars: Vec<(String, Var)> = data.iter().map(|(n, v)| (n.clone(), v.clone())).collect();
        vars.sort_by(|a, b| a.0.cmp(&b.0));
        vars
    }

    pub fn parameter_count(&self) -> usize {
        self.named_vars().iter().map(|(_, v)| v.elem_count()).sum()
    }

    fn check_spatial(&self, h: usize, w: usize) -> Result<()> {
        let m = self.cfg.size_multiple();
        if h % m != 0 || w % m != 0 {
            return Err(Error::invalid_argument(format!(
                "input {h}x{w} not divisible by 2^depth = {m}"
            )));
        }
        Ok(())
    }

    /// Unclamped forward pass on an NCHW batch (training path).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims();
        if dims.len() != 4 || dims[1] != self.cfg.in_channels {
            return Err(Error::invalid_argument(format!(
                "expected NCHW batch with {} channels, got {dims:?}",
                self.cfg.in_channels
            )));
        }
        self.check_spatial(dims[2], dims[3])?;
        Ok(self.net.forward(x)?)
    }

    /// Restores one image from extracted features; the output is clamped to
    /// `[0, 1]` (evaluation path).
    pub fn restore(&self, features: &Array3<f64>) -> Result<Image> {
        let x = features_to_tensor(features, &self.device)?;
        let y = self.forward(&x)?.clamp(0.0, 1.0)?;
        tensor_to_image(&y)
    }

    /// Overwrites parameters from `(name, flat values, dims)` triples.
    pub(crate) fn load_weights(&self, weights: &[(String, Vec<f32>, Vec<usize>)]) -> Result<()> {
        let data = self.varmap.data().lock().unwrap();
        if weights.len() != data.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, checkpoint has {}",
                data.len(),
                weights.len()
            )));
        }
        for (name, values, dims) in weights {
            let var = data.get(name).ok_or_else(|| {
                Error::Checkpoint(format!("parameter {name} not present in model"))
            })?;
            if var.dims() != dims.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name}: shape {:?} does not match checkpoint {:?}",
                    var.dims(),
                    dims
                )));
            }
            let t = Tensor::from_vec(values.clone(), dims.clone(), &self.device)?;
            var.set(&t)?;
        }
        Ok(())
    }
}

/// `H x W x C` float features to a `1 x C x H x W` f32 tensor.
pub fn features_to_tensor(features: &Array3<f64>, device: &Device) -> Result<Tensor> {
    let (h, w, c) = features.dim();
    let mut flat = Vec::with_capacity(h * w * c);
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                flat.push(features[[y, x, ch]] as f32);
            }
        }
    }
    Ok(Tensor::from_vec(flat, (1, c, h, w), device)?)
}

/// Stacks per-sample features into a `B x C x H x W` f32 tensor.
pub fn batch_to_tensor(batch: &[Array3<f64>], device: &Device) -> Result<Tensor> {
    if batch.is_empty() {
        return Err(Error::invalid_argument("empty batch"));
    }
    let (h, w, c) = batch[0].dim();
    let mut flat = Vec::with_capacity(batch.len() * h * w * c);
    for features in batch {
        if features.dim() != (h, w, c) {
            return Err(Error::invalid_argument("inconsistent feature dims in batch"));
        }
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    flat.push(features[[y, x, ch]] as f32);
                }
            }
        }
    }
    Ok(Tensor::from_vec(flat, (batch.len(), c, h, w), device)?)
}

/// First batch element of a `B x 3 x H x W` tensor to an sRGB image
/// (values clamped).
pub fn tensor_to_image(t: &Tensor) -> Result<Image> {
    let dims = t.dims();
    if dims.len() != 4 || dims[1] != 3 {
        return Err(Error::invalid_argument(format!(
            "expected Bx3xHxW tensor, got {dims:?}"
        )));
    }
    let (h, w) = (dims[2], dims[3]);
    let flat = t.narrow(0, 0, 1)?.flatten_all()?.to_vec1::<f32>()?;
    let mut data = Array3::zeros((h, w, 3));
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                data[[y, x, c]] = (flat[c * h * w + y * w + x] as f64).clamp(0.0, 1.0);
            }
        }
    }
    Image::new(data, ColorSpace::Srgb)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> NetConfig {
        NetConfig::new(32, 3, true, 2).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(NetConfig::new(16, 3, true, 2).is_err());
        assert!(NetConfig::new(32, 0, true, 2).is_err());
        assert!(NetConfig::new(32, 3, true, 0).is_err());
        assert!(NetConfig::new(32, 3, true, 7).is_err());
        let mut bad = tiny_cfg();
        bad.out_channels = 1;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn stage_widths_saturate_at_8x() {
        let cfg = NetConfig::new(32, 3, true, 5).unwrap();
        let widths: Vec<usize> = (0..5).map(|i| cfg.stage_width(i)).collect();
        assert_eq!(widths, vec![32, 64, 128, 256, 256]);
    }

    #[test]
    fn forward_shape_and_finiteness() {
        let model = RestorationModel::new(&tiny_cfg(), 0).unwrap();
        let x = Tensor::zeros((1, 3, 16, 16), DType::F32, model.device()).unwrap();
        let y = model.forward(&x).unwrap();
        assert_eq!(y.dims(), &[1, 3, 16, 16]);
        let vals = y.flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert!(vals.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn forward_scales_with_input() {
        let model = RestorationModel::new(&tiny_cfg(), 0).unwrap();
        let x = Tensor::zeros((1, 3, 32, 32), DType::F32, model.device()).unwrap();
        assert_eq!(model.forward(&x).unwrap().dims(), &[1, 3, 32, 32]);
    }

    #[test]
    fn forward_rejects_indivisible_dims() {
        let model = RestorationModel::new(&tiny_cfg(), 0).unwrap();
        let x = Tensor::zeros((1, 3, 10, 16), DType::F32, model.device()).unwrap();
        assert!(matches!(model.forward(&x), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn skip_connections_add_parameters() {
        let with = RestorationModel::new(&NetConfig::new(32, 3, true, 3).unwrap(), 0).unwrap();
        let without = RestorationModel::new(&NetConfig::new(32, 3, false, 3).unwrap(), 0).unwrap();
        assert!(
            without.parameter_count() < with.parameter_count(),
            "{} !< {}",
            without.parameter_count(),
            with.parameter_count()
        );
    }

    #[test]
    fn initialization_is_deterministic() {
        let a = RestorationModel::new(&tiny_cfg(), 42).unwrap();
        let b = RestorationModel::new(&tiny_cfg(), 42).unwrap();
        let c = RestorationModel::new(&tiny_cfg(), 43).unwrap();
        let x = Tensor::rand(0f32, 1f32, (1, 3, 16, 16), a.device()).unwrap();
        let ya = a.forward(&x).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        let yb = b.forward(&x).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        let yc = c.forward(&x).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(ya, yb);
        assert_ne!(ya, yc);
    }

    #[test]
    fn restore_produces_clamped_image() {
        let model = RestorationModel::new(&tiny_cfg(), 1).unwrap();
        let features = Array3::from_elem((16, 16, 3), 0.3);
        let img = model.restore(&features).unwrap();
        assert_eq!((img.height(), img.width(), img.channels()), (16, 16, 3));
    }

    #[test]
    fn tensor_round_trip_layout() {
        // Pin the NCHW flattening order.
        let mut f = Array3::zeros((2, 2, 3));
        f[[0, 1, 2]] = 0.5;
        let t = features_to_tensor(&f, &Device::Cpu).unwrap();
        let v = t.flatten_all().unwrap().to_vec1::<f32>().unwrap();
        // Channel 2, row 0, col 1 => index 2*4 + 0*2 + 1 = 9.
        assert_eq!(v[9], 0.5);
        assert_eq!(v.iter().filter(|&&x| x != 0.0).count(), 1);
    }
}
