//! End-to-end orchestration: the training loop, checkpoint cadence, and the
//! inference pass.
//!
//! Per batch: corrupt the clean image, extract its high-frequency
//! component, restore, and optimize the loss against the clean, uncorrupted,
//! unfiltered image. At test time there is no corruption: the image goes
//! through the same extractor and the restoration is compared against it.
//!
//! Reproducibility: all randomness derives from `(seed, epoch, index)`, so
//! a run resumed from an epoch-boundary checkpoint replays the exact loss
//! trajectory of an uninterrupted run.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::extractor::ExtractorSpec;
use crate::freqfilter::FilterSpec;
use crate::imagecore::{resize, Image};
use crate::restoration::{
    batch_to_tensor, load_checkpoint, loss_terms, save_checkpoint, Adam, AdamParams,
    CheckpointMeta, NetConfig, RestorationModel, FORMAT_TAG, INIT_SCHEME,
};
use crate::scoring::{anomaly_map, image_score, AnomalyMap, ScoreConfig};
use crate::synth::{corrupt_one, sample_seed, CorruptionPolicy, SynthConfig, TextureSource};

/// Serializable texture-source choice.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TextureSourceConfig {
    /// Textures are crops of the training image itself (no extra data).
    Internal,
    /// Textures come from a flat directory of images.
    ExternalDir { path: PathBuf },
}

impl TextureSourceConfig {
    pub fn build(&self) -> Result<TextureSource> {
        match self {
            TextureSourceConfig::Internal => Ok(TextureSource::Internal),
            TextureSourceConfig::ExternalDir { path } => TextureSource::external(path),
        }
    }
}

/// Full training configuration.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial learning rate.
    pub lr: f64,
    /// Epoch fractions after which the rate decays (applied cumulatively).
    pub lr_decay_points: (f64, f64),
    pub lr_decay_factor: f64,
    pub seed: u64,
    /// All images are resized to this (height, width).
    pub image_size: (usize, usize),
    pub extractor: ExtractorSpec,
    pub net: NetConfig,
    pub synth: SynthConfig,
    pub policy: CorruptionPolicy,
    pub texture: TextureSourceConfig,
    /// Save a checkpoint every N epochs (0 = final only).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 800,
            batch_size: 8,
            lr: 1e-4,
            lr_decay_points: (0.8, 0.9),
            lr_decay_factor: 0.2,
            seed: 0,
            image_size: (256, 256),
            extractor: ExtractorSpec::Frequency(
                FilterSpec::butterworth(30.0, 2).expect("default cutoff is valid"),
            ),
            net: NetConfig { base_width: 128, in_channels: 3, out_channels: 3, use_skips: true, depth: 5 },
            synth: SynthConfig::default(),
            policy: CorruptionPolicy::default(),
            texture: TextureSourceConfig::Internal,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    /// The reduced-epoch schedule used for larger training sets.
    pub fn visa_defaults() -> Self {
        TrainConfig { epochs: 400, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch size must be positive"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        let (p1, p2) = self.lr_decay_points;
        if !(0.0 < p1 && p1 <= p2 && p2 <= 1.0) {
            return Err(Error::config("decay points must satisfy 0 < p1 <= p2 <= 1"));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return Err(Error::config("decay factor must lie in (0, 1]"));
        }
        self.net.validate()?;
        self.policy.validate()?;
        let expected = self.extractor.out_channels(3);
        if self.net.in_channels != expected {
            return Err(Error::config(format!(
                "network expects {} input channels but the extractor produces {expected}",
                self.net.in_channels
            )));
        }
        let m = self.net.size_multiple();
        let (h, w) = self.image_size;
        if h % m != 0 || w % m != 0 {
            return Err(Error::config(format!(
                "image size {h}x{w} must be divisible by 2^depth = {m}"
            )));
        }
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::config("image size must be even for two-scale scoring"));
        }
        Ok(())
    }

    /// Canonical hash of the configuration, stored in checkpoints.
    pub fn config_hash(&self) -> Result<String> {
        let json = serde_json::to_string(self)?;
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        Ok(format!("{:x}", hasher.finalize()))
    }
}

/// Learning rate in effect for 0-based `epoch_idx`: the base rate decays by
/// `lr_decay_factor` after each decay point (floor of fraction * epochs)
/// has passed.
pub fn lr_for_epoch(cfg: &TrainConfig, epoch_idx: usize) -> f64 {
    let e = epoch_idx + 1;
    let t1 = (cfg.lr_decay_points.0 * cfg.epochs as f64).floor() as usize;
    let t2 = (cfg.lr_decay_points.1 * cfg.epochs as f64).floor() as usize;
    let mut lr = cfg.lr;
    if e > t1 {
        lr *= cfg.lr_decay_factor;
    }
    if e > t2 {
        lr *= cfg.lr_decay_factor;
    }
    lr
}

/// Outcome of a training run.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct RunRecord {
    pub epoch_loss: Vec<f64>,
    pub epoch_l2: Vec<f64>,
    pub epoch_ssim: Vec<f64>,
    pub lr_per_epoch: Vec<f64>,
    pub completed_epochs: usize,
    pub global_step: u64,
    pub init_scheme: String,
    pub wall_secs: f64,
    pub checkpoint_path: Option<PathBuf>,
    pub config: serde_json::Value,
}

fn epoch_shuffle(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(sample_seed(seed ^ 0x5175_ffe1, epoch as u64));
    idx.shuffle(&mut rng);
    idx
}

fn checkpoint_meta(cfg: &TrainConfig, epoch: usize, step: u64, opt_step: Option<u64>) -> Result<CheckpointMeta> {
    Ok(CheckpointMeta {
        format: FORMAT_TAG.to_string(),
        net: cfg.net,
        extractor: cfg.extractor,
        image_size: cfg.image_size,
        epoch,
        global_step: step,
        config_hash: cfg.config_hash()?,
        init_scheme: INIT_SCHEME.to_string(),
        optimizer_step: opt_step,
    })
}

/// Trains on in-memory images (resized as needed). Returns the run record
/// and the trained model. `out_dir` enables checkpoint writing;
/// `resume_from` continues from an epoch-boundary checkpoint of the same
/// configuration.
pub fn train_images(
    images: &[Image],
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    resume_from: Option<&Path>,
) -> Result<(RunRecord, RestorationModel)> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    let started = Instant::now();
    let texture = cfg.texture.build()?;
    let cleans: Vec<Image> = images
        .iter()
        .map(|img| resize(img, cfg.image_size.0, cfg.image_size.1))
        .collect::<Result<_>>()?;

    let config_hash = cfg.config_hash()?;
    let (model, mut optimizer, start_epoch, mut global_step) = match resume_from {
        None => {
            let model = RestorationModel::new(&cfg.net, cfg.seed)?;
            let opt = Adam::new(model.named_vars(), AdamParams { lr: cfg.lr, ..Default::default() })?;
            (model, opt, 0, 0u64)
        }
        Some(path) => {
            let loaded = load_checkpoint(path)?;
            if loaded.meta.config_hash != config_hash {
                return Err(Error::config(format!(
                    "checkpoint {} was produced by a different configuration",
                    path.display()
                )));
            }
            let mut opt = Adam::new(
                loaded.model.named_vars(),
                AdamParams { lr: cfg.lr, ..Default::default() },
            )?;
            if let Some((t, state)) = &loaded.optimizer_state {
                opt.load_state(*t, state)?;
            }
            let epoch = loaded.meta.epoch;
            let step = loaded.meta.global_step;
            (loaded.model, opt, epoch, step)
        }
    };

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut record = RunRecord {
        epoch_loss: Vec::with_capacity(cfg.epochs),
        epoch_l2: Vec::with_capacity(cfg.epochs),
        epoch_ssim: Vec::with_capacity(cfg.epochs),
        lr_per_epoch: Vec::with_capacity(cfg.epochs),
        completed_epochs: start_epoch,
        global_step,
        init_scheme: INIT_SCHEME.to_string(),
        wall_secs: 0.0,
        checkpoint_path: None,
        config: serde_json::to_value(cfg)?,
    };

    for epoch in start_epoch..cfg.epochs {
        let lr = lr_for_epoch(cfg, epoch);
        optimizer.set_lr(lr);
        let order = epoch_shuffle(cleans.len(), cfg.seed, epoch);
        let epoch_seed = sample_seed(cfg.seed, epoch as u64);
        let mut sums = (0.0f64, 0.0f64, 0.0f64);
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let mut inputs = Vec::with_capacity(chunk.len());
            let mut targets = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                let sample = corrupt_one(
                    &cleans[idx],
                    &cfg.policy,
                    &texture,
                    &cfg.synth,
                    sample_seed(epoch_seed, idx as u64),
                )?;
                inputs.push(cfg.extractor.extract(&sample.corrupted)?);
                targets.push(sample.clean.data().clone());
            }
            let x = batch_to_tensor(&inputs, model.device())?;
            let y = batch_to_tensor(&targets, model.device())?;
            let restored = model.forward(&x)?;
            let (total, l2, ssim) = loss_terms(&restored, &y)?;
            let loss_val = total.to_scalar::<f32>()? as f64;
            if !loss_val.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss {loss_val} at epoch {epoch}, step {global_step}"
                )));
            }
            let grads = total.backward()?;
            optimizer.step(&grads)?;
            sums.0 += loss_val;
            sums.1 += l2.to_scalar::<f32>()? as f64;
            sums.2 += ssim.to_scalar::<f32>()? as f64;
            batches += 1;
            global_step += 1;
        }
        record.epoch_loss.push(sums.0 / batches as f64);
        record.epoch_l2.push(sums.1 / batches as f64);
        record.epoch_ssim.push(sums.2 / batches as f64);
        record.lr_per_epoch.push(lr);
        record.completed_epochs = epoch + 1;
        record.global_step = global_step;

        if let Some(dir) = out_dir {
            let cadence_hit =
                cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0;
            if cadence_hit && epoch + 1 < cfg.epochs {
                let meta = checkpoint_meta(cfg, epoch + 1, global_step, Some(optimizer.step_count()))?;
                let path = dir.join(format!("checkpoint-epoch-{:04}.safetensors", epoch + 1));
                save_checkpoint(&path, &model, Some(&optimizer), &meta)?;
            }
        }
    }

    if let Some(dir) = out_dir {
        let meta = checkpoint_meta(cfg, cfg.epochs, global_step, Some(optimizer.step_count()))?;
        let path = dir.join("checkpoint.safetensors");
        save_checkpoint(&path, &model, Some(&optimizer), &meta)?;
        record.checkpoint_path = Some(path);
    }
    record.wall_secs = started.elapsed().as_secs_f64();
    Ok((record, model))
}

/// Loads `(name, image)` pairs from a flat directory, sorted by file name.
pub fn load_images_dir(dir: impl AsRef<Path>) -> Result<Vec<(String, Image)>> {
    let dir = dir.as_ref();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::data(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| ["png", "jpg", "jpeg", "bmp"].contains(&e.to_ascii_lowercase().as_str()))
                .unwrap_or(false)
        })
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(Error::data(format!("no images found in {}", dir.display())));
    }
    entries
        .into_iter()
        .map(|p| {
            let name = p
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("image")
                .to_string();
            Ok((name, Image::open(&p)?))
        })
        .collect()
}

/// Trains from a directory of normal images and writes artifacts to
/// `out_dir`.
pub fn train(dataset_dir: impl AsRef<Path>, cfg: &TrainConfig, out_dir: impl AsRef<Path>) -> Result<RunRecord> {
    let images: Vec<Image> = load_images_dir(dataset_dir)?
        .into_iter()
        .map(|(_, img)| img)
        .collect();
    let (record, _) = train_images(&images, cfg, Some(out_dir.as_ref()), None)?;
    Ok(record)
}

/// Result of scoring one image.
#[derive(Debug)]
pub struct InferenceResult {
    /// The resized input actually scored.
    pub input: Image,
    pub restored: Image,
    pub map: AnomalyMap,
    pub image_score: f64,
}

/// A loaded checkpoint ready to score images. The extractor configuration
/// is applied verbatim from the checkpoint.
pub struct Inference {
    model: RestorationModel,
    meta: CheckpointMeta,
    /// When set, inputs whose size differs from the training size are
    /// rejected instead of resized.
    pub strict_size: bool,
}

impl Inference {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let loaded = load_checkpoint(path)?;
        Ok(Inference { model: loaded.model, meta: loaded.meta, strict_size: false })
    }

    pub fn meta(&self) -> &CheckpointMeta {
        &self.meta
    }

    pub fn extractor(&self) -> &ExtractorSpec {
        &self.meta.extractor
    }

    fn prepare(&self, img: &Image) -> Result<Image> {
        let (h, w) = self.meta.image_size;
        if (img.height(), img.width()) != (h, w) {
            if self.strict_size {
                return Err(Error::invalid_argument(format!(
                    "input is {}x{} but the model was trained at {h}x{w}",
                    img.height(),
                    img.width()
                )));
            }
            return resize(img, h, w);
        }
        Ok(img.clone())
    }

    /// Restores an image (no scoring).
    pub fn restore(&self, img: &Image) -> Result<(Image, Image)> {
        let input = self.prepare(img)?;
        let features = self.meta.extractor.extract(&input)?;
        let restored = self.model.restore(&features)?;
        Ok((input, restored))
    }

    /// Full inference: restoration, anomaly map, image-level score.
    pub fn run(&self, img: &Image, score_cfg: &ScoreConfig) -> Result<InferenceResult> {
        let (input, restored) = self.restore(img)?;
        let map = anomaly_map(&input, &restored, score_cfg)?;
        let image_score = image_score(&map)?;
        Ok(InferenceResult { input, restored, map, image_score })
    }

    /// Scores a batch, preserving input order.
    pub fn run_batch(&self, imgs: &[Image], score_cfg: &ScoreConfig) -> Result<Vec<InferenceResult>> {
        imgs.iter().map(|img| self.run(img, score_cfg)).collect()
    }
}
