//! Experiment configuration: a single hierarchical YAML file, schema-checked
//! (unknown keys rejected), with every default spelled out in one place.
//!
//! Section map: `data` (resize target), `extractor` (frequency or gradient),
//! `synth` (corruption mixing and parameters), `net`, `train`, `scoring`,
//! `eval`. Environment variables override nothing.

use serde::{Deserialize, Serialize};
use std::path::Path;

use fair_core::extractor::ExtractorSpec;
use fair_core::freqfilter::FilterSpec;
use fair_core::pipeline::{TextureSourceConfig, TrainConfig};
use fair_core::restoration::NetConfig;
use fair_core::scoring::ScoreConfig;
use fair_core::synth::{CorruptionPolicy, SynthConfig};
use fair_core::Error;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// (height, width) every image is resized to.
    pub image_size: (usize, usize),
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { image_size: (256, 256) }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub p_perlin: f64,
    pub p_cutpaste: f64,
    pub p_clean: f64,
    pub beta_range: (f64, f64),
    pub perlin_freqs: Vec<u32>,
    pub perlin_threshold: f64,
    pub mask_area_band: (f64, f64),
    pub max_mask_retries: usize,
    pub cutpaste_side_range: (f64, f64),
    pub texture: TextureSourceConfig,
}

impl Default for SynthSection {
    fn default() -> Self {
        let synth = SynthConfig::default();
        let policy = CorruptionPolicy::default();
        SynthSection {
            p_perlin: policy.p_perlin,
            p_cutpaste: policy.p_cutpaste,
            p_clean: policy.p_clean,
            beta_range: synth.beta_range,
            perlin_freqs: synth.perlin_freqs,
            perlin_threshold: synth.perlin_threshold,
            mask_area_band: synth.mask_area_band,
            max_mask_retries: synth.max_mask_retries,
            cutpaste_side_range: synth.cutpaste_side_range,
            texture: TextureSourceConfig::Internal,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetSection {
    pub base_width: usize,
    pub use_skips: bool,
    pub depth: usize,
}

impl Default for NetSection {
    fn default() -> Self {
        NetSection { base_width: 128, use_skips: true, depth: 5 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay_points: (f64, f64),
    pub lr_decay_factor: f64,
    pub seed: u64,
    pub checkpoint_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: 800,
            batch_size: 8,
            lr: 1e-4,
            lr_decay_points: (0.8, 0.9),
            lr_decay_factor: 0.2,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub fpr_limit: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { fpr_limit: 0.3 }
    }
}

fn default_extractor() -> ExtractorSpec {
    ExtractorSpec::Frequency(FilterSpec::butterworth(30.0, 2).expect("valid default"))
}

/// The full configuration tree.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub extractor: ExtractorSpec,
    pub synth: SynthSection,
    pub net: NetSection,
    pub train: TrainSection,
    pub scoring: ScoreConfig,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataSection::default(),
            extractor: default_extractor(),
            synth: SynthSection::default(),
            net: NetSection::default(),
            train: TrainSection::default(),
            scoring: ScoreConfig::default(),
            eval: EvalSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Loads and schema-checks a YAML config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("config file {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        serde_yaml::from_str(text).map_err(|e| Error::config(format!("config schema: {e}")))
    }

    /// Assembles the core training configuration.
    pub fn to_train_config(&self) -> Result<TrainConfig, Error> {
        let cfg = TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            lr: self.train.lr,
            lr_decay_points: self.train.lr_decay_points,
            lr_decay_factor: self.train.lr_decay_factor,
            seed: self.train.seed,
            image_size: self.data.image_size,
            extractor: self.extractor,
            net: NetConfig {
                base_width: self.net.base_width,
                in_channels: self.extractor.out_channels(3),
                out_channels: 3,
                use_skips: self.net.use_skips,
                depth: self.net.depth,
            },
            synth: SynthConfig {
                beta_range: self.synth.beta_range,
                perlin_freqs: self.synth.perlin_freqs.clone(),
                perlin_threshold: self.synth.perlin_threshold,
                mask_area_band: self.synth.mask_area_band,
                max_mask_retries: self.synth.max_mask_retries,
                cutpaste_side_range: self.synth.cutpaste_side_range,
            },
            policy: CorruptionPolicy {
                p_perlin: self.synth.p_perlin,
                p_cutpaste: self.synth.p_cutpaste,
                p_clean: self.synth.p_clean,
            },
            texture: self.synth.texture.clone(),
            checkpoint_every: self.train.checkpoint_every,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn score_config(&self) -> ScoreConfig {
        self.scoring
    }
}
