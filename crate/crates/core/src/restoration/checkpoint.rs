//! Self-describing checkpoint container.
//!
//! A checkpoint is a single safetensors file whose header metadata embeds a
//! versioned JSON record: network config, extractor config, resize target,
//! training progress, the pipeline config hash, and the init scheme.
//! Weights live under their parameter names; optimizer moments (when saved)
//! under an `optim::` prefix so that training can resume exactly.

use candle_core::Tensor;
use std::collections::HashMap;
use std::path::Path;

use super::{Adam, NetConfig, RestorationModel};
use crate::error::{Error, Result};
use crate::extractor::ExtractorSpec;

/// Version tag of the checkpoint format.
pub const FORMAT_TAG: &str = "fair-checkpoint-v1";

const OPTIM_PREFIX: &str = "optim::";

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub net: NetConfig,
    pub extractor: ExtractorSpec,
    /// Images are resized to this (height, width) before extraction.
    pub image_size: (usize, usize),
    /// Completed training epochs.
    pub epoch: usize,
    pub global_step: u64,
    /// Hash of the full training configuration; inference applies the
    /// checkpointed extractor verbatim and resume verifies this hash.
    pub config_hash: String,
    pub init_scheme: String,
    /// Adam step counter, present when optimizer state is stored.
    pub optimizer_step: Option<u64>,
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &RestorationModel,
    optimizer: Option<&Adam>,
    meta: &CheckpointMeta,
) -> Result<()> {
    let mut tensors: Vec<(String, Tensor)> = model
        .named_vars()
        .into_iter()
        .map(|(name, var)| (name, var.as_tensor().clone()))
        .collect();
    if let Some(opt) = optimizer {
        for (name, t) in opt.state() {
            tensors.push((format!("{OPTIM_PREFIX}{name}"), t));
        }
    }
    let mut info = HashMap::new();
    info.insert("format".to_string(), FORMAT_TAG.to_string());
    info.insert("meta".to_string(), serde_json::to_string(meta)?);
    safetensors::serialize_to_file(tensors, Some(info), path.as_ref())
        .map_err(|e| Error::Checkpoint(format!("write {}: {e}", path.as_ref().display())))?;
    Ok(())
}

pub struct LoadedCheckpoint {
    pub meta: CheckpointMeta,
    pub model: RestorationModel,
    /// `(adam step, moment tensors keyed by their optimizer-state names)`.
    pub optimizer_state: Option<(u64, HashMap<String, Tensor>)>,
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<LoadedCheckpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Checkpoint(format!("read {}: {e}", path.display())))?;
    let (_, header) = safetensors::SafeTensors::read_metadata(&bytes)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    let info = header
        .metadata()
        .as_ref()
        .ok_or_else(|| Error::Checkpoint(format!("{}: missing metadata", path.display())))?;
    match info.get("format").map(String::as_str) {
        Some(FORMAT_TAG) => {}
        Some(other) => {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported format tag {other:?} (expected {FORMAT_TAG:?})",
                path.display()
            )))
        }
        None => {
            return Err(Error::Checkpoint(format!(
                "{}: not a restoration checkpoint",
                path.display()
            )))
        }
    }
    let meta: CheckpointMeta = serde_json::from_str(
        info.get("meta")
            .ok_or_else(|| Error::Checkpoint(format!("{}: missing meta record", path.display())))?,
    )?;

    let tensors = candle_core::safetensors::load_buffer(&bytes, &candle_core::Device::Cpu)?;
    let mut weights: Vec<(String, Vec<f32>, Vec<usize>)> = Vec::new();
    let mut optim: HashMap<String, Tensor> = HashMap::new();
    for (name, tensor) in tensors {
        if let Some(stripped) = name.strip_prefix(OPTIM_PREFIX) {
            optim.insert(stripped.to_string(), tensor);
        } else {
            let dims = tensor.dims().to_vec();
            let flat = tensor.flatten_all()?.to_vec1::<f32>()?;
            weights.push((name, flat, dims));
        }
    }

    let model = RestorationModel::new(&meta.net, 0)?;
    model.load_weights(&weights)?;
    let optimizer_state = match meta.optimizer_step {
        Some(t) if !optim.is_empty() => Some((t, optim)),
        _ => None,
    };
    Ok(LoadedCheckpoint { meta, model, optimizer_state })
}
