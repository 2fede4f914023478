//! `fair train`: trains a restoration model on a directory of normal images
//! and writes the run directory (run record, checkpoints, loss curve,
//! config snapshot, manifest).

use clap::Args;
use std::path::PathBuf;

use fair_core::pipeline;
use fair_core::Result;

use crate::config::ExperimentConfig;
use crate::manifest::write_manifest;
use crate::plot::line_plot;

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// YAML experiment configuration (defaults apply when omitted).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of normal training images (e.g. <category>/train/good).
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory for all artifacts.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Resume from an epoch-boundary checkpoint of the same configuration.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

pub fn run(args: &TrainArgs) -> Result<i32> {
    let mut experiment = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        experiment.train.seed = seed;
    }
    let cfg = experiment.to_train_config()?;

    let images: Vec<_> = pipeline::load_images_dir(&args.data)?
        .into_iter()
        .map(|(_, img)| img)
        .collect();
    eprintln!(
        "training on {} images at {}x{} (epochs={}, batch={}, seed={})",
        images.len(),
        cfg.image_size.0,
        cfg.image_size.1,
        cfg.epochs,
        cfg.batch_size,
        cfg.seed
    );
    std::fs::create_dir_all(&args.out)?;
    let (record, _model) =
        pipeline::train_images(&images, &cfg, Some(&args.out), args.resume.as_deref())?;

    std::fs::write(args.out.join("run.json"), serde_json::to_string_pretty(&record)?)?;
    std::fs::write(
        args.out.join("config-snapshot.yaml"),
        serde_yaml::to_string(&experiment)
            .map_err(|e| fair_core::Error::config(format!("snapshot: {e}")))?,
    )?;
    let loss_pts: Vec<(f64, f64)> = record
        .epoch_loss
        .iter()
        .enumerate()
        .map(|(i, &l)| (i as f64 + 1.0, l))
        .collect();
    let l2_pts: Vec<(f64, f64)> = record
        .epoch_l2
        .iter()
        .enumerate()
        .map(|(i, &l)| (i as f64 + 1.0, l))
        .collect();
    let ssim_pts: Vec<(f64, f64)> = record
        .epoch_ssim
        .iter()
        .enumerate()
        .map(|(i, &l)| (i as f64 + 1.0, l))
        .collect();
    line_plot(
        &args.out.join("loss_curve.png"),
        "training loss",
        "epoch",
        "loss",
        &[("total", loss_pts), ("l2", l2_pts), ("ssim", ssim_pts)],
    )?;
    write_manifest(&args.out)?;
    eprintln!(
        "done in {:.1}s; final epoch loss {:.5}; artifacts in {}",
        record.wall_secs,
        record.epoch_loss.last().copied().unwrap_or(f64::NAN),
        args.out.display()
    );
    Ok(0)
}
