//! `fair infer`: scores one image or a directory with a trained checkpoint.
//! Prints `name,score` CSV on stdout; optionally saves restorations, raw
//! anomaly maps (.npy), and heatmap overlays.

use clap::Args;
use std::path::PathBuf;

use fair_core::pipeline::Inference;
use fair_core::{Error, Result};

use crate::plot::{heatmap_overlay, save_npy};

#[derive(Args, Debug)]
pub struct InferArgs {
    /// Trained checkpoint.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Single image to score.
    #[arg(long, conflicts_with = "dir")]
    pub image: Option<PathBuf>,
    /// Directory of images to score.
    #[arg(long)]
    pub dir: Option<PathBuf>,
    /// Directory for restored images, raw maps, and overlays.
    #[arg(long)]
    pub save_maps: Option<PathBuf>,
    /// Reject inputs whose size differs from the training size instead of
    /// resizing them.
    #[arg(long)]
    pub strict_size: bool,
}

pub fn run(args: &InferArgs) -> Result<i32> {
    let mut inference = Inference::load(&args.ckpt)?;
    inference.strict_size = args.strict_size;
    let score_cfg = fair_core::scoring::ScoreConfig::default();

    let inputs: Vec<(String, fair_core::imagecore::Image)> = match (&args.image, &args.dir) {
        (Some(path), None) => {
            let name = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("image")
                .to_string();
            vec![(name, fair_core::imagecore::Image::open(path)?)]
        }
        (None, Some(dir)) => fair_core::pipeline::load_images_dir(dir)?,
        _ => {
            return Err(Error::invalid_argument(
                "exactly one of --image or --dir is required",
            ))
        }
    };

    if let Some(dir) = &args.save_maps {
        std::fs::create_dir_all(dir)?;
    }
    println!("name,score");
    for (name, img) in inputs {
        let result = inference.run(&img, &score_cfg)?;
        println!("{name},{}", result.image_score);
        if let Some(dir) = &args.save_maps {
            result.restored.save(dir.join(format!("{name}_restored.png")))?;
            save_npy(result.map.values(), &dir.join(format!("{name}_map.npy")))?;
            heatmap_overlay(
                &result.input,
                result.map.values(),
                &dir.join(format!("{name}_overlay.png")),
            )?;
        }
    }
    Ok(0)
}
