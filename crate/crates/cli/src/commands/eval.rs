//! `fair eval`: evaluates one or more checkpoints on a labeled test split,
//! emitting the report JSON, a per-image CSV, and heatmap overlays.
//!
//! Multiple `--ckpt` flags evaluate independently trained models and
//! aggregate (mean) their metrics, the usual multi-run reporting protocol.

use clap::Args;
use std::path::{Path, PathBuf};

use fair_core::pipeline::Inference;
use fair_core::scoring::{
    assemble_report, evaluate_category, CategoryMetrics, EvalReport, ScoreConfig, ScoredSample,
};
use fair_core::{Error, Result};

use crate::dataset::{load_mask, DatasetLayout};
use crate::plot::heatmap_overlay;

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Trained checkpoint; repeat the flag to aggregate several runs.
    #[arg(long, required = true)]
    pub ckpt: Vec<PathBuf>,
    /// Category root containing test/ (and usually ground_truth/).
    #[arg(long)]
    pub data: PathBuf,
    /// Ground-truth directory override (defaults to <data>/ground_truth).
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Report JSON path; the per-image CSV and heatmaps derive from it.
    #[arg(long)]
    pub report: PathBuf,
    /// Aggregation across checkpoints (only "mean" is supported).
    #[arg(long, default_value = "mean")]
    pub aggregate: String,
    /// Skip pixel-level metrics (for mask-free categories).
    #[arg(long)]
    pub image_level_only: bool,
    /// Skip writing heatmap overlay PNGs.
    #[arg(long)]
    pub no_heatmaps: bool,
}

fn mean_reports(reports: &[EvalReport]) -> EvalReport {
    let n = reports.len() as f64;
    let mean_opt = |get: &dyn Fn(&EvalReport) -> Option<f64>| -> Option<f64> {
        let vals: Vec<f64> = reports.iter().filter_map(get).collect();
        if vals.len() == reports.len() {
            Some(vals.iter().sum::<f64>() / n)
        } else {
            None
        }
    };
    EvalReport {
        image_auroc: reports.iter().map(|r| r.image_auroc).sum::<f64>() / n,
        pixel_auroc: mean_opt(&|r| r.pixel_auroc),
        aupro: mean_opt(&|r| r.aupro),
        categories: reports.first().map(|r| r.categories.clone()).unwrap_or_default(),
    }
}

fn eval_one(
    ckpt: &Path,
    layout: &DatasetLayout,
    gt_dir: &Path,
    args: &EvalArgs,
    heatmap_dir: Option<&Path>,
    per_image_csv: &mut String,
) -> Result<CategoryMetrics> {
    let inference = Inference::load(ckpt)?;
    let score_cfg = ScoreConfig::default();
    let mut samples = Vec::with_capacity(layout.test_items.len());
    for item in &layout.test_items {
        let img = fair_core::imagecore::Image::open(&item.path)?;
        let result = inference.run(&img, &score_cfg)?;
        let map_dims = result.map.dims();
        let mask = if item.label && !args.image_level_only {
            let mask_path = item.mask_path.clone().or_else(|| {
                crate::dataset::find_mask(gt_dir, &item.defect_type, item.name.rsplit('/').next().unwrap_or(""))
            });
            match mask_path {
                Some(p) => Some(load_mask(&p, map_dims)?),
                None => {
                    return Err(Error::data(format!(
                        "pixel metrics requested but {} has no ground-truth mask",
                        item.name
                    )))
                }
            }
        } else {
            None
        };
        per_image_csv.push_str(&format!(
            "{},{},{}\n",
            item.name,
            result.image_score,
            u8::from(item.label)
        ));
        if let Some(dir) = heatmap_dir {
            let fname = item.name.replace('/', "_");
            heatmap_overlay(
                &result.input,
                result.map.values(),
                &dir.join(format!("{fname}.png")),
            )?;
        }
        samples.push(ScoredSample {
            name: item.name.clone(),
            label: item.label,
            score: result.image_score,
            map: result.map.into_values(),
            mask,
        });
    }
    evaluate_category(&layout.category, &samples)
}

pub fn run(args: &EvalArgs) -> Result<i32> {
    if args.aggregate != "mean" {
        return Err(Error::invalid_argument(format!(
            "unsupported aggregate {:?}; only \"mean\" is available",
            args.aggregate
        )));
    }
    let layout = DatasetLayout::scan(&args.data)?;
    let gt_dir = args.gt.clone().unwrap_or_else(|| args.data.join("ground_truth"));

    if let Some(parent) = args.report.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let stem = args
        .report
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("report")
        .to_string();
    let base = args.report.parent().map(Path::to_path_buf).unwrap_or_default();
    let heatmap_dir = if args.no_heatmaps {
        None
    } else {
        let dir = base.join(format!("{stem}.heatmaps"));
        std::fs::create_dir_all(&dir)?;
        Some(dir)
    };

    let mut reports = Vec::new();
    let mut per_image_csv = String::from("name,image_score,label\n");
    for (i, ckpt) in args.ckpt.iter().enumerate() {
        // Heatmaps and the CSV come from the first checkpoint only.
        let mut scratch_csv = String::new();
        let csv_target = if i == 0 { &mut per_image_csv } else { &mut scratch_csv };
        let hm = if i == 0 { heatmap_dir.as_deref() } else { None };
        let metrics = eval_one(ckpt, &layout, &gt_dir, args, hm, csv_target)?;
        reports.push(assemble_report(vec![metrics])?);
    }
    let report = if reports.len() == 1 {
        reports.pop().unwrap()
    } else {
        mean_reports(&reports)
    };

    std::fs::write(&args.report, serde_json::to_string_pretty(&report)?)?;
    std::fs::write(base.join(format!("{stem}.per_image.csv")), per_image_csv)?;

    let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    eprintln!(
        "{}: image AUROC {:.4}, pixel AUROC {}, AUPRO {} ({} runs)",
        layout.category,
        report.image_auroc,
        fmt_opt(report.pixel_auroc),
        fmt_opt(report.aupro),
        args.ckpt.len()
    );
    Ok(0)
}
