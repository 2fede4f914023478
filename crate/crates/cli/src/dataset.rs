//! MVTec-style dataset layout:
//!
//! ```text
//! <category>/
//!   train/good/*.png            only normal images
//!   test/<defect_type>/*.png    "good" = normal, anything else = anomalous
//!   ground_truth/<defect_type>/<stem>_mask.png
//! ```
//!
//! The VisA ingestion helper reorganizes the official VisA tree (via
//! `split_csv/1cls.csv`) into this layout: normal-only training split,
//! mixed test split, masks under `ground_truth/`.

use ndarray::Array2;
use std::path::{Path, PathBuf};

use fair_core::{Error, Result};

const IMAGE_EXTS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::data(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_image(p))
        .collect();
    out.sort();
    Ok(out)
}

/// One test image with its label and optional ground-truth mask path.
#[derive(Clone, Debug)]
pub struct TestItem {
    pub name: String,
    pub defect_type: String,
    pub path: PathBuf,
    pub mask_path: Option<PathBuf>,
    pub label: bool,
}

/// A scanned category directory.
#[derive(Clone, Debug)]
pub struct DatasetLayout {
    pub category: String,
    pub train_images: Vec<PathBuf>,
    pub test_items: Vec<TestItem>,
}

impl DatasetLayout {
    /// Scans `<root>` expecting `train/good`, `test/<type>`, and optionally
    /// `ground_truth/<type>`.
    pub fn scan(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let category = root
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or("category")
            .to_string();
        let train_dir = root.join("train").join("good");
        if !train_dir.is_dir() {
            return Err(Error::data(format!(
                "{}: missing train/good split (training sets hold only normal images)",
                root.display()
            )));
        }
        let train_images = list_images(&train_dir)?;
        if train_images.is_empty() {
            return Err(Error::data(format!("{}: train/good is empty", root.display())));
        }

        let test_dir = root.join("test");
        if !test_dir.is_dir() {
            return Err(Error::data(format!("{}: missing test split", root.display())));
        }
        let gt_dir = root.join("ground_truth");
        let mut test_items = Vec::new();
        let mut type_dirs: Vec<PathBuf> = std::fs::read_dir(&test_dir)
            .map_err(|e| Error::data(format!("{}: {e}", test_dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        type_dirs.sort();
        for type_dir in type_dirs {
            let defect_type = type_dir
                .file_name()
                .and_then(|s| s.to_str())
                .unwrap_or("unknown")
                .to_string();
            let label = defect_type != "good";
            for path in list_images(&type_dir)? {
                let stem = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or("image")
                    .to_string();
                let mask_path = if label {
                    find_mask(&gt_dir, &defect_type, &stem)
                } else {
                    None
                };
                test_items.push(TestItem {
                    name: format!("{defect_type}/{stem}"),
                    defect_type: defect_type.clone(),
                    path,
                    mask_path,
                    label,
                });
            }
        }
        if test_items.is_empty() {
            return Err(Error::data(format!("{}: test split is empty", root.display())));
        }
        Ok(DatasetLayout { category, train_images, test_items })
    }
}

/// Looks for `<stem>_mask.png` (the MVTec convention) then `<stem>.png`.
pub fn find_mask(gt_dir: &Path, defect_type: &str, stem: &str) -> Option<PathBuf> {
    let dir = gt_dir.join(defect_type);
    for candidate in [format!("{stem}_mask.png"), format!("{stem}.png")] {
        let p = dir.join(candidate);
        if p.is_file() {
            return Some(p);
        }
    }
    None
}

/// Loads a ground-truth mask, resizing (nearest) to `dims` and binarizing.
pub fn load_mask(path: &Path, dims: (usize, usize)) -> Result<Array2<u8>> {
    let img = image::open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    let (th, tw) = dims;
    Ok(Array2::from_shape_fn((th, tw), |(y, x)| {
        let sy = (y * h as usize / th).min(h as usize - 1) as u32;
        let sx = (x * w as usize / tw).min(w as usize - 1) as u32;
        u8::from(img.get_pixel(sx, sy).0[0] > 127)
    }))
}

/// One row of VisA's `split_csv/1cls.csv`.
struct VisaRow {
    object: String,
    split: String,
    label: String,
    image: String,
    mask: String,
}

fn parse_visa_csv(text: &str) -> Result<Vec<VisaRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue; // header
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 4 {
            return Err(Error::data(format!("1cls.csv line {}: expected 4+ fields", i + 1)));
        }
        rows.push(VisaRow {
            object: fields[0].to_string(),
            split: fields[1].to_string(),
            label: fields[2].to_string(),
            image: fields[3].to_string(),
            mask: fields.get(4).unwrap_or(&"").to_string(),
        });
    }
    if rows.is_empty() {
        return Err(Error::data("1cls.csv has no data rows"));
    }
    Ok(rows)
}

/// Reorganizes a VisA root (with `split_csv/1cls.csv`) into the MVTec-style
/// layout under `dst`. Returns the number of files copied.
///
/// The 1cls protocol is used: training images are all normal, the test
/// split mixes normal and anomalous images.
pub fn ingest_visa(src: &Path, dst: &Path, only_category: Option<&str>) -> Result<usize> {
    let csv_path = src.join("split_csv").join("1cls.csv");
    let text = std::fs::read_to_string(&csv_path)
        .map_err(|e| Error::data(format!("{}: {e}", csv_path.display())))?;
    let mut copied = 0usize;
    for row in parse_visa_csv(&text)? {
        if let Some(cat) = only_category {
            if row.object != cat {
                continue;
            }
        }
        let src_img = src.join(&row.image);
        if !src_img.is_file() {
            return Err(Error::data(format!("missing image {}", src_img.display())));
        }
        let stem = src_img
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("image")
            .to_string();
        let ext = src_img
            .extension()
            .and_then(|s| s.to_str())
            .unwrap_or("png")
            .to_ascii_lowercase();
        let is_normal = row.label == "normal";
        let dest = match (row.split.as_str(), is_normal) {
            ("train", true) => dst.join(&row.object).join("train").join("good"),
            ("train", false) => {
                return Err(Error::data(format!(
                    "1cls split lists an anomalous training image: {}",
                    row.image
                )))
            }
            ("test", true) => dst.join(&row.object).join("test").join("good"),
            ("test", false) => dst.join(&row.object).join("test").join("bad"),
            (other, _) => return Err(Error::data(format!("unknown split {other:?}"))),
        };
        std::fs::create_dir_all(&dest)?;
        std::fs::copy(&src_img, dest.join(format!("{stem}.{ext}")))?;
        copied += 1;
        if !is_normal && !row.mask.is_empty() {
            let src_mask = src.join(&row.mask);
            if src_mask.is_file() {
                let mask_dir = dst.join(&row.object).join("ground_truth").join("bad");
                std::fs::create_dir_all(&mask_dir)?;
                std::fs::copy(&src_mask, mask_dir.join(format!("{stem}_mask.png")))?;
                copied += 1;
            }
        }
    }
    Ok(copied)
}
