//! Anomaly evaluation: per-pixel maps from gradient-magnitude and color
//! similarity, and threshold-free dataset metrics (AUROC, AUPRO).
//!
//! The anomaly map combines two cues computed between a test image and its
//! restoration: `1 - MSGMS` (multi-scale gradient magnitude similarity on
//! the bottom two pyramid scales) and the squared CIELAB chroma difference
//! with lightness excluded. The combined map is `(k * color + gradient)`
//! smoothed by a mean filter. The image-level score is the map maximum.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::imagecore::{pyramid, to_lab, Image};

/// Stability constant of the GMS ratio. This is the classic value 170
/// rescaled from the `[0,255]^2` intensity scale to `[0,1]^2`.
pub const GMS_STABILITY: f64 = 0.0026;

/// Default weight of the color term in the combined map.
pub const DEFAULT_COLOR_WEIGHT: f64 = 3e-4;

/// Default mean-smoothing kernel size for the combined map.
pub const DEFAULT_SMOOTH_KERNEL: usize = 21;

/// Scoring parameters; defaults follow the pinned pipeline settings.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct ScoreConfig {
    /// Color-term weight `k`.
    pub color_weight: f64,
    /// Mean-filter kernel size (odd).
    pub smooth_kernel: usize,
    /// Number of pyramid scales in MSGMS (2 = full + half resolution).
    pub msgms_scales: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            color_weight: DEFAULT_COLOR_WEIGHT,
            smooth_kernel: DEFAULT_SMOOTH_KERNEL,
            msgms_scales: 2,
        }
    }
}

/// Per-pixel anomaly scores, all finite and non-negative.
#[derive(Clone, Debug)]
pub struct AnomalyMap {
    values: Array2<f64>,
    components: Option<MapComponents>,
}

/// The two cue maps and combination parameters behind an [`AnomalyMap`].
#[derive(Clone, Debug)]
pub struct MapComponents {
    pub color: Array2<f64>,
    pub gradient: Array2<f64>,
    pub color_weight: f64,
    pub smooth_kernel: usize,
}

impl AnomalyMap {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn components(&self) -> Option<&MapComponents> {
        self.components.as_ref()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// Prewitt gradient magnitude with `1/3`-normalized kernels. Borders use
/// replicate padding so flat images have exactly zero gradient everywhere.
fn prewitt_magnitude(ch: ArrayView2<'_, f64>) -> Array2<f64> {
    let (h, w) = ch.dim();
    let mut out = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut gx = 0.0;
            let mut gy = 0.0;
            for i in 0..3usize {
                for j in 0..3usize {
                    let sy = (y as isize + i as isize - 1).clamp(0, h as isize - 1);
                    let sx = (x as isize + j as isize - 1).clamp(0, w as isize - 1);
                    let v = ch[[sy as usize, sx as usize]];
                    gx += ((j as f64) - 1.0) / 3.0 * v;
                    gy += ((i as f64) - 1.0) / 3.0 * v;
                }
            }
            out[[y, x]] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

/// Gradient magnitude similarity map between two single-channel images:
/// `(2*m_a*m_b + c) / (m_a^2 + m_b^2 + c)`, values in `(0, 1]`.
pub fn gms(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::invalid_argument(format!(
            "gms dimension mismatch: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let ma = prewitt_magnitude(a);
    let mb = prewitt_magnitude(b);
    Ok(Array2::from_shape_fn(a.dim(), |idx| {
        let (x, y) = (ma[idx], mb[idx]);
        (2.0 * x * y + GMS_STABILITY) / (x * x + y * y + GMS_STABILITY)
    }))
}

/// Nearest-neighbor upsampling to the given dimensions.
fn nearest_upsample(map: &Array2<f64>, dims: (usize, usize)) -> Array2<f64> {
    let (sh, sw) = map.dim();
    Array2::from_shape_fn(dims, |(y, x)| map[[y * sh / dims.0, x * sw / dims.1]])
}

/// Multi-scale GMS dissimilarity: GMS averaged over `scales` pyramid levels
/// (each upsampled back to full resolution), subtracted from 1.
/// Inputs are grayscale-reduced first. Values lie in `[0, 1)`.
pub fn msgms_map(orig: &Image, restored: &Image, scales: usize) -> Result<Array2<f64>> {
    if (orig.height(), orig.width()) != (restored.height(), restored.width()) {
        return Err(Error::invalid_argument("msgms dimension mismatch"));
    }
    if scales == 0 {
        return Err(Error::invalid_argument("msgms needs at least one scale"));
    }
    let factor = 1usize << (scales - 1);
    if orig.height() % factor != 0 || orig.width() % factor != 0 {
        return Err(Error::invalid_argument(format!(
            "msgms with {scales} scales needs dims divisible by {factor}"
        )));
    }
    let full_dims = (orig.height(), orig.width());
    let pa = pyramid(&orig.to_gray(), scales)?;
    let pb = pyramid(&restored.to_gray(), scales)?;
    let mut acc = Array2::<f64>::zeros(full_dims);
    for (la, lb) in pa.iter().zip(pb.iter()) {
        let g = gms(la.channel(0), lb.channel(0))?;
        acc += &nearest_upsample(&g, full_dims);
    }
    acc /= scales as f64;
    Ok(acc.mapv(|v| 1.0 - v))
}

/// Squared CIELAB chroma difference `(a_r - a_o)^2 + (b_r - b_o)^2`;
/// lightness is deliberately excluded.
pub fn color_map(orig: &Image, restored: &Image) -> Result<Array2<f64>> {
    if (orig.height(), orig.width()) != (restored.height(), restored.width()) {
        return Err(Error::invalid_argument("color map dimension mismatch"));
    }
    let lab_o = to_lab(orig)?;
    let lab_r = to_lab(restored)?;
    Ok(Array2::from_shape_fn((orig.height(), orig.width()), |idx| {
        let da = lab_r.a[idx] - lab_o.a[idx];
        let db = lab_r.b[idx] - lab_o.b[idx];
        da * da + db * db
    }))
}

/// Mean filter with symmetric (mirror-including-edge) padding.
fn mean_filter(map: &Array2<f64>, kernel: usize) -> Array2<f64> {
    let (h, w) = map.dim();
    let half = kernel as isize / 2;
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        while i < 0 || i >= n {
            if i < 0 {
                i = -i - 1;
            }
            if i >= n {
                i = 2 * n - 1 - i;
            }
        }
        i as usize
    };
    // Separable box filter: rows then columns.
    let mut rows = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for d in -half..=half {
                s += map[[y, reflect(x as isize + d, w)]];
            }
            rows[[y, x]] = s;
        }
    }
    let mut out = Array2::zeros((h, w));
    let norm = (kernel * kernel) as f64;
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for d in -half..=half {
                s += rows[[reflect(y as isize + d, h), x]];
            }
            out[[y, x]] = s / norm;
        }
    }
    out
}

/// Combines the color and gradient cues: `(k*color + gradient)` followed by
/// mean smoothing. The inputs and parameters are retained as components.
pub fn combine(
    color: &Array2<f64>,
    gradient: &Array2<f64>,
    color_weight: f64,
    smooth_kernel: usize,
) -> Result<AnomalyMap> {
    if color.dim() != gradient.dim() {
        return Err(Error::invalid_argument("combine dimension mismatch"));
    }
    if smooth_kernel % 2 == 0 || smooth_kernel == 0 {
        return Err(Error::invalid_argument(format!(
            "smoothing kernel must be odd, got {smooth_kernel}"
        )));
    }
    let weighted = color * color_weight + gradient;
    let values = mean_filter(&weighted, smooth_kernel);
    Ok(AnomalyMap {
        values,
        components: Some(MapComponents {
            color: color.clone(),
            gradient: gradient.clone(),
            color_weight,
            smooth_kernel,
        }),
    })
}

/// Full anomaly map between an image and its restoration.
pub fn anomaly_map(orig: &Image, restored: &Image, cfg: &ScoreConfig) -> Result<AnomalyMap> {
    let gradient = msgms_map(orig, restored, cfg.msgms_scales)?;
    let color = color_map(orig, restored)?;
    combine(&color, &gradient, cfg.color_weight, cfg.smooth_kernel)
}

/// Image-level anomaly score: the maximum of the map.
pub fn image_score(map: &AnomalyMap) -> Result<f64> {
    let (h, w) = map.dims();
    if h == 0 || w == 0 {
        return Err(Error::invalid_argument("empty anomaly map"));
    }
    Ok(map.values().iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Rank-based AUROC with midrank tie handling.
///
/// Equivalent to the Mann-Whitney statistic
/// `P(score+ > score-) + 0.5 * P(score+ = score-)`.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid_argument("scores/labels length mismatch"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid_argument("scores must be finite"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUROC needs at least one positive and one negative sample".into(),
        ));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // Midranks: ties share the average of their 1-based rank range.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if labels[k] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let p = n_pos as f64;
    let n = n_neg as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// 8-connected component labels of a binary mask; returns the label array
/// (0 = background, regions numbered from 1) and the pixel count per region.
pub fn connected_components(mask: &Array2<u8>) -> (Array2<u32>, Vec<usize>) {
    let (h, w) = mask.dim();
    let mut labels = Array2::<u32>::zeros((h, w));
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if mask[[y, x]] == 0 || labels[[y, x]] != 0 {
                continue;
            }
            let label = sizes.len() as u32 + 1;
            let mut size = 0usize;
            stack.push((y, x));
            labels[[y, x]] = label;
            while let Some((cy, cx)) = stack.pop() {
                size += 1;
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        if dy == 0 && dx == 0 {
                            continue;
                        }
                        let ny = cy as isize + dy;
                        let nx = cx as isize + dx;
                        if ny < 0 || ny >= h as isize || nx < 0 || nx >= w as isize {
                            continue;
                        }
                        let (ny, nx) = (ny as usize, nx as usize);
                        if mask[[ny, nx]] != 0 && labels[[ny, nx]] == 0 {
                            labels[[ny, nx]] = label;
                            stack.push((ny, nx));
                        }
                    }
                }
            }
            sizes.push(size);
        }
    }
    (labels, sizes)
}

/// Maximum number of thresholds swept by [`aupro`]; above this the distinct
/// values are subsampled at evenly spaced quantiles. Affects third-decimal
/// reproducibility, hence pinned here.
pub const AUPRO_MAX_THRESHOLDS: usize = 5000;

/// Area under the per-region-overlap curve, integrated over the global
/// per-pixel FPR range `[0, fpr_limit]` and normalized by `fpr_limit`.
///
/// Each 8-connected component of each ground-truth mask is one region; the
/// PRO value at a threshold is the mean over all regions of the fraction of
/// the region covered by the binarized prediction (`map >= t`).
pub fn aupro(maps: &[Array2<f64>], masks: &[Array2<u8>], fpr_limit: f64) -> Result<f64> {
    if maps.len() != masks.len() || maps.is_empty() {
        return Err(Error::invalid_argument("aupro needs matching map/mask lists"));
    }
    if !(fpr_limit > 0.0 && fpr_limit <= 1.0) {
        return Err(Error::invalid_argument("fpr_limit must lie in (0, 1]"));
    }
    // Assign every pixel either a global region id or a negative slot.
    let mut region_sizes: Vec<usize> = Vec::new();
    let mut pixels: Vec<(f64, u32)> = Vec::new(); // (value, region id + 1; 0 = negative)
    let mut n_neg = 0usize;
    for (map, mask) in maps.iter().zip(masks.iter()) {
        if map.dim() != mask.dim() {
            return Err(Error::invalid_argument("map/mask dimension mismatch"));
        }
        let (labels, sizes) = connected_components(mask);
        let base = region_sizes.len() as u32;
        region_sizes.extend(sizes);
        for (idx, &v) in map.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::invalid_argument("anomaly map contains non-finite values"));
            }
            let l = labels[idx];
            if l == 0 {
                n_neg += 1;
                pixels.push((v, 0));
            } else {
                pixels.push((v, base + l));
            }
        }
    }
    if region_sizes.is_empty() {
        return Err(Error::UndefinedMetric(
            "AUPRO needs at least one ground-truth region".into(),
        ));
    }
    if n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUPRO needs at least one negative pixel".into(),
        ));
    }

    pixels.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut thresholds: Vec<f64> = pixels.iter().map(|p| p.0).collect();
    thresholds.dedup();
    if thresholds.len() > AUPRO_MAX_THRESHOLDS {
        let n = thresholds.len();
        thresholds = (0..AUPRO_MAX_THRESHOLDS)
            .map(|i| thresholds[i * (n - 1) / (AUPRO_MAX_THRESHOLDS - 1)])
            .collect();
        thresholds.dedup();
    }

    // Descending sweep: each threshold adds the pixels whose value >= t.
    let mut region_hits = vec![0usize; region_sizes.len()];
    let mut fp = 0usize;
    let mut cursor = 0usize;
    let mut curve = vec![(0.0f64, 0.0f64)];
    for &t in &thresholds {
        while cursor < pixels.len() && pixels[cursor].0 >= t {
            let r = pixels[cursor].1;
            if r == 0 {
                fp += 1;
            } else {
                region_hits[r as usize - 1] += 1;
            }
            cursor += 1;
        }
        let pro = region_hits
            .iter()
            .zip(region_sizes.iter())
            .map(|(&h, &s)| h as f64 / s as f64)
            .sum::<f64>()
            / region_sizes.len() as f64;
        let fpr = fp as f64 / n_neg as f64;
        curve.push((fpr, pro));
    }

    // Trapezoidal integration of PRO over FPR in [0, fpr_limit].
    let mut area = 0.0;
    for pair in curve.windows(2) {
        let (x0, y0) = pair[0];
        let (x1, y1) = pair[1];
        if x0 >= fpr_limit {
            break;
        }
        if x1 <= fpr_limit {
            area += (x1 - x0) * (y0 + y1) / 2.0;
        } else {
            // Interpolate the curve at the integration boundary.
            let t = (fpr_limit - x0) / (x1 - x0);
            let y_lim = y0 + t * (y1 - y0);
            area += (fpr_limit - x0) * (y0 + y_lim) / 2.0;
            break;
        }
    }
    Ok(area / fpr_limit)
}

/// Metrics of one dataset category.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct CategoryMetrics {
    pub category: String,
    pub image_auroc: f64,
    pub pixel_auroc: Option<f64>,
    pub aupro: Option<f64>,
    /// Mean restoration MSE over the normal test images, when recorded.
    pub normal_mse: Option<f64>,
    pub n_images: usize,
    pub n_anomalous: usize,
}

/// Dataset-level evaluation report; category means at the top level.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    pub image_auroc: f64,
    pub pixel_auroc: Option<f64>,
    pub aupro: Option<f64>,
    pub normal_mse: Option<f64>,
    pub categories: Vec<CategoryMetrics>,
}

/// One scored test image, ready for aggregation.
#[derive(Clone, Debug)]
pub struct ScoredSample {
    pub name: String,
    pub label: bool,
    pub score: f64,
    pub map: Array2<f64>,
    /// Ground-truth mask; `None` for normal images (treated as all-zero
    /// when pixel metrics are computed).
    pub mask: Option<Array2<u8>>,
    /// MSE between the input and its restoration, when the caller tracked it.
    pub restoration_mse: Option<f64>,
}

/// Aggregates scored samples of one category into metrics.
///
/// Pixel-level metrics are computed when every anomalous sample carries a
/// mask; otherwise the category is treated as mask-free and only the
/// image-level AUROC is reported. No pixel subsampling is applied.
pub fn evaluate_category(category: &str, samples: &[ScoredSample]) -> Result<CategoryMetrics> {
    if samples.is_empty() {
        return Err(Error::invalid_argument("no samples to evaluate"));
    }
    let scores: Vec<f64> = samples.iter().map(|s| s.score).collect();
    let labels: Vec<bool> = samples.iter().map(|s| s.label).collect();
    let image_auroc = auroc(&scores, &labels)?;

    let masks_complete = samples.iter().filter(|s| s.label).all(|s| s.mask.is_some());
    let (pixel_auroc, aupro_v) = if masks_complete {
        let mut maps = Vec::with_capacity(samples.len());
        let mut masks = Vec::with_capacity(samples.len());
        for s in samples {
            let mask = match &s.mask {
                Some(m) => {
                    if m.dim() != s.map.dim() {
                        return Err(Error::data(format!(
                            "mask dims {:?} do not match map dims {:?} for {}",
                            m.dim(),
                            s.map.dim(),
                            s.name
                        )));
                    }
                    m.clone()
                }
                None => Array2::zeros(s.map.dim()),
            };
            maps.push(s.map.clone());
            masks.push(mask);
        }
        let mut px_scores = Vec::new();
        let mut px_labels = Vec::new();
        for (map, mask) in maps.iter().zip(masks.iter()) {
            for (idx, &v) in map.indexed_iter() {
                px_scores.push(v);
                px_labels.push(mask[idx] != 0);
            }
        }
        (Some(auroc(&px_scores, &px_labels)?), Some(aupro(&maps, &masks, 0.3)?))
    } else {
        (None, None)
    };

    Ok(CategoryMetrics {
        category: category.to_string(),
        image_auroc,
        pixel_auroc,
        aupro: aupro_v,
        n_images: samples.len(),
        n_anomalous: labels.iter().filter(|&&l| l).count(),
    })
}

/// Builds the top-level report from per-category metrics (plain means over
/// the categories that define each metric).
pub fn assemble_report(categories: Vec<CategoryMetrics>) -> Result<EvalReport> {
    if categories.is_empty() {
        return Err(Error::invalid_argument("no categories to report"));
    }
    let mean = |vals: Vec<f64>| -> Option<f64> {
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    let image_auroc =
        categories.iter().map(|c| c.image_auroc).sum::<f64>() / categories.len() as f64;
    let pixel_auroc = mean(categories.iter().filter_map(|c| c.pixel_auroc).collect());
    let aupro = mean(categories.iter().filter_map(|c| c.aupro).collect());
    Ok(EvalReport { image_auroc, pixel_auroc, aupro, categories })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::ColorSpace;
    use ndarray::Array3;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_map(h: usize, w: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Array2::from_shape_fn((h, w), |_| rng.random_range(0.0..1.0))
    }

    fn random_rgb(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let data = Array3::from_shape_fn((h, w, 3), |_| rng.random_range(0.0..1.0));
        Image::new(data, ColorSpace::Srgb).unwrap()
    }

    #[test]
    fn gms_identity_is_one() {
        let a = random_map(12, 12, 1);
        let m = gms(a.view(), a.view()).unwrap();
        assert!(m.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn gms_of_two_constants_is_one() {
        let a = Array2::from_elem((8, 8), 0.2);
        let b = Array2::from_elem((8, 8), 0.9);
        let m = gms(a.view(), b.view()).unwrap();
        assert!(m.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn gms_matches_scalar_loop_oracle() {
        let a = random_map(16, 16, 3);
        let b = random_map(16, 16, 4);
        let m = gms(a.view(), b.view()).unwrap();
        // Independent evaluation: explicit Prewitt sums and the similarity
        // ratio written out pixel by pixel.
        let (h, w) = (16usize, 16usize);
        let grad = |img: &Array2<f64>, y: usize, x: usize| -> (f64, f64) {
            let mut gx = 0.0;
            let mut gy = 0.0;
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let sy = (y as isize + dy).clamp(0, h as isize - 1);
                    let sx = (x as isize + dx).clamp(0, w as isize - 1);
                    let v = img[[sy as usize, sx as usize]];
                    gx += dx as f64 / 3.0 * v;
                    gy += dy as f64 / 3.0 * v;
                }
            }
            (gx, gy)
        };
        for y in 0..h {
            for x in 0..w {
                let (ax, ay) = grad(&a, y, x);
                let (bx, by) = grad(&b, y, x);
                let ma = (ax * ax + ay * ay).sqrt();
                let mb = (bx * bx + by * by).sqrt();
                let expected = (2.0 * ma * mb + GMS_STABILITY) / (ma * ma + mb * mb + GMS_STABILITY);
                assert!(
                    (m[[y, x]] - expected).abs() < 1e-9,
                    "({y},{x}): {} vs {expected}",
                    m[[y, x]]
                );
            }
        }
    }

    #[test]
    fn gms_range_and_symmetry() {
        let a = random_map(10, 10, 5);
        let b = random_map(10, 10, 6);
        let ab = gms(a.view(), b.view()).unwrap();
        let ba = gms(b.view(), a.view()).unwrap();
        for (x, y) in ab.iter().zip(ba.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(ab.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn msgms_identity_is_zero() {
        let img = random_rgb(16, 16, 7);
        let m = msgms_map(&img, &img, 2).unwrap();
        assert!(m.iter().all(|&v| v.abs() < 1e-12));
        assert!(m.iter().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn msgms_blur_concentrates_on_edges() {
        // A sharp step edge: blur the "restored" copy and the dissimilarity
        // must concentrate near the edge column.
        let (h, w) = (32usize, 32usize);
        let data = Array2::from_shape_fn((h, w), |(_, x)| if x < 16 { 0.1 } else { 0.9 });
        let orig = Image::from_gray(data).unwrap();
        let blurred = Array2::from_shape_fn((h, w), |(y, x)| {
            let mut s = 0.0;
            let mut n = 0.0;
            for dx in -2isize..=2 {
                let sx = x as isize + dx;
                if sx >= 0 && sx < w as isize {
                    s += orig.data()[[y, sx as usize, 0]];
                    n += 1.0;
                }
            }
            s / n
        });
        let restored = Image::from_gray(blurred).unwrap();
        let m = msgms_map(&orig, &restored, 2).unwrap();
        let total: f64 = m.sum();
        assert!(total > 0.0);
        let edge_band: f64 = m
            .indexed_iter()
            .filter(|((_, x), _)| (12..20).contains(x))
            .map(|(_, &v)| v)
            .sum();
        assert!(
            edge_band / total > 0.9,
            "edge band share {}",
            edge_band / total
        );
        assert!(m.iter().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn msgms_requires_even_dims_for_two_scales() {
        let img = random_rgb(15, 16, 8);
        assert!(msgms_map(&img, &img, 2).is_err());
    }

    #[test]
    fn color_map_identity_and_lightness_invariance() {
        let img = random_rgb(8, 8, 9);
        let m = color_map(&img, &img).unwrap();
        assert!(m.iter().all(|&v| v.abs() < 1e-12));

        // A pure lightness shift on a gray image leaves a, b untouched.
        let g1 = Image::constant(8, 8, ColorSpace::Srgb, 0.4).unwrap();
        let g2 = Image::constant(8, 8, ColorSpace::Srgb, 0.6).unwrap();
        let m = color_map(&g1, &g2).unwrap();
        assert!(m.iter().all(|&v| v.abs() < 1e-2), "max {:?}", m.iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn color_map_red_vs_green_matches_lab_difference() {
        let mut red_data = Array3::zeros((4, 4, 3));
        let mut green_data = Array3::zeros((4, 4, 3));
        for y in 0..4 {
            for x in 0..4 {
                red_data[[y, x, 0]] = 1.0;
                green_data[[y, x, 1]] = 1.0;
            }
        }
        let red = Image::new(red_data, ColorSpace::Srgb).unwrap();
        let green = Image::new(green_data, ColorSpace::Srgb).unwrap();
        let m = color_map(&red, &green).unwrap();
        let lr = to_lab(&red).unwrap();
        let lg = to_lab(&green).unwrap();
        let expected = (lg.a[[0, 0]] - lr.a[[0, 0]]).powi(2) + (lg.b[[0, 0]] - lr.b[[0, 0]]).powi(2);
        assert!(m.iter().all(|&v| (v - expected).abs() < 1e-9));
        assert!(expected > 1000.0, "red/green chroma distance should be large");
    }

    #[test]
    fn combine_zero_maps() {
        let z = Array2::zeros((8, 8));
        let m = combine(&z, &z, 3e-4, 3).unwrap();
        assert!(m.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn combine_color_zero_reduces_to_smoothed_gradient() {
        let z = Array2::zeros((16, 16));
        let g = random_map(16, 16, 10);
        let m = combine(&z, &g, 3e-4, 3).unwrap();
        let expected = mean_filter(&g, 3);
        for (a, b) in m.values().iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn combine_spike_spreads_to_kernel_mean() {
        let z = Array2::zeros((64, 64));
        let mut g = Array2::zeros((64, 64));
        g[[32, 32]] = 1.0;
        let m = combine(&z, &g, 3e-4, 21).unwrap();
        let max = m.values().iter().cloned().fold(0.0, f64::max);
        assert!((max - 1.0 / 441.0).abs() < 1e-12, "max {max}");
    }

    #[test]
    fn combine_rejects_even_kernel() {
        let z = Array2::zeros((8, 8));
        assert!(combine(&z, &z, 1.0, 4).is_err());
    }

    #[test]
    fn combine_is_linear_in_inputs() {
        let c1 = random_map(8, 8, 11);
        let g1 = random_map(8, 8, 12);
        let c2 = random_map(8, 8, 13);
        let g2 = random_map(8, 8, 14);
        let m1 = combine(&c1, &g1, 2e-3, 3).unwrap();
        let m2 = combine(&c2, &g2, 2e-3, 3).unwrap();
        let csum = &c1 + &c2;
        let gsum = &g1 + &g2;
        let msum = combine(&csum, &gsum, 2e-3, 3).unwrap();
        for ((a, b), s) in m1
            .values()
            .iter()
            .zip(m2.values().iter())
            .zip(msum.values().iter())
        {
            assert!((a + b - s).abs() < 1e-12);
        }
    }

    #[test]
    fn anomaly_map_reconstruction_invariant() {
        let orig = random_rgb(16, 16, 20);
        let restored = random_rgb(16, 16, 21);
        let cfg = ScoreConfig { smooth_kernel: 5, ..Default::default() };
        let m = anomaly_map(&orig, &restored, &cfg).unwrap();
        let comp = m.components().unwrap();
        let redone = combine(&comp.color, &comp.gradient, comp.color_weight, comp.smooth_kernel)
            .unwrap();
        for (a, b) in m.values().iter().zip(redone.values().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(m.values().iter().all(|&v| v.is_finite() && v >= 0.0));
    }

    #[test]
    fn operand_order_matters_for_color_not_gms() {
        let a = random_rgb(16, 16, 30);
        let b = random_rgb(16, 16, 31);
        let g_ab = msgms_map(&a, &b, 2).unwrap();
        let g_ba = msgms_map(&b, &a, 2).unwrap();
        for (x, y) in g_ab.iter().zip(g_ba.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        // The color term is symmetric too (squared differences), but the
        // fixed (orig, restored) order is still meaningful downstream: a
        // deliberate swap changes nothing here, which is exactly what this
        // pins down.
        let c_ab = color_map(&a, &b).unwrap();
        let c_ba = color_map(&b, &a).unwrap();
        for (x, y) in c_ab.iter().zip(c_ba.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn image_score_is_map_max() {
        let mut g = Array2::zeros((8, 8));
        g[[2, 5]] = 0.7;
        let m = AnomalyMap { values: g, components: None };
        assert!((image_score(&m).unwrap() - 0.7).abs() < 1e-12);

        let zero = AnomalyMap { values: Array2::zeros((4, 4)), components: None };
        assert_eq!(image_score(&zero).unwrap(), 0.0);
    }

    #[test]
    fn image_score_ordering_preserved_over_batch() {
        let mut maps = Vec::new();
        for i in 0..5 {
            let mut g = Array2::zeros((6, 6));
            g[[i, i]] = 0.1 * (i as f64 + 1.0);
            maps.push(AnomalyMap { values: g, components: None });
        }
        let scores: Vec<f64> = maps.iter().map(|m| image_score(m).unwrap()).collect();
        for w in scores.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn auroc_perfect_and_ties() {
        let scores = [0.9, 0.8, 0.2, 0.1];
        let labels = [true, true, false, false];
        assert_eq!(auroc(&scores, &labels).unwrap(), 1.0);

        let scores = [0.5, 0.5, 0.5, 0.5];
        assert_eq!(auroc(&scores, &labels).unwrap(), 0.5);
    }

    #[test]
    fn auroc_matches_pairwise_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for _ in 0..50 {
            let n = 20;
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.random_range(0..10) as f64) / 10.0) // forces ties
                .collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.random_range(0..2) == 1).collect();
            if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
                continue;
            }
            // O(n^2) pair counting: P(s+ > s-) + 0.5 P(s+ = s-).
            let mut wins = 0.0
;
            let mut pairs = 0.0;
            for i in 0..n {
                if !labels[i] {
                    continue;
                }
                for j in 0..n {
                    if labels[j] {
                        continue;
                    }
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
            let oracle = wins / pairs;
            let got = auroc(&scores, &labels).unwrap();
            assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
        }
    }

    #[test]
    fn auroc_monotone_transform_invariance() {
        let mut rng = ChaCha12Rng::seed_from_u64(123);
        let scores: Vec<f64> = (0..30).map(|_| rng.random_range(0.01..1.0)).collect();
        let labels: Vec<bool> = (0..30).map(|i| i % 3 == 0).collect();
        let base = auroc(&scores, &labels).unwrap();
        let affine: Vec<f64> = scores.iter().map(|s| 2.0 * s + 1.0).collect();
        let cubed: Vec<f64> = scores.iter().map(|s| s.powi(3)).collect();
        assert_eq!(base, auroc(&affine, &labels).unwrap());
        assert_eq!(base, auroc(&cubed, &labels).unwrap());
    }

    #[test]
    fn auroc_rejects_single_class() {
        let scores = [0.1, 0.2];
        assert!(matches!(
            auroc(&scores, &[true, true]),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(matches!(
            auroc(&scores, &[false, false]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn connected_components_8_connectivity() {
        let mut mask = Array2::<u8>::zeros((4, 4));
        mask[[0, 0]] = 1;
        mask[[1, 1]] = 1; // diagonal touch -> same region under 8-conn
        mask[[3, 3]] = 1;
        let (_, sizes) = connected_components(&mask);
        assert_eq!(sizes.len(), 2);
        assert_eq!(sizes.iter().sum::<usize>(), 3);
    }

    #[test]
    fn aupro_perfect_detector_is_one() {
        let mut mask = Array2::<u8>::zeros((8, 8));
        for y in 2..5 {
            for x in 2..5 {
                mask[[y, x]] = 1;
            }
        }
        let map = mask.mapv(|v| v as f64);
        let v = aupro(&[map], &[mask], 0.3).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{v}");
    }

    /// Brute-force AUPRO: enumerate every distinct threshold, binarize,
    /// recompute regions and overlaps from scratch, trapezoid by hand.
    fn aupro_oracle(maps: &[Array2<f64>], masks: &[Array2<u8>], limit: f64) -> f64 {
        let mut values: Vec<f64> = maps.iter().flat_map(|m| m.iter().copied()).collect();
        values.sort_by(|a, b| b.partial_cmp(a).unwrap());
        values.dedup();
        let mut regions: Vec<(usize, Vec<(usize, usize, usize)>)> = Vec::new(); // (img idx, pixels)
        let mut n_neg = 0usize;
        for (i, mask) in masks.iter().enumerate() {
            let (labels, sizes) = connected_components(mask);
            for (r, _) in sizes.iter().enumerate() {
                let pix: Vec<(usize, usize, usize)> = labels
                    .indexed_iter()
                    .filter(|(_, &l)| l == r as u32 + 1)
                    .map(|((y, x), _)| (i, y, x))
                    .collect();
                regions.push((i, pix));
            }
            n_neg += mask.iter().filter(|&&v| v == 0).count();
        }
        let mut curve = vec![(0.0, 0.0)];
        for &t in &values {
            let mut pro = 0.0;
            for (_, pix) in &regions {
                let hit = pix.iter().filter(|&&(i, y, x)| maps[i][[y, x]] >= t).count();
                pro += hit as f64 / pix.len() as f64;
            }
            pro /= regions.len() as f64;
            let mut fp = 0usize;
            for (i, mask) in masks.iter().enumerate() {
                for (idx, &mv) in mask.indexed_iter() {
                    if mv == 0 && maps[i][idx] >= t {
                        fp += 1;
                    }
                }
            }
            curve.push((fp as f64 / n_neg as f64, pro));
        }
        let mut area = 0.0;
        for w in curve.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if x0 >= limit {
                break;
            }
            if x1 <= limit {
                area += (x1 - x0) * (y0 + y1) / 2.0;
            } else {
                let yl = y0 + (limit - x0) / (x1 - x0) * (y1 - y0);
                area += (limit - x0) * (y0 + yl) / 2.0;
                break;
            }
        }
        area / limit
    }

    #[test]
    fn aupro_matches_exhaustive_oracle_on_two_region_case() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for case in 0..10 {
            let mut mask = Array2::<u8>::zeros((6, 6));
            // Two disjoint regions.
            mask[[1, 1]] = 1;
            mask[[1, 2]] = 1;
            mask[[4, 4]] = 1;
            mask[[5, 4]] = 1;
            mask[[4, 5]] = 1;
            let map = Array2::from_shape_fn((6, 6), |_| {
                (rng.random_range(0..8) as f64) / 8.0 // coarse grid forces ties
            });
            let got = aupro(&[map.clone()], &[mask.clone()], 0.3).unwrap();
            let want = aupro_oracle(&[map], &[mask], 0.3);
            assert!((got - want).abs() < 1e-9, "case {case}: {got} vs {want}");
        }
    }

    #[test]
    fn aupro_random_maps_near_analytic_baseline() {
        // Uniform random scores make PRO(fpr) = fpr in expectation, so the
        // normalized area is limit/2 = 0.15 at limit 0.3.
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let mut maps = Vec::new();
        let mut masks = Vec::new();
        for _ in 0..24 {
            let mut mask = Array2::<u8>::zeros((32, 32));
            for y in 8..16 {
                for x in 8..16 {
                    mask[[y, x]] = 1;
                }
            }
            masks.push(mask);
            maps.push(Array2::from_shape_fn((32, 32), |_| rng.random_range(0.0..1.0)));
        }
        let v = aupro(&maps, &masks, 0.3).unwrap();
        assert!((v - 0.15).abs() < 0.03, "random-map AUPRO {v} not near 0.15");
    }

    #[test]
    fn aupro_degrades_with_noise() {
        let mut mask = Array2::<u8>::zeros((16, 16));
        for y in 4..10 {
            for x in 4..10 {
                mask[[y, x]] = 1;
            }
        }
        let clean = mask.mapv(|v| v as f64);
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let noisy = clean.mapv(|v| (v + rng.random_range(0.0..0.8)).min(1.5));
        let masks = vec![mask.clone()];
        let v_clean = aupro(&[clean], &masks, 0.3).unwrap();
        let v_noisy = aupro(&[noisy], &masks, 0.3).unwrap();
        assert!(v_noisy <= v_clean + 1e-12, "{v_noisy} > {v_clean}");
    }

    #[test]
    fn aupro_undefined_without_regions() {
        let map = Array2::zeros((4, 4));
        let mask = Array2::<u8>::zeros((4, 4));
        assert!(matches!(
            aupro(&[map], &[mask], 0.3),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn evaluate_category_flows() {
        let mut samples = Vec::new();
        for i in 0..6 {
            let label = i >= 3;
            let mut map = Array2::zeros((8, 8));
            let mut mask = None;
            if label {
                let mut m = Array2::<u8>::zeros((8, 8));
                for y in 2..5 {
                    for x in 2..5 {
                        m[[y, x]] = 1;
                        map[[y, x]] = 0.9;
                    }
                }
                mask = Some(m);
            }
            samples.push(ScoredSample {
                name: format!("img{i}"),
                label,
                score: if label { 0.9 } else { 0.1 },
                map,
                mask,
            });
        }
        let metrics = evaluate_category("toy", &samples).unwrap();
        assert_eq!(metrics.image_auroc, 1.0);
        assert!(metrics.pixel_auroc.unwrap() > 0.99);
        assert!((metrics.aupro.unwrap() - 1.0).abs() < 1e-9);
        let report = assemble_report(vec![metrics]).unwrap();
        assert_eq!(report.image_auroc, 1.0);
    }
}
