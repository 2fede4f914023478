//! Training-time anomaly synthesis.
//!
//! Two corruptions, used only during training:
//! - Perlin-masked texture blending: a thresholded, randomly rotated Perlin
//!   noise field selects the region; a texture (external file or a
//!   transformed crop of the image itself) is alpha-blended in.
//! - Large CutPaste: a rectangle covering more than half of the image is
//!   copied from the image onto itself at a different location, forcing the
//!   restoration to rely on global semantics.
//!
//! Everything is a pure function of `(inputs, seed)`; parallel data workers
//! derive per-sample seeds with [`sample_seed`].

use ndarray::{Array2, Array3};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::imagecore::{resize, ColorSpace, Image};

/// One training triple: the corrupted input, the clean target, and the
/// binary mask of corrupted pixels.
#[derive(Clone, Debug)]
pub struct SyntheticSample {
    pub corrupted: Image,
    pub clean: Image,
    pub mask: Array2<u8>,
}

impl SyntheticSample {
    fn passthrough(clean: Image) -> Self {
        let mask = Array2::zeros((clean.height(), clean.width()));
        SyntheticSample { corrupted: clean.clone(), clean, mask }
    }

    pub fn mask_area_fraction(&self) -> f64 {
        let n = self.mask.len();
        self.mask.iter().filter(|&&v| v != 0).count() as f64 / n as f64
    }
}

/// Where blend textures come from.
#[derive(Clone, Debug)]
pub enum TextureSource {
    /// A flat directory of decodable images.
    ExternalDir { files: Vec<PathBuf> },
    /// Crops of the training image itself; no extra data is read.
    Internal,
}

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "bmp", "tif"];

impl TextureSource {
    /// Scans a directory for texture images.
    pub fn external(dir: impl AsRef<Path>) -> Result<Self> {
        let mut files = Vec::new();
        for entry in std::fs::read_dir(dir.as_ref()).map_err(|e| {
            Error::config(format!("texture directory {}: {e}", dir.as_ref().display()))
        })? {
            let path = entry?.path();
            if let Some(ext) = path.extension().and_then(|e| e.to_str()) {
                if IMAGE_EXTENSIONS.contains(&ext.to_ascii_lowercase().as_str()) {
                    files.push(path);
                }
            }
        }
        files.sort();
        if files.is_empty() {
            return Err(Error::config(format!(
                "texture directory {} contains no decodable images",
                dir.as_ref().display()
            )));
        }
        Ok(TextureSource::ExternalDir { files })
    }
}

/// Synthesis parameters. The defaults are recorded here once; tests may
/// push them to degenerate corners (e.g. an all-ones mask).
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SynthConfig {
    /// Blend opacity range for Perlin anomalies.
    pub beta_range: (f64, f64),
    /// Per-axis Perlin lattice frequencies sampled uniformly.
    pub perlin_freqs: Vec<u32>,
    /// Mask threshold applied to the min-max-normalized noise field.
    pub perlin_threshold: f64,
    /// Accepted mask area fraction (open interval); out-of-band fields are
    /// redrawn.
    pub mask_area_band: (f64, f64),
    /// Redraw attempts before keeping the closest field.
    pub max_mask_retries: usize,
    /// CutPaste side-length fractions; both > sqrt(0.5) so the pasted area
    /// always exceeds half the image.
    pub cutpaste_side_range: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            beta_range: (0.2, 1.0),
            perlin_freqs: vec![2, 4, 8, 16],
            perlin_threshold: 0.5,
            mask_area_band: (0.001, 0.5),
            max_mask_retries: 25,
            cutpaste_side_range: (0.72, 0.95),
        }
    }
}

/// Mixing probabilities for [`corrupt_batch`].
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct CorruptionPolicy {
    pub p_perlin: f64,
    pub p_cutpaste: f64,
    pub p_clean: f64,
}

impl Default for CorruptionPolicy {
    fn default() -> Self {
        CorruptionPolicy { p_perlin: 0.5, p_cutpaste: 0.25, p_clean: 0.25 }
    }
}

impl CorruptionPolicy {
    pub fn validate(&self) -> Result<()> {
        let sum = self.p_perlin + self.p_cutpaste + self.p_clean;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "corruption probabilities must sum to 1, got {sum}"
            )));
        }
        if self.p_perlin < 0.0 || self.p_cutpaste < 0.0 || self.p_clean < 0.0 {
            return Err(Error::config("corruption probabilities must be non-negative"));
        }
        Ok(())
    }
}

/// Derives a per-sample seed from a base seed and sample index
/// (splitmix64 over the combined word).
pub fn sample_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Periodic 2D Perlin field sampled at arbitrary (possibly rotated)
/// coordinates measured in lattice cells.
struct PerlinField {
    grad: Vec<(f64, f64)>,
    fx: usize,
    fy: usize,
}

impl PerlinField {
    fn new(fx: u32, fy: u32, rng: &mut ChaCha12Rng) -> Self {
        let (fx, fy) = (fx as usize, fy as usize);
        let grad = (0..fx * fy)
            .map(|_| {
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                (angle.cos(), angle.sin())
            })
            .collect();
        PerlinField { grad, fx, fy }
    }

    fn gradient(&self, cx: i64, cy: i64) -> (f64, f64) {
        let x = cx.rem_euclid(self.fx as i64) as usize;
        let y = cy.rem_euclid(self.fy as i64) as usize;
        self.grad[y * self.fx + x]
    }

    fn sample(&self, x: f64, y: f64) -> f64 {
        let fade = |t: f64| t * t * t * (t * (t * 6.0 - 15.0) + 10.0);
        let x0 = x.floor();
        let y0 = y.floor();
        let (tx, ty) = (x - x0, y - y0);
        let mut corners = [0.0f64; 4];
        for (i, (dy, dx)) in [(0i64, 0i64), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
            let g = self.gradient(x0 as i64 + dx, y0 as i64 + dy);
            let ox = tx - *dx as f64;
            let oy = ty - *dy as f64;
            corners[i] = g.0 * ox + g.1 * oy;
        }
        let u = fade(tx);
        let v = fade(ty);
        let top = corners[0] + u * (corners[1] - corners[0]);
        let bottom = corners[2] + u * (corners[3] - corners[2]);
        top + v * (bottom - top)
    }
}

/// Generates a thresholded Perlin mask: random per-axis frequencies, a
/// random field rotation (applied by sampling the periodic field at rotated
/// coordinates), min-max normalization, then `value > threshold`.
fn perlin_mask(h: usize, w: usize, cfg: &SynthConfig, rng: &mut ChaCha12Rng) -> Array2<u8> {
    let fx = *cfg.perlin_freqs.choose(rng).expect("non-empty freq set");
    let fy = *cfg.perlin_freqs.choose(rng).expect("non-empty freq set");
    let field = PerlinField::new(fx, fy, rng);
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let (sin, cos) = angle.sin_cos();
    let (ch, cw) = (h as f64 / 2.0, w as f64 / 2.0);
    let mut noise = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let dy = y as f64 - ch;
            let dx = x as f64 - cw;
            let ry = ch + dx * sin + dy * cos;
            let rx = cw + dx * cos - dy * sin;
            noise[[y, x]] = field.sample(rx / w as f64 * fx as f64, ry / h as f64 * fy as f64);
        }
    }
    let min = noise.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = noise.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = (max - min).max(1e-12);
    noise.mapv(|v| if (v - min) / range > cfg.perlin_threshold { 1u8 } else { 0u8 })
}

fn rot90(data: &Array3<f64>, quarter_turns: usize) -> Array3<f64> {
    let (h, w, c) = data.dim();
    match quarter_turns % 4 {
        0 => data.clone(),
        1 => Array3::from_shape_fn((w, h, c), |(y, x, ch)| data[[h - 1 - x, y, ch]]),
        2 => Array3::from_shape_fn((h, w, c), |(y, x, ch)| data[[h - 1 - y, w - 1 - x, ch]]),
        _ => Array3::from_shape_fn((w, h, c), |(y, x, ch)| data[[x, w - 1 - y, ch]]),
    }
}

fn mirror(data: &Array3<f64>) -> Array3<f64> {
    let (h, w, c) = data.dim();
    Array3::from_shape_fn((h, w, c), |(y, x, ch)| data[[y, w - 1 - x, ch]])
}

/// Histogram equalization applied jointly over all channels.
fn equalize(data: &Array3<f64>) -> Array3<f64> {
    let n = data.len();
    let mut hist = [0usize; 256];
    for &v in data.iter() {
        hist[((v * 255.0).round() as usize).min(255)] += 1;
    }
    let mut cdf = [0.0f64; 256];
    let mut acc = 0usize;
    for (i, &c) in hist.iter().enumerate() {
        acc += c;
        cdf[i] = acc as f64 / n as f64;
    }
    data.mapv(|v| cdf[((v * 255.0).round() as usize).min(255)])
}

/// Random photometric/geometric augmentations shared by the texture paths.
fn augment_texture(data: Array3<f64>, rng: &mut ChaCha12Rng) -> Array3<f64> {
    let mut out = data;
    if rng.random_bool(0.5) {
        let delta = rng.random_range(-0.1..0.1);
        out = out.mapv(|v| (v + delta).clamp(0.0, 1.0));
    }
    if rng.random_bool(0.5) {
        let factor = rng.random_range(0.7..1.3);
        let mean = out.mean().unwrap_or(0.5);
        out = out.mapv(|v| (mean + factor * (v - mean)).clamp(0.0, 1.0));
    }
    if rng.random_bool(0.2) {
        out = equalize(&out);
    }
    let turns = rng.random_range(0..4usize);
    if turns > 0 {
        out = rot90(&out, turns);
    }
    if rng.random_bool(0.5) {
        out = mirror(&out);
    }
    out
}

/// Draws a texture image matching `dims` from the source.
fn draw_texture(
    clean: &Image,
    source: &TextureSource,
    dims: (usize, usize),
    rng: &mut ChaCha12Rng,
) -> Result<Array3<f64>> {
    let (h, w) = dims;
    let base = match source {
        TextureSource::ExternalDir { files } => {
            if files.is_empty() {
                return Err(Error::config("texture source has no files"));
            }
            let path = files.choose(rng).unwrap();
            let img = Image::open(path)?;
            img.into_data()
        }
        TextureSource::Internal => {
            // A random crop of the image itself, rescaled to full size.
            let (ih, iw, _) = clean.data().dim();
            let scale = rng.random_range(0.5..0.9);
            let ch = ((ih as f64 * scale) as usize).max(1);
            let cw = ((iw as f64 * scale) as usize).max(1);
            let y0 = rng.random_range(0..=ih - ch);
            let x0 = rng.random_range(0..=iw - cw);
            clean
                .data()
                .slice(ndarray::s![y0..y0 + ch, x0..x0 + cw, ..])
                .to_owned()
        }
    };
    let augmented = augment_texture(base, rng);
    let img = Image::new(augmented, ColorSpace::Srgb)
        .or_else(|_| {
            // Rotations may swap dims; re-wrap via the gray path if the
            // channel count is off (should not happen for sRGB inputs).
            Err(Error::data("texture is not a valid sRGB image"))
        })?;
    Ok(resize(&img, h, w)?.into_data())
}

/// Perlin-masked texture blending: `corrupted = (1-beta)*clean +
/// beta*texture` on masked pixels. Pixels outside the mask are copied
/// bit-exactly.
pub fn perlin_anomaly(
    clean: &Image,
    source: &TextureSource,
    cfg: &SynthConfig,
    seed: u64,
) -> Result<SyntheticSample> {
    if clean.color_space() != ColorSpace::Srgb {
        return Err(Error::invalid_argument("perlin corruption expects sRGB input"));
    }
    if cfg.perlin_freqs.is_empty() {
        return Err(Error::config("perlin frequency set is empty"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let (h, w, _) = clean.data().dim();
    let (lo, hi) = cfg.mask_area_band;
    let mut mask = perlin_mask(h, w, cfg, &mut rng);
    let mut best = (f64::INFINITY, mask.clone());
    for _ in 0..cfg.max_mask_retries {
        let frac = mask.iter().filter(|&&v| v != 0).count() as f64 / (h * w) as f64;
        if frac > lo && frac < hi {
            best = (0.0, mask.clone());
            break;
        }
        let dist = if frac <= lo { lo - frac } else { frac - hi };
        if dist < best.0 {
            best = (dist, mask.clone());
        }
        mask = perlin_mask(h, w, cfg, &mut rng);
    }
    let mask = best.1;

    let beta = if cfg.beta_range.0 == cfg.beta_range.1 {
        cfg.beta_range.0
    } else {
        rng.random_range(cfg.beta_range.0..cfg.beta_range.1)
    };
    let texture = draw_texture(clean, source, (h, w), &mut rng)?;

    let mut corrupted = clean.data().clone();
    for y in 0..h {
        for x in 0..w {
            if mask[[y, x]] != 0 {
                for c in 0..3 {
                    let v = (1.0 - beta) * clean.data()[[y, x, c]] + beta * texture[[y, x, c]];
                    corrupted[[y, x, c]] = v.clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok(SyntheticSample {
        corrupted: Image::new(corrupted, ColorSpace::Srgb)?,
        clean: clean.clone(),
        mask,
    })
}

/// Large CutPaste: copies a rectangle covering more than half the image
/// from a random location onto a random location, with a random
/// shape-preserving flip/rotation.
pub fn cutpaste_large(clean: &Image, cfg: &SynthConfig, seed: u64) -> Result<SyntheticSample> {
    if clean.color_space() != ColorSpace::Srgb {
        return Err(Error::invalid_argument("cutpaste expects sRGB input"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let (h, w, _) = clean.data().dim();
    let (lo, hi) = cfg.cutpaste_side_range;
    let ph = ((h as f64 * rng.random_range(lo..hi)).round() as usize).clamp(1, h);
    let pw = ((w as f64 * rng.random_range(lo..hi)).round() as usize).clamp(1, w);
    let sy = rng.random_range(0..=h - ph);
    let sx = rng.random_range(0..=w - pw);
    let dy = rng.random_range(0..=h - ph);
    let dx = rng.random_range(0..=w - pw);
    let patch = clean
        .data()
        .slice(ndarray::s![sy..sy + ph, sx..sx + pw, ..])
        .to_owned();
    // Shape-preserving transforms; quarter rotations only for square patches.
    let patch = if ph == pw {
        rot90(&patch, rng.random_range(0..4usize))
    } else {
        match rng.random_range(0..3usize) {
            0 => patch,
            1 => rot90(&patch, 2),
            _ => mirror(&patch),
        }
    };
    let mut corrupted = clean.data().clone();
    let mut mask = Array2::<u8>::zeros((h, w));
    for y in 0..ph {
        for x in 0..pw {
            for c in 0..3 {
                corrupted[[dy + y, dx + x, c]] = patch[[y, x, c]];
            }
            mask[[dy + y, dx + x]] = 1;
        }
    }
    Ok(SyntheticSample {
        corrupted: Image::new(corrupted, ColorSpace::Srgb)?,
        clean: clean.clone(),
        mask,
    })
}

/// Applies one corruption (or none) to a single image according to the
/// policy. The policy must already be validated.
pub fn corrupt_one(
    clean: &Image,
    policy: &CorruptionPolicy,
    source: &TextureSource,
    cfg: &SynthConfig,
    seed: u64,
) -> Result<SyntheticSample> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let u: f64 = rng.random_range(0.0..1.0);
    if u < policy.p_perlin {
        perlin_anomaly(clean, source, cfg, sample_seed(seed, 1))
    } else if u < policy.p_perlin + policy.p_cutpaste {
        cutpaste_large(clean, cfg, sample_seed(seed, 2))
    } else {
        Ok(SyntheticSample::passthrough(clean.clone()))
    }
}

/// Applies one corruption (or none) per image, independently, according to
/// the policy.
pub fn corrupt_batch(
    cleans: &[Image],
    policy: &CorruptionPolicy,
    source: &TextureSource,
    cfg: &SynthConfig,
    base_seed: u64,
) -> Result<Vec<SyntheticSample>> {
    policy.validate()?;
    cleans
        .iter()
        .enumerate()
        .map(|(i, clean)| corrupt_one(clean, policy, source, cfg, sample_seed(base_seed, i as u64)))
        .collect()
}
