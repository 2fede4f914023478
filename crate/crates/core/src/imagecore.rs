//! Image container, color-space conversion, resizing, and pyramids.
//!
//! Images are stored channels-last (`H x W x C`) as `f64` in `[0, 1]`.
//! 8-bit files are divided by 255 exactly at ingestion. Everything further
//! down the pipeline (filtering, restoration targets, scoring) consumes this
//! one representation.

use ndarray::{s, Array2, Array3, ArrayView2};
use std::path::Path;

use crate::error::{Error, Result};

/// Luma weights used whenever a color image is reduced to one channel.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Color space tag carried by [`Image`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorSpace {
    /// 3-channel sRGB, values in `[0, 1]`.
    Srgb,
    /// Single channel, values in `[0, 1]`.
    Gray,
}

/// An image: `H x W x C` array of finite values in `[0, 1]`.
#[derive(Clone, Debug)]
pub struct Image {
    data: Array3<f64>,
    color_space: ColorSpace,
}

impl Image {
    /// Wraps raw data after validating dimensions, finiteness and range.
    pub fn new(data: Array3<f64>, color_space: ColorSpace) -> Result<Self> {
        let (h, w, c) = data.dim();
        if h == 0 || w == 0 {
            return Err(Error::invalid_argument(format!(
                "image dimensions must be at least 1x1, got {h}x{w}"
            )));
        }
        let expected_c = match color_space {
            ColorSpace::Srgb => 3,
            ColorSpace::Gray => 1,
        };
        if c != expected_c {
            return Err(Error::invalid_argument(format!(
                "{color_space:?} image must have {expected_c} channels, got {c}"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_argument("image contains non-finite values"));
        }
        if data.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::invalid_argument(
                "image values must lie in [0, 1]",
            ));
        }
        Ok(Image { data, color_space })
    }

    pub fn from_gray(data: Array2<f64>) -> Result<Self> {
        let (h, w) = data.dim();
        let data = data
            .into_shape_with_order((h, w, 1))
            .map_err(|e| Error::invalid_argument(e.to_string()))?;
        Image::new(data, ColorSpace::Gray)
    }

    pub fn constant(h: usize, w: usize, color_space: ColorSpace, value: f64) -> Result<Self> {
        let c = match color_space {
            ColorSpace::Srgb => 3,
            ColorSpace::Gray => 1,
        };
        Image::new(Array3::from_elem((h, w, c), value), color_space)
    }

    /// Decodes a PNG/JPEG/BMP file into an sRGB image (`u8 / 255`).
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let rgb = image::open(path.as_ref())?.into_rgb8();
        let (w, h) = rgb.dimensions();
        let mut data = Array3::zeros((h as usize, w as usize, 3));
        for (x, y, px) in rgb.enumerate_pixels() {
            for c in 0..3 {
                data[[y as usize, x as usize, c]] = px.0[c] as f64 / 255.0;
            }
        }
        Image::new(data, ColorSpace::Srgb)
    }

    /// Encodes to an 8-bit file; format chosen from the extension.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let (h, w, _) = self.data.dim();
        let quantize = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        match self.color_space {
            ColorSpace::Srgb => {
                let mut buf = image::RgbImage::new(w as u32, h as u32);
                for (x, y, px) in buf.enumerate_pixels_mut() {
                    for c in 0..3 {
                        px.0[c] = quantize(self.data[[y as usize, x as usize, c]]);
                    }
                }
                buf.save(path.as_ref())?;
            }
            ColorSpace::Gray => {
                let mut buf = image::GrayImage::new(w as u32, h as u32);
                for (x, y, px) in buf.enumerate_pixels_mut() {
                    px.0[0] = quantize(self.data[[y as usize, x as usize, 0]]);
                }
                buf.save(path.as_ref())?;
            }
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn channels(&self) -> usize {
        self.data.dim().2
    }

    pub fn color_space(&self) -> ColorSpace {
        self.color_space
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> ArrayView2<'_, f64> {
        self.data.slice(s![.., .., c])
    }

    pub fn mean(&self) -> f64 {
        self.data.mean().unwrap_or(0.0)
    }

    /// Reduces to a single channel with the standard luma weights.
    /// Gray images pass through unchanged.
    pub fn to_gray(&self) -> Image {
        match self.color_space {
            ColorSpace::Gray => self.clone(),
            ColorSpace::Srgb => {
                let (h, w, _) = self.data.dim();
                let mut out = Array2::zeros((h, w));
                for y in 0..h {
                    for x in 0..w {
                        let mut v = 0.0;
                        for c in 0..3 {
                            v += LUMA_WEIGHTS[c] * self.data[[y, x, c]];
                        }
                        out[[y, x]] = v.clamp(0.0, 1.0);
                    }
                }
                Image::from_gray(out).expect("luma of a valid image is valid")
            }
        }
    }
}

/// CIELAB planes of an sRGB image (D65 white point).
///
/// `l` is lightness in `[0, 100]`; `a` and `b` are the green-red and
/// blue-yellow opponent axes, roughly in `[-128, 127]`.
#[derive(Clone, Debug)]
pub struct LabImage {
    pub l: Array2<f64>,
    pub a: Array2<f64>,
    pub b: Array2<f64>,
}

// sRGB -> XYZ matrix (linear light, D65).
const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];
const D65_WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// Converts an sRGB image to CIELAB under the D65 white point.
pub fn to_lab(img: &Image) -> Result<LabImage> {
    if img.color_space() != ColorSpace::Srgb {
        return Err(Error::invalid_argument(
            "CIELAB conversion expects an sRGB image",
        ));
    }
    let (h, w, _) = img.data().dim();
    let mut l = Array2::zeros((h, w));
    let mut a = Array2::zeros((h, w));
    let mut b = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let rgb = [
                srgb_to_linear(img.data()[[y, x, 0]]),
                srgb_to_linear(img.data()[[y, x, 1]]),
                srgb_to_linear(img.data()[[y, x, 2]]),
            ];
            let mut xyz = [0.0f64; 3];
            for (i, row) in SRGB_TO_XYZ.iter().enumerate() {
                xyz[i] = row[0] * rgb[0] + row[1] * rgb[1] + row[2] * rgb[2];
            }
            let fx = lab_f(xyz[0] / D65_WHITE[0]);
            let fy = lab_f(xyz[1] / D65_WHITE[1]);
            let fz = lab_f(xyz[2] / D65_WHITE[2]);
            l[[y, x]] = 116.0 * fy - 16.0;
            a[[y, x]] = 500.0 * (fx - fy);
            b[[y, x]] = 200.0 * (fy - fz);
        }
    }
    Ok(LabImage { l, a, b })
}

/// Bilinear resize with half-pixel-center sampling and edge clamping.
/// Output values are clamped to `[0, 1]`.
pub fn resize(img: &Image, h: usize, w: usize) -> Result<Image> {
    if h == 0 || w == 0 {
        return Err(Error::invalid_argument(
            "resize target dimensions must be positive",
        ));
    }
    let (src_h, src_w, c) = img.data().dim();
    if (src_h, src_w) == (h, w) {
        return Ok(img.clone());
    }
    let mut out = Array3::zeros((h, w, c));
    let scale_y = src_h as f64 / h as f64;
    let scale_x = src_w as f64 / w as f64;
    for oy in 0..h {
        let sy = ((oy as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (src_h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(src_h - 1);
        let ty = sy - y0 as f64;
        for ox in 0..w {
            let sx = ((ox as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (src_w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(src_w - 1);
            let tx = sx - x0 as f64;
            for ch in 0..c {
                let p00 = img.data()[[y0, x0, ch]];
                let p01 = img.data()[[y0, x1, ch]];
                let p10 = img.data()[[y1, x0, ch]];
                let p11 = img.data()[[y1, x1, ch]];
                let top = p00 + (p01 - p00) * tx;
                let bottom = p10 + (p11 - p10) * tx;
                out[[oy, ox, ch]] = (top + (bottom - top) * ty).clamp(0.0, 1.0);
            }
        }
    }
    Image::new(out, img.color_space())
}

/// 2x2 mean pooling of one channel. Dimensions must be even.
pub(crate) fn downsample2(ch: ArrayView2<'_, f64>) -> Array2<f64> {
    let (h, w) = ch.dim();
    debug_assert!(h % 2 == 0 && w % 2 == 0);
    Array2::from_shape_fn((h / 2, w / 2), |(y, x)| {
        (ch[[2 * y, 2 * x]] + ch[[2 * y, 2 * x + 1]] + ch[[2 * y + 1, 2 * x]] + ch[[2 * y + 1, 2 * x + 1]])
            / 4.0
    })
}

/// Image pyramid: level 0 is the input, level k halves level k-1 by
/// 2x2 mean pooling. Requires dims divisible by `2^(levels-1)`.
pub fn pyramid(img: &Image, levels: usize) -> Result<Vec<Image>> {
    if levels == 0 {
        return Err(Error::invalid_argument("pyramid needs at least one level"));
    }
    let factor = 1usize << (levels - 1);
    if img.height() % factor != 0 || img.width() % factor != 0 {
        return Err(Error::invalid_argument(format!(
            "pyramid with {levels} levels needs dims divisible by {factor}, got {}x{}",
            img.height(),
            img.width()
        )));
    }
    let mut out = vec![img.clone()];
    for _ in 1..levels {
        let prev = out.last().unwrap();
        let (h, w, c) = prev.data().dim();
        let mut next = Array3::zeros((h / 2, w / 2, c));
        for ch in 0..c {
            let pooled = downsample2(prev.channel(ch));
            next.slice_mut(s![.., .., ch]).assign(&pooled);
        }
        out.push(Image::new(next, img.color_space())?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Independent sRGB -> Lab path used as a cross-check oracle. Written
    /// from the CIE definition with its own constants; shares no code with
    /// `to_lab`.
    fn lab_oracle(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
        let lin = |u: f64| {
            if u > 0.04045 {
                ((u + 0.055) / 1.055).powf(2.4)
            } else {
                u / 12.92
            }
        };
        let (rl, gl, bl) = (lin(r), lin(g), lin(b));
        // Rec. 709 primaries with D65 white, independent derivation.
        let x = 0.412456439089692 * rl + 0.357576077643909 * gl + 0.180437483266399 * bl;
        let y = 0.212672851405623 * rl + 0.715152155287818 * gl + 0.072174993306560 * bl;
        let z = 0.019333895582329 * rl + 0.119192025881303 * gl + 0.950304078536368 * bl;
        let f = |t: f64| {
            if t > 0.008856451679035631 {
                t.powf(1.0 / 3.0)
            } else {
                7.787037037037035 * t + 16.0 / 116.0
            }
        };
        let (fx, fy, fz) = (f(x / 0.95047), f(y / 1.0), f(z / 1.08883));
        (116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz))
    }

    #[test]
    fn white_and_black_lab() {
        let white = Image::constant(2, 2, ColorSpace::Srgb, 1.0).unwrap();
        let lab = to_lab(&white).unwrap();
        assert!((lab.l[[0, 0]] - 100.0).abs() < 1e-3);
        assert!(lab.a[[0, 0]].abs() < 1e-3);
        assert!(lab.b[[0, 0]].abs() < 1e-3);

        let black = Image::constant(2, 2, ColorSpace::Srgb, 0.0).unwrap();
        let lab = to_lab(&black).unwrap();
        assert!(lab.l[[0, 0]].abs() < 1e-9);
        assert!(lab.a[[0, 0]].abs() < 1e-9);
        assert!(lab.b[[0, 0]].abs() < 1e-9);
    }

    #[test]
    fn red_lab_matches_independent_oracle() {
        let mut data = Array3::zeros((1, 1, 3));
        data[[0, 0, 0]] = 1.0;
        let red = Image::new(data, ColorSpace::Srgb).unwrap();
        let lab = to_lab(&red).unwrap();
        let (ol, oa, ob) = lab_oracle(1.0, 0.0, 0.0);
        // The two paths round the sRGB matrix at different precisions, so
        // agreement is bounded by that, not by f64 arithmetic.
        assert!((lab.l[[0, 0]] - ol).abs() < 1e-4, "L: {} vs {}", lab.l[[0, 0]], ol);
        assert!((lab.a[[0, 0]] - oa).abs() < 1e-4);
        assert!((lab.b[[0, 0]] - ob).abs() < 1e-4);
        // Classical reference values for sRGB red under D65.
        assert!((lab.l[[0, 0]] - 53.2408).abs() < 1e-3);
        assert!((lab.a[[0, 0]] - 80.0925).abs() < 1e-3);
        assert!((lab.b[[0, 0]] - 67.2032).abs() < 1e-3);
    }

    #[test]
    fn gray_images_have_zero_chroma() {
        for i in 0..=10 {
            let g = i as f64 / 10.0;
            let img = Image::constant(3, 3, ColorSpace::Srgb, g).unwrap();
            let lab = to_lab(&img).unwrap();
            assert!(lab.a.iter().all(|v| v.abs() < 1e-3), "a at gray {g}");
            assert!(lab.b.iter().all(|v| v.abs() < 1e-3), "b at gray {g}");
        }
    }

    #[test]
    fn to_lab_rejects_gray_input() {
        let img = Image::constant(2, 2, ColorSpace::Gray, 0.5).unwrap();
        assert!(matches!(to_lab(&img), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn resize_constant_is_constant() {
        let img = Image::constant(512, 512, ColorSpace::Srgb, 0.5).unwrap();
        let out = resize(&img, 256, 256).unwrap();
        assert_eq!((out.height(), out.width()), (256, 256));
        assert!(out.data().iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn resize_identity() {
        let data = Array3::from_shape_fn((7, 5, 3), |(y, x, c)| {
            ((y * 31 + x * 17 + c * 7) % 11) as f64 / 11.0
        });
        let img = Image::new(data, ColorSpace::Srgb).unwrap();
        let out = resize(&img, 7, 5).unwrap();
        let max_diff = img
            .data()
            .iter()
            .zip(out.data().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_diff < 1e-6);
    }

    #[test]
    fn resize_checkerboard_matches_hand_bilinear() {
        // 2x2 input [[0,1],[1,0]] upsampled to 4x4. Source coordinates for
        // output centers are (i+0.5)/2-0.5 clamped to [0,1]: {0, .25, .75, 1}.
        // Bilinear on the unit square with corners p00=0,p01=1,p10=1,p11=0
        // gives p(ty,tx) = tx + ty - 2*tx*ty.
        let img = Image::from_gray(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let out = resize(&img, 4, 4).unwrap();
        let coords = [0.0, 0.25, 0.75, 1.0];
        for (i, &ty) in coords.iter().enumerate() {
            for (j, &tx) in coords.iter().enumerate() {
                let expected = tx + ty - 2.0 * tx * ty;
                let got = out.data()[[i, j, 0]];
                assert!(
                    (got - expected).abs() < 1e-12,
                    "({i},{j}): {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn resize_rejects_zero_dims() {
        let img = Image::constant(4, 4, ColorSpace::Gray, 0.2).unwrap();
        assert!(resize(&img, 0, 4).is_err());
        assert!(resize(&img, 4, 0).is_err());
    }

    #[test]
    fn pyramid_constant() {
        let img = Image::constant(16, 8, ColorSpace::Srgb, 0.3).unwrap();
        let levels = pyramid(&img, 3).unwrap();
        assert_eq!(levels.len(), 3);
        assert_eq!((levels[1].height(), levels[1].width()), (8, 4));
        assert_eq!((levels[2].height(), levels[2].width()), (4, 2));
        for l in &levels {
            assert!(l.data().iter().all(|&v| (v - 0.3).abs() < 1e-12));
        }
    }

    #[test]
    fn pyramid_mean_pooling() {
        let img = Image::from_gray(array![[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let levels = pyramid(&img, 2).unwrap();
        assert_eq!(levels[1].data()[[0, 0, 0]], 0.5);
    }

    #[test]
    fn pyramid_matches_block_mean_oracle() {
        let data = Array3::from_shape_fn((8, 8, 1), |(y, x, _)| {
            ((y * 13 + x * 7) % 9) as f64 / 9.0
        });
        let img = Image::new(data, ColorSpace::Gray).unwrap();
        let levels = pyramid(&img, 2).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let mut s = 0.0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        s += img.data()[[2 * y + dy, 2 * x + dx, 0]];
                    }
                }
                assert!((levels[1].data()[[y, x, 0]] - s / 4.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pyramid_rejects_indivisible_dims() {
        let img = Image::constant(6, 6, ColorSpace::Gray, 0.1).unwrap();
        assert!(pyramid(&img, 3).is_err());
    }

    #[test]
    fn pyramid_preserves_mean() {
        let data = Array3::from_shape_fn((16, 16, 3), |(y, x, c)| {
            ((y * 5 + x * 3 + c) % 7) as f64 / 7.0
        });
        let img = Image::new(data, ColorSpace::Srgb).unwrap();
        let levels = pyramid(&img, 3).unwrap();
        for l in &levels {
            assert!((l.mean() - img.mean()).abs() < 1e-6);
        }
    }

    #[test]
    fn image_validation() {
        assert!(Image::new(Array3::zeros((0, 4, 3)), ColorSpace::Srgb).is_err());
        assert!(Image::new(Array3::zeros((4, 4, 1)), ColorSpace::Srgb).is_err());
        assert!(Image::new(Array3::from_elem((2, 2, 3), 1.5), ColorSpace::Srgb).is_err());
        assert!(Image::new(Array3::from_elem((2, 2, 3), f64::NAN), ColorSpace::Srgb).is_err());
    }

    #[test]
    fn gray_roundtrip_through_luma() {
        let img = Image::constant(4, 4, ColorSpace::Srgb, 0.42).unwrap();
        let gray = img.to_gray();
        assert_eq!(gray.channels(), 1);
        assert!(gray.data().iter().all(|&v| (v - 0.42).abs() < 1e-12));
    }
}
