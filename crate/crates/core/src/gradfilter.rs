//! Spatial-domain high-frequency extraction via image gradients.
//!
//! Derivative kernels are applied as correlations with circular (wrap)
//! padding. The wrap choice is load-bearing: it makes the spatial path agree
//! exactly with the spectral identity
//! `F(u,v)_h = F(u,v) * (e^{j2*pi*u/M} - e^{-j2*pi*u/M})`
//! checked by [`gradient_transfer_equivalence`].
//!
//! Coordinate convention: `x` runs along image columns (width), `y` along
//! rows (height). An x-gradient therefore zeroes the spectrum line of zero
//! horizontal frequency.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::freqfilter::dft2_channel;
use crate::imagecore::Image;

/// Which derivative directions are extracted, in fixed x-then-y order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientDirections {
    X,
    Y,
    Xy,
}

impl GradientDirections {
    pub fn count(self) -> usize {
        match self {
            GradientDirections::X | GradientDirections::Y => 1,
            GradientDirections::Xy => 2,
        }
    }

    fn has_x(self) -> bool {
        matches!(self, GradientDirections::X | GradientDirections::Xy)
    }

    fn has_y(self) -> bool {
        matches!(self, GradientDirections::Y | GradientDirections::Xy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientOperator {
    Sobel,
    CentralDifference,
}

/// Gradient extractor specification.
///
/// Sobel kernels use raw integer coefficients (no `1/8` normalization); the
/// 5x5 variant is the binomial-smoothed extension, i.e. the outer product of
/// `[1,4,6,4,1]` smoothing with the `[-1,-2,0,2,1]` derivative taps. Central
/// difference is the fixed 3-tap `f(x+1) - f(x-1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GradientSpec {
    pub directions: GradientDirections,
    pub kernel_size: usize,
    pub operator: GradientOperator,
}

impl GradientSpec {
    pub fn new(
        directions: GradientDirections,
        kernel_size: usize,
        operator: GradientOperator,
    ) -> Result<Self> {
        if !(kernel_size == 3 || kernel_size == 5) {
            return Err(Error::invalid_argument(format!(
                "kernel size must be 3 or 5, got {kernel_size}"
            )));
        }
        if operator == GradientOperator::CentralDifference && kernel_size != 3 {
            return Err(Error::invalid_argument(
                "central difference is the fixed 3-tap stencil; use Sobel for size 5",
            ));
        }
        Ok(GradientSpec { directions, kernel_size, operator })
    }

    pub fn sobel3_xy() -> Self {
        GradientSpec {
            directions: GradientDirections::Xy,
            kernel_size: 3,
            operator: GradientOperator::Sobel,
        }
    }

    /// Output channels produced for an input with `in_channels` planes.
    pub fn out_channels(&self, in_channels: usize) -> usize {
        self.directions.count() * in_channels
    }
}

/// Correlation kernel for the x (column) derivative. The y kernel is its
/// transpose.
fn x_kernel(spec: &GradientSpec) -> Array2<f64> {
    match (spec.operator, spec.kernel_size) {
        (GradientOperator::CentralDifference, _) => {
            Array2::from_shape_vec((1, 3), vec![-1.0, 0.0, 1.0]).unwrap()
        }
        (GradientOperator::Sobel, 3) => {
            let smooth = [1.0, 2.0, 1.0];
            let deriv = [-1.0, 0.0, 1.0];
            Array2::from_shape_fn((3, 3), |(i, j)| smooth[i] * deriv[j])
        }
        (GradientOperator::Sobel, _) => {
            let smooth = [1.0, 4.0, 6.0, 4.0, 1.0];
            let deriv = [-1.0, -2.0, 0.0, 2.0, 1.0];
            Array2::from_shape_fn((5, 5), |(i, j)| smooth[i] * deriv[j])
        }
    }
}

/// Correlation with circular padding: `out[y][x] = sum K[i][j] *
/// f[(y+i-cy) mod H][(x+j-cx) mod W]`.
pub(crate) fn correlate_wrap(ch: ArrayView2<'_, f64>, kernel: &Array2<f64>) -> Array2<f64> {
    let (h, w) = ch.dim();
    let (kh, kw) = kernel.dim();
    let (cy, cx) = (kh / 2, kw / 2);
    let mut out = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for i in 0..kh {
                let sy = (y + h + i - cy) % h;
                for j in 0..kw {
                    let sx = (x + w + j - cx) % w;
                    acc += kernel[[i, j]] * ch[[sy, sx]];
                }
            }
            out[[y, x]] = acc;
        }
    }
    out
}

/// Extracts gradients per channel; outputs are concatenated channel-wise in
/// the order x(all input channels) then y(all input channels).
pub fn gradient_extract(img: &Image, spec: &GradientSpec) -> Result<Array3<f64>> {
    let (h, w, c) = img.data().dim();
    let mut out = Array3::zeros((h, w, spec.out_channels(c)));
    let mut slot = 0;
    if spec.directions.has_x() {
        let k = x_kernel(spec);
        for ch in 0..c {
            let g = correlate_wrap(img.channel(ch), &k);
            out.index_axis_mut(Axis(2), slot).assign(&g);
            slot += 1;
        }
    }
    if spec.directions.has_y() {
        let k = x_kernel(spec).t().to_owned();
        for ch in 0..c {
            let g = correlate_wrap(img.channel(ch), &k);
            out.index_axis_mut(Axis(2), slot).assign(&g);
            slot += 1;
        }
    }
    Ok(out)
}

/// Computes the central-difference gradient twice, spatially and by spectral
/// multiplication, and returns the maximum absolute deviation between the
/// two paths. The two are mathematically identical under circular padding.
pub fn gradient_transfer_equivalence(img: &Image, spec: &GradientSpec) -> Result<f64> {
    if img.channels() != 1 {
        return Err(Error::invalid_argument(
            "equivalence check expects a single-channel image",
        ));
    }
    if spec.operator != GradientOperator::CentralDifference {
        return Err(Error::invalid_argument(
            "equivalence check is defined for the central-difference operator",
        ));
    }
    let spatial = gradient_extract(img, spec)?;
    let spectral = spectral_gradient(img.channel(0), spec.directions);
    let mut max_dev = 0.0f64;
    for (a, b) in spatial.iter().zip(spectral.iter()) {
        max_dev = max_dev.max((a - b).abs());
    }
    Ok(max_dev)
}

/// Central-difference gradient evaluated through the DFT shift theorem.
fn spectral_gradient(ch: ArrayView2<'_, f64>, directions: GradientDirections) -> Array3<f64> {
    let (h, w) = ch.dim();
    let spec = dft2_channel(ch);
    let centered = spec.values();
    let mut out = Array3::zeros((h, w, directions.count()));
    let mut slot = 0;
    let apply = |axis_is_x: bool, slot: usize, out: &mut Array3<f64>| {
        let mut modified = Array2::<Complex<f64>>::zeros((h, w));
        for ((u, v), &c) in centered.indexed_iter() {
            // Centered index -> signed frequency; the shift-theorem factor
            // e^{j*theta} - e^{-j*theta} collapses to 2j*sin(theta).
            let fy = u as f64 - (h / 2) as f64;
            let fx = v as f64 - (w / 2) as f64;
            let theta = if axis_is_x {
                2.0 * std::f64::consts::PI * fx / w as f64
            } else {
                2.0 * std::f64::consts::PI * fy / h as f64
            };
            let factor = Complex::new(0.0, 2.0 * theta.sin());
            modified[[u, v]] = c * factor;
        }
        let spatial = crate::freqfilter::idft2(&crate::freqfilter::Spectrum::from_centered(
            modified,
        ));
        out.index_axis_mut(Axis(2), slot).assign(&spatial);
    };
    if directions.has_x() {
        apply(true, slot, &mut out);
        slot += 1;
    }
    if directions.has_y() {
        apply(false, slot, &mut out);
    }
    out
}
