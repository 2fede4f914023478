//! 2D DFT-based high-pass filtering and frequency-domain diagnostics.
//!
//! Conventions, fixed once here and relied on by the tests:
//! - Forward transform is the plain unnormalized double sum; the inverse
//!   carries the `1/(M*N)` factor.
//! - Spectra are centered: the DC bin sits at `(floor(M/2), floor(N/2))`.
//! - `D(u, v)` is the Euclidean distance from a bin to that center, so the
//!   transfer functions read directly off the centered grid.
//! - High-pass outputs are *not* clamped; signed values are legitimate
//!   high-frequency content and the restoration network consumes them as-is.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::imagecore::Image;

/// High-pass filter family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterFamily {
    Ideal,
    Gaussian,
    Butterworth,
}

/// A filter family plus the parameters that fully determine its transfer
/// function: cutoff `D0` in frequency-plane pixels and, for Butterworth,
/// the order `n`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FilterSpec {
    pub family: FilterFamily,
    pub cutoff_d0: f64,
    #[serde(default = "default_order")]
    pub order_n: u32,
}

fn default_order() -> u32 {
    2
}

impl FilterSpec {
    pub fn new(family: FilterFamily, cutoff_d0: f64, order_n: u32) -> Result<Self> {
        if !(cutoff_d0 > 0.0) || !cutoff_d0.is_finite() {
            return Err(Error::invalid_argument(format!(
                "cutoff D0 must be positive and finite, got {cutoff_d0}"
            )));
        }
        if order_n == 0 {
            return Err(Error::invalid_argument("Butterworth order must be >= 1"));
        }
        Ok(FilterSpec { family, cutoff_d0, order_n })
    }

    pub fn ideal(cutoff_d0: f64) -> Result<Self> {
        FilterSpec::new(FilterFamily::Ideal, cutoff_d0, 1)
    }

    pub fn gaussian(cutoff_d0: f64) -> Result<Self> {
        FilterSpec::new(FilterFamily::Gaussian, cutoff_d0, 1)
    }

    pub fn butterworth(cutoff_d0: f64, order_n: u32) -> Result<Self> {
        FilterSpec::new(FilterFamily::Butterworth, cutoff_d0, order_n)
    }

    /// Transfer-function value at radial distance `d` from the center.
    pub fn response_at(&self, d: f64) -> f64 {
        let d0 = self.cutoff_d0;
        match self.family {
            FilterFamily::Ideal => {
                if d <= d0 {
                    0.0
                } else {
                    1.0
                }
            }
            FilterFamily::Gaussian => 1.0 - (-d * d / (2.0 * d0 * d0)).exp(),
            FilterFamily::Butterworth => {
                if d == 0.0 {
                    // Limit of 1/(1+(D0/D)^(2n)) as D -> 0.
                    0.0
                } else {
                    1.0 / (1.0 + (d0 / d).powi(2 * self.order_n as i32))
                }
            }
        }
    }
}

/// Sampled transfer function on a centered `M x N` frequency grid.
#[derive(Clone, Debug)]
pub struct TransferFunction {
    values: Array2<f64>,
    spec: FilterSpec,
}

impl TransferFunction {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn spec(&self) -> &FilterSpec {
        &self.spec
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// Centered complex spectrum of a single-channel image.
#[derive(Clone, Debug)]
pub struct Spectrum {
    values: Array2<Complex<f64>>,
}

impl Spectrum {
    /// Wraps an already-centered coefficient grid.
    pub fn from_centered(values: Array2<Complex<f64>>) -> Self {
        Spectrum { values }
    }

    pub fn values(&self) -> &Array2<Complex<f64>> {
        &self.values
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// Total spectral energy, `sum |F|^2`.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Index of the DC bin on the centered grid.
pub fn dc_index(dims: (usize, usize)) -> (usize, usize) {
    (dims.0 / 2, dims.1 / 2)
}

/// Distance from bin `(u, v)` to the centered origin.
pub fn radial_distance(dims: (usize, usize), u: usize, v: usize) -> f64 {
    let (cu, cv) = dc_index(dims);
    let du = u as f64 - cu as f64;
    let dv = v as f64 - cv as f64;
    (du * du + dv * dv).sqrt()
}

fn fft2_inplace(data: &mut Array2<Complex<f64>>, inverse: bool) {
    let (h, w) = data.dim();
    let mut planner = FftPlanner::new();
    let fft_w = if inverse {
        planner.plan_fft_inverse(w)
    } else {
        planner.plan_fft_forward(w)
    };
    for mut row in data.rows_mut() {
        let slice = row.as_slice_mut().expect("row-major layout");
        fft_w.process(slice);
    }
    let fft_h = if inverse {
        planner.plan_fft_inverse(h)
    } else {
        planner.plan_fft_forward(h)
    };
    let mut col = vec![Complex::default(); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = data[[y, x]];
        }
        fft_h.process(&mut col);
        for y in 0..h {
            data[[y, x]] = col[y];
        }
    }
}

/// Cyclic shift moving the DC bin to the array center (and its inverse).
fn shift2<T: Clone + Default>(arr: &ArrayView2<'_, T>, inverse: bool) -> Array2<T> {
    let (h, w) = arr.dim();
    let (sy, sx) = if inverse {
        (h - h / 2, w - w / 2)
    } else {
        (h / 2, w / 2)
    };
    let mut out = Array2::default((h, w));
    for y in 0..h {
        for x in 0..w {
            out[[(y + sy) % h, (x + sx) % w]] = arr[[y, x]].clone();
        }
    }
    out
}

/// Forward DFT of one channel, returned centered.
pub fn dft2_channel(ch: ArrayView2<'_, f64>) -> Spectrum {
    let mut data = ch.mapv(|v| Complex::new(v, 0.0));
    fft2_inplace(&mut data, false);
    Spectrum { values: shift2(&data.view(), false) }
}

/// Forward DFT of a single-channel image. Multi-channel inputs are
/// rejected; callers filter per channel instead.
pub fn dft2(img: &Image) -> Result<Spectrum> {
    if img.channels() != 1 {
        return Err(Error::invalid_argument(format!(
            "dft2 expects a single-channel image, got {} channels",
            img.channels()
        )));
    }
    Ok(dft2_channel(img.channel(0)))
}

/// Inverse DFT back to the spatial domain (applies the `1/(M*N)` factor).
/// Returns the real plane; the imaginary residue must be numerically zero.
pub fn idft2(spec: &Spectrum) -> Array2<f64> {
    let (h, w) = spec.dims();
    let mut data = shift2(&spec.values.view(), true);
    fft2_inplace(&mut data, true);
    let norm = (h * w) as f64;
    let max_imag = data.iter().map(|c| c.im.abs()).fold(0.0, f64::max) / norm;
    assert!(
        max_imag < 1e-6,
        "imaginary residue {max_imag} exceeds tolerance; spectrum is not conjugate-symmetric"
    );
    data.mapv(|c| c.re / norm)
}

/// Samples a filter's transfer function on a centered grid.
pub fn make_transfer(spec: &FilterSpec, dims: (usize, usize)) -> TransferFunction {
    let values = Array2::from_shape_fn(dims, |(u, v)| spec.response_at(radial_distance(dims, u, v)));
    TransferFunction { values, spec: *spec }
}

/// High-pass filters one channel: `IDFT(DFT(ch) * H)`.
pub fn highpass_channel(ch: ArrayView2<'_, f64>, tf: &TransferFunction) -> Array2<f64> {
    let spec = dft2_channel(ch);
    let filtered = Spectrum { values: &spec.values * tf.values() };
    idft2(&filtered)
}

/// High-pass filters an image per channel. The output is signed and
/// deliberately unclamped.
pub fn highpass(img: &Image, spec: &FilterSpec) -> Array3<f64> {
    let (h, w, c) = img.data().dim();
    let tf = make_transfer(spec, (h, w));
    let mut out = Array3::zeros((h, w, c));
    for ch in 0..c {
        let filtered = highpass_channel(img.channel(ch), &tf);
        out.index_axis_mut(Axis(2), ch).assign(&filtered);
    }
    out
}

/// Spatial impulse response of a filter, centered for inspection.
///
/// This is the inverse transform of the transfer function; its oscillating
/// tail is the ringing artifact the filter would imprint on images.
pub fn impulse_response(spec: &FilterSpec, dims: (usize, usize)) -> Array2<f64> {
    let tf = make_transfer(spec, dims);
    let complex = tf.values().mapv(|v| Complex::new(v, 0.0));
    let spatial = idft2(&Spectrum { values: complex });
    shift2(&spatial.view(), false)
}

/// Sum of `|h(x,y)|` outside a central disk; a scalar measure of ringing.
/// `resp` must be a centered impulse response.
pub fn oscillation_energy(resp: &Array2<f64>, lobe_radius: f64) -> f64 {
    let dims = resp.dim();
    let mut total = 0.0;
    for ((y, x), &v) in resp.indexed_iter() {
        if radial_distance(dims, y, x) > lobe_radius {
            total += v.abs();
        }
    }
    total
}

/// One radial bin of a frequency-domain profile.
#[derive(Clone, Copy, Debug)]
pub struct RadialBin {
    /// Radial midpoint of the bin, in frequency-plane pixels.
    pub center: f64,
    pub value: f64,
    /// Number of frequency bins that fell in this radial range.
    pub count: usize,
}

fn radial_max(dims: (usize, usize)) -> f64 {
    let (cu, cv) = dc_index(dims);
    let du = cu.max(dims.0 - 1 - cu) as f64;
    let dv = cv.max(dims.1 - 1 - cv) as f64;
    (du * du + dv * dv).sqrt()
}

fn bin_of(d: f64, width: f64, n_bins: usize) -> usize {
    ((d / width) as usize).min(n_bins - 1)
}

fn to_analysis_channel(img: &Image) -> Array2<f64> {
    img.to_gray().channel(0).to_owned()
}

/// Radial energy histogram: bin k holds `sum |F(u,v)|^2` over the bins whose
/// distance to the center falls in the k-th equal-width range of
/// `[0, D_max]`. Color images are reduced to luma first.
pub fn energy_profile(img: &Image, n_bins: usize) -> Result<Vec<RadialBin>> {
    if n_bins < 2 {
        return Err(Error::invalid_argument("energy profile needs n_bins >= 2"));
    }
    let ch = to_analysis_channel(img);
    let spec = dft2_channel(ch.view());
    let dims = spec.dims();
    let d_max = radial_max(dims);
    let width = d_max / n_bins as f64;
    let mut bins = vec![
        RadialBin { center: 0.0, value: 0.0, count: 0 };
        n_bins
    ];
    for (k, b) in bins.iter_mut().enumerate() {
        b.center = (k as f64 + 0.5) * width;
    }
    for ((u, v), c) in spec.values().indexed_iter() {
        let k = bin_of(radial_distance(dims, u, v), width, n_bins);
        bins[k].value += c.norm_sqr();
        bins[k].count += 1;
    }
    Ok(bins)
}

/// How the spectra of two images are compared per radial bin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMode {
    /// Cosine of the complex coefficients viewed as interleaved real pairs.
    Complex,
    /// Cosine of the magnitude vectors (phase-blind).
    Magnitude,
}

/// Per-radial-bin cosine similarity between the spectra of two images.
///
/// Empty bins report NaN. Color inputs are reduced to luma first.
pub fn radial_similarity(
    a: &Image,
    b: &Image,
    n_bins: usize,
    mode: SimilarityMode,
) -> Result<Vec<RadialBin>> {
    if n_bins < 2 {
        return Err(Error::invalid_argument("radial similarity needs n_bins >= 2"));
    }
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::invalid_argument(format!(
            "dimension mismatch: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    let sa = dft2_channel(to_analysis_channel(a).view());
    let sb = dft2_channel(to_analysis_channel(b).view());
    let dims = sa.dims();
    let d_max = radial_max(dims);
    let width = d_max / n_bins as f64;
    let mut dot = vec![0.0f64; n_bins];
    let mut na = vec![0.0f64; n_bins];
    let mut nb = vec![0.0f64; n_bins];
    let mut count = vec![0usize; n_bins];
    for ((u, v), ca) in sa.values().indexed_iter() {
        let cb = sb.values()[[u, v]];
        let k = bin_of(radial_distance(dims, u, v), width, n_bins);
        match mode {
            SimilarityMode::Complex => {
                // Interleaved-real dot product of complex vectors is
                // Re(sum a * conj(b)).
                dot[k] += ca.re * cb.re + ca.im * cb.im;
                na[k] += ca.norm_sqr();
                nb[k] += cb.norm_sqr();
            }
            SimilarityMode::Magnitude => {
                let (ma, mb) = (ca.norm(), cb.norm());
                dot[k] += ma * mb;
                na[k] += ma * ma;
                nb[k] += mb * mb;
            }
        }
        count[k] += 1;
    }
    Ok((0..n_bins)
        .map(|k| {
            let value = if count[k] == 0 {
                f64::NAN
            } else if na[k] == 0.0 && nb[k] == 0.0 {
                1.0
            } else if na[k] == 0.0 || nb[k] == 0.0 {
                0.0
            } else {
                dot[k] / (na[k].sqrt() * nb[k].sqrt())
            };
            RadialBin { center: (k as f64 + 0.5) * width, value, count: count[k] }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::ColorSpace;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use std::f64::consts::PI;

    fn random_gray(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let data = Array2::from_shape_fn((h, w), |_| rng.random_range(0.0..1.0));
        Image::from_gray(data).unwrap()
    }

    /// Quadratic-time direct-sum DFT used as the independent oracle.
    fn direct_dft(ch: &Array2<f64>) -> Array2<Complex<f64>> {
        let (m, n) = ch.dim();
        let mut out = Array2::default((m, n));
        for u in 0..m {
            for v in 0..n {
                let mut acc = Complex::new(0.0, 0.0);
                for x in 0..m {
                    for y in 0..n {
                        let phase =
                            -2.0 * PI * (u as f64 * x as f64 / m as f64 + v as f64 * y as f64 / n as f64);
                        acc += ch[[x, y]] * Complex::new(phase.cos(), phase.sin());
                    }
                }
                out[[u, v]] = acc;
            }
        }
        out
    }

    #[test]
    fn dft_constant_image_is_dc_only() {
        let img = Image::constant(8, 6, ColorSpace::Gray, 0.25).unwrap();
        let spec = dft2(&img).unwrap();
        let dc = dc_index(spec.dims());
        for ((u, v), c) in spec.values().indexed_iter() {
            if (u, v) == dc {
                assert!((c.re - 0.25 * 48.0).abs() < 1e-9);
                assert!(c.im.abs() < 1e-9);
            } else {
                assert!(c.norm() < 1e-9, "non-DC bin ({u},{v}) = {c}");
            }
        }
    }

    #[test]
    fn dft_impulse_is_flat() {
        let mut data = Array2::zeros((8, 8));
        data[[3, 5]] = 1.0;
        let img = Image::from_gray(data).unwrap();
        let spec = dft2(&img).unwrap();
        for c in spec.values().iter() {
            assert!((c.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dft_matches_direct_sum_oracle() {
        let img = random_gray(8, 8, 7);
        let spec = dft2(&img).unwrap();
        let direct = direct_dft(&img.channel(0).to_owned());
        // The oracle is unshifted; compare through the same centering map.
        let shifted = shift2(&direct.view(), false);
        let max_err = spec
            .values()
            .iter()
            .zip(shifted.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-8, "max err {max_err}");
    }

    #[test]
    fn dft_rejects_multichannel() {
        let img = Image::constant(4, 4, ColorSpace::Srgb, 0.5).unwrap();
        assert!(matches!(dft2(&img), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn round_trip_recovers_image() {
        for &(h, w) in &[(16usize, 16usize), (31, 17), (64, 48)] {
            let img = random_gray(h, w, (h * 100 + w) as u64);
            let rec = idft2(&dft2(&img).unwrap());
            let max_err = img
                .channel(0)
                .iter()
                .zip(rec.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(max_err < 1e-6, "{h}x{w}: {max_err}");
        }
    }

    #[test]
    fn parseval_consistency() {
        let img = random_gray(24, 20, 3);
        let spec = dft2(&img).unwrap();
        let spatial: f64 = img.channel(0).iter().map(|v| v * v).sum();
        let freq = spec.energy() / (24.0 * 20.0);
        assert!((spatial - freq).abs() / spatial < 1e-9);
    }

    #[test]
    fn butterworth_half_power_at_cutoff() {
        for n in 1..=4 {
            let spec = FilterSpec::butterworth(30.0, n).unwrap();
            assert_eq!(spec.response_at(30.0), 0.5);
        }
        // On-grid check: bin exactly D0 away from the center.
        let tf = make_transfer(&FilterSpec::butterworth(30.0, 2).unwrap(), (128, 128));
        let (cu, cv) = dc_index((128, 128));
        assert_eq!(tf.values()[[cu, cv + 30]], 0.5);
    }

    #[test]
    fn ideal_is_binary_with_transition_at_cutoff() {
        let tf = make_transfer(&FilterSpec::ideal(10.0).unwrap(), (64, 64));
        for ((u, v), &h) in tf.values().indexed_iter() {
            let d = radial_distance((64, 64), u, v);
            if d <= 10.0 {
                assert_eq!(h, 0.0, "D={d}");
            } else {
                assert_eq!(h, 1.0, "D={d}");
            }
        }
    }

    #[test]
    fn gaussian_identities() {
        let spec = FilterSpec::gaussian(30.0).unwrap();
        assert_eq!(spec.response_at(0.0), 0.0);
        let expected = 1.0 - (-0.5f64).exp();
        assert!((spec.response_at(30.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn transfer_is_monotone_along_rays() {
        for spec in [
            FilterSpec::ideal(12.0).unwrap(),
            FilterSpec::gaussian(12.0).unwrap(),
            FilterSpec::butterworth(12.0, 2).unwrap(),
        ] {
            for d in 0..60 {
                let a = spec.response_at(d as f64);
                let b = spec.response_at(d as f64 + 1.0);
                assert!(b >= a - 1e-15, "{spec:?} not monotone at D={d}");
            }
        }
    }

    #[test]
    fn highpass_removes_dc() {
        let img = random_gray(32, 32, 11);
        for spec in [
            FilterSpec::ideal(8.0).unwrap(),
            FilterSpec::gaussian(8.0).unwrap(),
            FilterSpec::butterworth(8.0, 2).unwrap(),
        ] {
            let out = highpass(&img, &spec);
            let mean = out.mean().unwrap();
            assert!(mean.abs() < 1e-6, "{spec:?} mean {mean}");
        }
    }

    #[test]
    fn highpass_constant_is_zero() {
        let img = Image::constant(16, 16, ColorSpace::Srgb, 0.7).unwrap();
        let out = highpass(&img, &FilterSpec::butterworth(4.0, 2).unwrap());
        assert!(out.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn ideal_highpass_zeroes_low_band() {
        let img = random_gray(64, 64, 5);
        let spec = FilterSpec::ideal(12.0).unwrap();
        let out = highpass(&img, &spec);
        let re_spec = dft2_channel(out.index_axis(Axis(2), 0));
        for ((u, v), c) in re_spec.values().indexed_iter() {
            if radial_distance((64, 64), u, v) <= 12.0 {
                assert!(c.norm() < 1e-8, "bin ({u},{v}) survived: {}", c.norm());
            }
        }
    }

    #[test]
    fn nyquist_checkerboard_passes_through() {
        // f(x,y) = 0.5 + 0.5*(-1)^(x+y) has exactly two spectral lines: DC
        // and the Nyquist bin, which sits at the maximal radial distance.
        let data = Array2::from_shape_fn((64, 64), |(y, x)| {
            if (x + y) % 2 == 0 {
                1.0
            } else {
                0.0
            }
        });
        let img = Image::from_gray(data).unwrap();
        let out = highpass(&img, &FilterSpec::ideal(30.0).unwrap());
        let mean = img.mean();
        for ((y, x, _), &v) in out.indexed_iter() {
            let expected = img.data()[[y, x, 0]] - mean;
            assert!((v - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn highpass_is_linear() {
        let a = random_gray(16, 16, 1);
        let b = random_gray(16, 16, 2);
        let spec = FilterSpec::butterworth(5.0, 2).unwrap();
        let ha = highpass(&a, &spec);
        let hb = highpass(&b, &spec);
        let combo_data = a.data() * 0.3 + b.data() * 0.6;
        let combo = Image::new(combo_data, ColorSpace::Gray).unwrap();
        let hc = highpass(&combo, &spec);
        let expected = &ha * 0.3 + &hb * 0.6;
        let max_err = hc
            .iter()
            .zip(expected.iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-6);
    }

    #[test]
    fn impulse_response_ringing_ordering() {
        let dims = (128, 128);
        let d0 = 15.0;
        let lobe = dims.0 as f64 / d0;
        let ideal = impulse_response(&FilterSpec::ideal(d0).unwrap(), dims);
        let bw = impulse_response(&FilterSpec::butterworth(d0, 2).unwrap(), dims);
        let gauss = impulse_response(&FilterSpec::gaussian(d0).unwrap(), dims);
        let (ei, eb, eg) = (
            oscillation_energy(&ideal, lobe),
            oscillation_energy(&bw, lobe),
            oscillation_energy(&gauss, lobe),
        );
        assert!(ei > eb && eb > eg, "ordering violated: {ei} {eb} {eg}");
    }

    #[test]
    fn gaussian_impulse_response_has_no_ringing() {
        let dims = (128, 128);
        let resp = impulse_response(&FilterSpec::gaussian(15.0).unwrap(), dims);
        let (cy, cx) = dc_index(dims);
        let peak = resp.iter().map(|v| v.abs()).fold(0.0, f64::max);
        // Grid truncation of the frequency-domain Gaussian leaves side
        // lobes at the ~1e-8 level; "no ringing" holds relative to the peak.
        let floor = 1e-6 * peak;
        // Radial envelope of |h| must decay monotonically beyond the
        // center spike down to the truncation floor.
        let mut envelope = vec![0.0f64; 60];
        for ((y, x), &v) in resp.indexed_iter() {
            let d = radial_distance(dims, y, x).round() as usize;
            if d < envelope.len() {
                envelope[d] = envelope[d].max(v.abs());
            }
        }
        for r in 2..59 {
            if envelope[r] < floor {
                break;
            }
            assert!(
                envelope[r + 1] <= envelope[r] + 1e-12,
                "envelope grew at radius {r}"
            );
        }
        // And the tail is single-signed above the floor.
        for ((y, x), &v) in resp.indexed_iter() {
            if (y, x) != (cy, cx) && v.abs() > floor {
                assert!(v < 0.0, "positive side lobe at ({y},{x}): {v}");
            }
        }
    }

    #[test]
    fn ideal_impulse_response_oscillates() {
        let dims = (128, 128);
        let resp = impulse_response(&FilterSpec::ideal(15.0).unwrap(), dims);
        let (cy, cx) = dc_index(dims);
        let mut signs = 0;
        let mut prev = 0.0f64;
        for x in cx + 2..dims.1 - 4 {
            let v = resp[[cy, x]];
            if prev != 0.0 && v * prev < 0.0 {
                signs += 1;
            }
            prev = v;
        }
        assert!(signs >= 3, "expected oscillating radial profile, saw {signs} sign changes");
    }

    #[test]
    fn energy_profile_constant_image() {
        let img = Image::constant(32, 32, ColorSpace::Gray, 0.4).unwrap();
        let bins = energy_profile(&img, 8).unwrap();
        let total: f64 = bins.iter().map(|b| b.value).sum();
        assert!(bins[0].value / total > 0.999999);
    }

    #[test]
    fn energy_profile_is_parseval_complete() {
        let img = random_gray(32, 24, 13);
        let bins = energy_profile(&img, 16).unwrap();
        let total: f64 = bins.iter().map(|b| b.value).sum();
        let direct = dft2(&img).unwrap().energy();
        assert!((total - direct).abs() / direct < 1e-6);
        let n_freq: usize = bins.iter().map(|b| b.count).sum();
        assert_eq!(n_freq, 32 * 24);
    }

    #[test]
    fn energy_profile_rejects_single_bin() {
        let img = Image::constant(8, 8, ColorSpace::Gray, 0.5).unwrap();
        assert!(energy_profile(&img, 1).is_err());
    }

    #[test]
    fn radial_similarity_identity_and_negation() {
        let img = random_gray(32, 32, 21);
        let bins = radial_similarity(&img, &img, 8, SimilarityMode::Complex).unwrap();
        for b in &bins {
            if b.count > 0 {
                assert!((b.value - 1.0).abs() < 1e-9);
            }
        }
        // b = 1 - a flips every non-DC coefficient's sign, so all bins that
        // exclude DC go to -1; the DC bin mixes in the positive mean.
        let inv_data = img.data().mapv(|v| 1.0 - v);
        let inv = Image::new(inv_data, ColorSpace::Gray).unwrap();
        let bins = radial_similarity(&img, &inv, 8, SimilarityMode::Complex).unwrap();
        for b in bins.iter().skip(1) {
            if b.count > 0 {
                assert!((b.value + 1.0).abs() < 1e-9, "bin at {} = {}", b.center, b.value);
            }
        }
    }

    #[test]
    fn radial_similarity_blur_decays_with_frequency() {
        // Fixed structured image vs. its blurred copy: similarity must be
        // near 1 in the lowest bins and strictly lower in the top bins.
        let data = Array2::from_shape_fn((64, 64), |(y, x)| {
            0.5 + 0.25 * ((x as f64) * 0.7).sin() + 0.25 * ((y as f64) * 1.3).cos()
        });
        let img = Image::from_gray(data.mapv(|v| v.clamp(0.0, 1.0))).unwrap();
        // 3x3 box blur with wrap.
        let (h, w) = (64usize, 64usize);
        let blurred = Array2::from_shape_fn((h, w), |(y, x)| {
            let mut s = 0.0;
            for dy in 0..3 {
                for dx in 0..3 {
                    s += img.data()[[(y + h + dy - 1) % h, (x + w + dx - 1) % w, 0]];
                }
            }
            s / 9.0
        });
        let blur = Image::from_gray(blurred).unwrap();
        let bins = radial_similarity(&img, &blur, 8, SimilarityMode::Complex).unwrap();
        let valid: Vec<&RadialBin> = bins.iter().filter(|b| b.count > 0 && b.value.is_finite()).collect();
        assert!(valid[0].value > 0.999);
        let low_avg = (valid[0].value + valid[1].value) / 2.0;
        let n = valid.len();
        let high_avg = (valid[n - 1].value + valid[n - 2].value) / 2.0;
        assert!(
            high_avg < low_avg - 1e-3,
            "similarity did not decay: low {low_avg} high {high_avg}"
        );
    }

    #[test]
    fn radial_similarity_rejects_dim_mismatch() {
        let a = random_gray(16, 16, 1);
        let b = random_gray(8, 8, 1);
        assert!(radial_similarity(&a, &b, 4, SimilarityMode::Complex).is_err());
    }

    #[test]
    fn filter_spec_validation() {
        assert!(FilterSpec::ideal(0.0).is_err());
        assert!(FilterSpec::ideal(-3.0).is_err());
        assert!(FilterSpec::butterworth(10.0, 0).is_err());
    }

    #[test]
    fn retained_energy_ordering_at_fixed_cutoff() {
        // Gaussian only attenuates the low band while Ideal removes it, so
        // on a natural-spectrum image (energy concentrated at low
        // frequencies) retained energy orders G > B > I at equal D0.
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let noise = Array2::from_shape_fn((64, 64), |_| rng.random_range(0.0..1.0));
        // Blurred noise approximates the 1/f-style falloff of real images.
        let mut data = noise;
        for _ in 0..3 {
            let src = data.clone();
            data = Array2::from_shape_fn((64, 64), |(y, x)| {
                let mut s = 0.0f64;
                for dy in 0..5usize {
                    for dx in 0..5usize {
                        s += src[[(y + 64 + dy - 2) % 64, (x + 64 + dx - 2) % 64]];
                    }
                }
                s / 25.0
            });
        }
        let img = Image::from_gray(data.mapv(|v| v.clamp(0.0, 1.0))).unwrap();
        let energy = |family: FilterSpec| -> f64 {
            highpass(&img, &family).iter().map(|v| v * v).sum()
        };
        let eg = energy(FilterSpec::gaussian(8.0).unwrap());
        let eb = energy(FilterSpec::butterworth(8.0, 2).unwrap());
        let ei = energy(FilterSpec::ideal(8.0).unwrap());
        assert!(eg > eb && eb > ei, "retained energy ordering violated: {eg} {eb} {ei}");
    }

    #[test]
    fn even_dims_dc_at_floor_center() {
        let img = Image::constant(8, 8, ColorSpace::Gray, 1.0).unwrap();
        let spec = dft2(&img).unwrap();
        assert!((spec.values()[[4, 4]].re - 64.0).abs() < 1e-9);
    }
}
