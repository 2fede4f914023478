//! Training objective: pixel l2 plus patch-based SSIM dissimilarity,
//! `L = mse(I, I^r) + (1 - mean SSIM(I, I^r))`, unweighted.
//!
//! SSIM parameters (pinned): 11x11 Gaussian window with sigma 1.5, k1=0.01,
//! k2=0.03 on the `[0,1]` dynamic range, zero-padded same-size convolution,
//! mean over all positions and channels.
//!
//! Two implementations are kept deliberately: the tensor path that training
//! differentiates through, and a plain `f64` array path exposed as the loss
//! operation; tests tie the two together.

use candle_core::Tensor;
use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Loss value with its two terms.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub l2: f64,
    pub ssim: f64,
}

fn gaussian_window_1d() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as isize;
    let mut w: Vec<f64> = (-half..=half)
        .map(|i| (-((i * i) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Zero-padded separable Gaussian filtering of one plane.
fn gaussian_filter(plane: &Array2<f64>) -> Array2<f64> {
    let w1d = gaussian_window_1d();
    let half = (SSIM_WINDOW / 2) as isize;
    let (h, w) = plane.dim();
    let mut rows = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &wk) in w1d.iter().enumerate() {
                let sx = x as isize + k as isize - half;
                if sx >= 0 && sx < w as isize {
                    acc += wk * plane[[y, sx as usize]];
                }
            }
            rows[[y, x]] = acc;
        }
    }
    let mut out = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &wk) in w1d.iter().enumerate() {
                let sy = y as isize + k as isize - half;
                if sy >= 0 && sy < h as isize {
                    acc += wk * rows[[sy as usize, x]];
                }
            }
            out[[y, x]] = acc;
        }
    }
    out
}

/// Mean SSIM between two `H x W x C` arrays (reference `f64` path).
pub fn mean_ssim(a: &Array3<f64>, b: &Array3<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::invalid_argument("ssim dimension mismatch"));
    }
    let (h, w, c) = a.dim();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for ch in 0..c {
        let pa = a.index_axis(ndarray::Axis(2), ch).to_owned();
        let pb = b.index_axis(ndarray::Axis(2), ch).to_owned();
        let mu_a = gaussian_filter(&pa);
        let mu_b = gaussian_filter(&pb);
        let aa = gaussian_filter(&pa.mapv(|v| v * v));
        let bb = gaussian_filter(&pb.mapv(|v| v * v));
        let ab = gaussian_filter(&(&pa * &pb));
        for y in 0..h {
            for x in 0..w {
                let (ma, mb) = (mu_a[[y, x]], mu_b[[y, x]]);
                let va = aa[[y, x]] - ma * ma;
                let vb = bb[[y, x]] - mb * mb;
                let cov = ab[[y, x]] - ma * mb;
                let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
                let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
                total += num / den;
            }
        }
    }
    Ok(total / (h * w * c) as f64)
}

/// The loss operation on restored/clean arrays (`H x W x C`), with the
/// per-term breakdown. The restored operand may hold unclamped values.
pub fn restoration_loss(restored: &Array3<f64>, clean: &Array3<f64>) -> Result<LossBreakdown> {
    if restored.dim() != clean.dim() {
        return Err(Error::invalid_argument("loss dimension mismatch"));
    }
    if restored.dim().2 != 3 {
        return Err(Error::invalid_argument("loss expects 3-channel operands"));
    }
    let n = restored.len() as f64;
    let l2 = restored
        .iter()
        .zip(clean.iter())
        .map(|(r, c)| (r - c) * (r - c))
        .sum::<f64>()
        / n;
    let ssim = 1.0 - mean_ssim(restored, clean)?;
    Ok(LossBreakdown { total: l2 + ssim, l2, ssim })
}

fn window_tensor(channels: usize, like: &Tensor) -> candle_core::Result<Tensor> {
    let w1d = gaussian_window_1d();
    let mut w2d = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for i in 0..SSIM_WINDOW {
        for j in 0..SSIM_WINDOW {
            w2d.push(w1d[i] * w1d[j]);
        }
    }
    let one = Tensor::from_vec(w2d, (1, 1, SSIM_WINDOW, SSIM_WINDOW), like.device())?
        .to_dtype(like.dtype())?;
    // Depthwise layout: (C, 1, k, k) with groups = C.
    Tensor::cat(&vec![&one; channels], 0)
}

/// Differentiable loss on NCHW tensors: `(total, l2, ssim)` scalars.
/// Works for f32 (training) and f64 (gradient checks).
pub fn loss_terms(restored: &Tensor, clean: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let dims = restored.dims();
    if dims != clean.dims() || dims.len() != 4 {
        return Err(Error::invalid_argument("loss expects matching NCHW tensors"));
    }
    let channels = dims[1];
    let l2 = restored.sub(clean)?.sqr()?.mean_all()?;

    let window = window_tensor(channels, restored)?;
    let pad = SSIM_WINDOW / 2;
    let conv = |t: &Tensor| -> candle_core::Result<Tensor> {
        t.conv2d(&window, pad, 1, 1, channels)
    };
    let mu_a = conv(restored)?;
    let mu_b = conv(clean)?;
    let mu_aa = mu_a.sqr()?;
    let mu_bb = mu_b.sqr()?;
    let mu_ab = mu_a.mul(&mu_b)?;
    let var_a = conv(&restored.sqr()?)?.sub(&mu_aa)?;
    let var_b = conv(&clean.sqr()?)?.sub(&mu_bb)?;
    let cov = conv(&restored.mul(clean)?)?.sub(&mu_ab)?;
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let num = ((mu_ab * 2.0)? + c1)?.mul(&((cov * 2.0)? + c2)?)?;
    let den = (mu_aa.add(&mu_bb)? + c1)?.mul(&(var_a.add(&var_b)? + c2)?)?;
    let ssim_mean = num.div(&den)?.mean_all()?;
    let one = Tensor::ones((), ssim_mean.dtype(), ssim_mean.device())?;
    let ssim_term = one.sub(&ssim_mean)?;
    let total = l2.add(&ssim_term)?;
    Ok((total, l2, ssim_term))
}
