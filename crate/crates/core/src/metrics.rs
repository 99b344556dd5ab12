//! Image quality: SSIM, PSNR and SNR.
//!
//! [`ssim`], [`psnr`] and [`snr`] work on the images as given. Reconstruction
//! reports go through [`Quality::compare`], which min-max normalizes both
//! images to [0, 1] first so that amplitude conventions of different solvers
//! do not enter the scores.

use crate::error::{invalid, Result};
use crate::image::{Image, Normalization};

const K1: f64 = 0.01;
const K2: f64 = 0.03;
const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; WINDOW] {
    let half = (WINDOW / 2) as f64;
    let mut taps = [0.0; WINDOW];
    for (k, t) in taps.iter_mut().enumerate() {
        let d = k as f64 - half;
        *t = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

/// Symmetric (edge-repeating) reflection of an out-of-range index.
pub fn reflect(idx: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut k = idx.rem_euclid(period);
    if k >= n {
        k = period - 1 - k;
    }
    k as usize
}

fn blur(values: &[f64], nx: usize, ny: usize, taps: &[f64; WINDOW]) -> Vec<f64> {
    let half = (WINDOW / 2) as isize;
    let mut rows = vec![0.0; values.len()];
    for j in 0..ny {
        for i in 0..nx {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let ii = reflect(i as isize + k as isize - half, nx);
                acc += t * values[j * nx + ii];
            }
            rows[j * nx + i] = acc;
        }
    }
    let mut out = vec![0.0; values.len()];
    for j in 0..ny {
        for i in 0..nx {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let jj = reflect(j as isize + k as isize - half, ny);
                acc += t * rows[jj * nx + i];
            }
            out[j * nx + i] = acc;
        }
    }
    out
}

/// Mean SSIM with the dynamic range taken from `reference`.
pub fn ssim(x: &Image, reference: &Image) -> Result<f64> {
    let range = reference.max() - reference.min();
    if range <= 0.0 {
        return invalid("SSIM reference image is constant");
    }
    ssim_with_range(x, reference, range)
}

/// Mean SSIM with an explicit dynamic range `range`.
pub fn ssim_with_range(x: &Image, y: &Image, range: f64) -> Result<f64> {
    x.check_same_grid(y)?;
    if !(range > 0.0) {
        return invalid(format!("SSIM dynamic range must be positive, got {range}"));
    }
    let (nx, ny) = (x.grid.nx, x.grid.ny);
    let taps = gaussian_taps();
    let c1 = (K1 * range).powi(2);
    let c2 = (K2 * range).powi(2);
    let xx: Vec<f64> = x.values.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.values.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.values.iter().zip(&y.values).map(|(a, b)| a * b).collect();
    let mx = blur(&x.values, nx, ny, &taps);
    let my = blur(&y.values, nx, ny, &taps);
    let sxx = blur(&xx, nx, ny, &taps);
    let syy = blur(&yy, nx, ny, &taps);
    let sxy = blur(&xy, nx, ny, &taps);
    let mut total = 0.0;
    for k in 0..x.values.len() {
        total += ssim_index(mx[k], my[k], sxx[k], syy[k], sxy[k], c1, c2);
    }
    Ok(total / x.values.len() as f64)
}

/// Local SSIM from windowed first and second moments.
pub fn ssim_index(mx: f64, my: f64, exx: f64, eyy: f64, exy: f64, c1: f64, c2: f64) -> f64 {
    let vx = exx - mx * mx;
    let vy = eyy - my * my;
    let cov = exy - mx * my;
    ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

/// Peak SNR in dB against the peak of `reference`; `+inf` when identical.
pub fn psnr(x: &Image, reference: &Image) -> Result<f64> {
    x.check_same_grid(reference)?;
    let mse = sq_diff(x, reference) / x.values.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (reference.max().powi(2) / mse).log10())
}

/// Energy SNR in dB; `+inf` when identical.
pub fn snr(x: &Image, reference: &Image) -> Result<f64> {
    x.check_same_grid(reference)?;
    let signal = reference.dot(reference);
    if signal == 0.0 {
        return invalid("SNR reference image is all zeros");
    }
    let err = sq_diff(x, reference);
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / err).log10())
}

fn sq_diff(a: &Image, b: &Image) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .map(|(p, q)| (p - q) * (p - q))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quality {
    pub ssim: f64,
    pub psnr: f64,
    pub snr: f64,
}

impl Quality {
    /// All three scores after min-max normalizing both images to [0, 1].
    pub fn compare(x: &Image, truth: &Image) -> Result<Self> {
        Self::compare_with(x, truth, Normalization::MinMax)
    }

    /// Scores after bringing both images to [0, 1] with `norm`.
    pub fn compare_with(x: &Image, truth: &Image, norm: Normalization) -> Result<Self> {
        let xn = norm.apply(x);
        let tn = norm.apply(truth);
        Ok(Self {
            ssim: ssim(&xn, &tn)?,
            psnr: psnr(&xn, &tn)?,
            snr: snr(&xn, &tn)?,
        })
    }
}
