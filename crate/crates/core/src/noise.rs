//! Additive white Gaussian measurement noise at a target SNR.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};
use crate::image::Sinogram;

/// Adds zero-mean Gaussian noise so that mean signal power over noise variance
/// equals `snr_db`. `f64::INFINITY` disables noise.
pub fn add_noise(s: &Sinogram, snr_db: f64, seed: u64) -> Result<Sinogram> {
    if snr_db == f64::INFINITY {
        return Ok(s.clone());
    }
    if !snr_db.is_finite() {
        return invalid(format!("SNR must be finite or +inf, got {snr_db}"));
    }
    let energy = s.energy();
    if energy <= 0.0 || s.data.is_empty() {
        return invalid("cannot set an SNR on an all-zero sinogram");
    }
    let power = energy / s.data.len() as f64;
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = s.clone();
    for v in out.data.iter_mut() {
        *v += normal.sample(&mut rng);
    }
    Ok(out)
}

/// 10 log10 of signal power over error power between a clean and noisy sinogram.
pub fn measured_snr_db(clean: &Sinogram, noisy: &Sinogram) -> f64 {
    let noise: f64 = clean
        .data
        .iter()
        .zip(&noisy.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    10.0 * (clean.energy() / noise).log10()
}
