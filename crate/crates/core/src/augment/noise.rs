use ndarray::ArrayD;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::AugmentError;
use crate::pipeline::ImageData;

/// Adds `level` to every pixel (the real part of complex images).
pub fn add_offset(img: &ImageData, level: f64) -> ImageData {
    match img {
        ImageData::Real(a) => ImageData::Real(a.mapv(|v| v + level)),
        ImageData::Complex(a) => ImageData::Complex(a.mapv(|v| v + level)),
    }
}

/// Poisson scale `s` for a target `snr = (peak − bg)/√bg` in photon units,
/// i.e. `s = snr²·bg/(peak − bg)²`. Without a usable background the
/// shot-noise-limited form `snr = √(peak·s)` is used.
pub fn poisson_scale(peak: f64, background: f64, snr: f64) -> f64 {
    let signal = peak - background;
    if background > 0.0 && signal > 0.0 {
        snr * snr * background / (signal * signal)
    } else if peak > 0.0 {
        snr * snr / peak
    } else {
        1.0
    }
}

/// Replaces each pixel `v` by `Poisson(v·s)/s`. Negative values down to
/// −1e-9·max|v| (transform round-off) count as zero.
pub fn poisson_noise<R: Rng + ?Sized>(img: &ArrayD<f64>, scale: f64, rng: &mut R) -> Result<ArrayD<f64>, AugmentError> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(AugmentError::InvalidParameter { name: "scale", value: scale });
    }
    let peak = img.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = -1e-9 * peak;
    if let Some(&v) = img.iter().find(|&&v| v < floor || v.is_nan()) {
        return Err(AugmentError::NegativeInput(v));
    }
    Ok(img.mapv(|v| {
        let lambda = v.max(0.0) * scale;
        if lambda <= 0.0 {
            0.0
        } else {
            Poisson::new(lambda).expect("positive finite rate").sample(rng) / scale
        }
    }))
}

/// Adds i.i.d. zero-mean normal noise of standard deviation `sigma`
/// (independently to both parts of complex images).
pub fn gaussian_noise<R: Rng + ?Sized>(img: &ImageData, sigma: f64, rng: &mut R) -> Result<ImageData, AugmentError> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(AugmentError::InvalidParameter { name: "sigma", value: sigma });
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let n = Normal::new(0.0, sigma).expect("valid sigma");
    Ok(match img {
        ImageData::Real(a) => ImageData::Real(a.mapv(|v| v + n.sample(rng))),
        ImageData::Complex(a) => ImageData::Complex(a.mapv(|v| v + Complex64::new(n.sample(rng), n.sample(rng)))),
    })
}
