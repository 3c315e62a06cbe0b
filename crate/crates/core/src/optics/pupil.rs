use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::config::{Grid, OpticalConfig};
use super::fft::{fft2, ifft2};
use super::OpticsError;

/// One Zernike phase term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aberration {
    /// Radial order `n`.
    pub n: u32,
    /// Azimuthal frequency `m`; negative values select the sine term.
    pub m: i32,
    /// Coefficient in radians RMS over the unit disk.
    pub coefficient: f64,
}

impl Aberration {
    pub fn new(n: u32, m: i32, coefficient: f64) -> Self {
        Aberration { n, m, coefficient }
    }

    pub fn defocus(c: f64) -> Self {
        Self::new(2, 0, c)
    }

    /// Coma along x (Z₃¹).
    pub fn coma_x(c: f64) -> Self {
        Self::new(3, 1, c)
    }

    /// Coma along y (Z₃⁻¹).
    pub fn coma_y(c: f64) -> Self {
        Self::new(3, -1, c)
    }

    pub fn spherical(c: f64) -> Self {
        Self::new(4, 0, c)
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// RMS-normalised Zernike polynomial `Z_n^m(ρ, φ)` on the unit disk.
pub fn zernike(n: u32, m: i32, rho: f64, phi: f64) -> f64 {
    let am = m.unsigned_abs();
    if am > n || (n - am) % 2 != 0 {
        return 0.0;
    }
    let radial: f64 = (0..=(n - am) / 2)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * factorial(n - k) / (factorial(k) * factorial((n + am) / 2 - k) * factorial((n - am) / 2 - k))
                * rho.powi((n - 2 * k) as i32)
        })
        .sum();
    let norm = if m == 0 { f64::from(n + 1).sqrt() } else { (2.0 * f64::from(n + 1)).sqrt() };
    let angular = match m {
        0 => 1.0,
        m if m > 0 => (f64::from(am) * phi).cos(),
        _ => (f64::from(am) * phi).sin(),
    };
    norm * radial * angular
}

/// Complex pupil over the unshifted FFT frequency grid of the simulation plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Pupil {
    pub values: Array2<Complex64>,
    /// NA·2π/λ (rad/µm).
    pub cutoff: f64,
    pub grid: Grid,
}

impl Pupil {
    /// Applies an extra phase `exp(i·z·k_z)` for a source displaced by `z` µm.
    pub fn defocused(&self, cfg: &OpticalConfig, z: f64) -> Pupil {
        if z == 0.0 {
            return self.clone();
        }
        let k = cfg.k_medium();
        let (ky, kx) = (self.grid.ky(), self.grid.kx());
        let mut out = self.clone();
        for ((i, j), v) in out.values.indexed_iter_mut() {
            let kz = (k * k - kx[j] * kx[j] - ky[i] * ky[i]).max(0.0).sqrt();
            *v *= Complex64::from_polar(1.0, z * kz);
        }
        out
    }

    /// Phase of the pupil inside the aperture (zero outside).
    pub fn phase(&self) -> Array2<f64> {
        self.values.mapv(|v| if v.norm() > 0.0 { v.arg() } else { 0.0 })
    }
}

/// Circular aperture with unit modulus inside the cutoff and the summed
/// Zernike phase of `aberrations`.
pub fn make_pupil(cfg: &OpticalConfig, aberrations: &[Aberration]) -> Result<Pupil, OpticsError> {
    cfg.validate()?;
    let grid = cfg.sim_grid();
    Ok(pupil_on_grid(grid, cfg.cutoff(), aberrations))
}

pub fn pupil_on_grid(grid: Grid, cutoff: f64, aberrations: &[Aberration]) -> Pupil {
    let (ky, kx) = (grid.ky(), grid.kx());
    let values = Array2::from_shape_fn(grid.shape(), |(i, j)| {
        let rho = (kx[j] * kx[j] + ky[i] * ky[i]).sqrt() / cutoff;
        if rho > 1.0 {
            return Complex64::new(0.0, 0.0);
        }
        let phi = ky[i].atan2(kx[j]);
        let phase: f64 = aberrations.iter().map(|a| a.coefficient * zernike(a.n, a.m, rho, phi)).sum();
        if phase == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::from_polar(1.0, phase)
        }
    });
    Pupil { values, cutoff, grid }
}

/// Coherent PSF: inverse FFT of the pupil (origin at index `[0, 0]`).
pub fn coherent_psf(pupil: &Pupil) -> Array2<Complex64> {
    ifft2(&pupil.values)
}

/// `|IFFT(pupil)|²` normalised to unit sum over the full plane, with the
/// origin at index `[0, 0]`.
pub fn incoherent_psf(pupil: &Pupil) -> Array2<f64> {
    let mut psf = coherent_psf(pupil).mapv(|v| v.norm_sqr());
    let total: f64 = psf.sum();
    if total > 0.0 {
        psf.mapv_inplace(|v| v / total);
    }
    psf
}

/// Optical transfer function: FFT of the normalised incoherent PSF.
pub fn otf(pupil: &Pupil) -> Array2<Complex64> {
    fft2(&incoherent_psf(pupil).mapv(|v| Complex64::new(v, 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zernike_known_forms() {
        let (r, p) = (0.7_f64, 0.3_f64);
        assert!((zernike(2, 0, r, p) - 3f64.sqrt() * (2.0 * r * r - 1.0)).abs() < 1e-12);
        assert!((zernike(3, 1, r, p) - 8f64.sqrt() * (3.0 * r.powi(3) - 2.0 * r) * p.cos()).abs() < 1e-12);
        assert!((zernike(3, -1, r, p) - 8f64.sqrt() * (3.0 * r.powi(3) - 2.0 * r) * p.sin()).abs() < 1e-12);
        assert_eq!(zernike(3, 0, r, p), 0.0);
    }

    #[test]
    fn zernike_is_rms_normalised() {
        // midpoint quadrature over the unit disk
        let n = 400;
        let (mut sum, mut area) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let x = -1.0 + (i as f64 + 0.5) * 2.0 / n as f64;
                let y = -1.0 + (j as f64 + 0.5) * 2.0 / n as f64;
                let rho = (x * x + y * y).sqrt();
                if rho <= 1.0 {
                    sum += zernike(3, 1, rho, y.atan2(x)).powi(2);
                    area += 1.0;
                }
            }
        }
        assert!((sum / area - 1.0).abs() < 5e-3);
    }

    #[test]
    fn unaberrated_pupil_is_binary() {
        let cfg = OpticalConfig { grid: [64, 64], ..Default::default() };
        let pupil = make_pupil(&cfg, &[]).unwrap();
        assert!(pupil.values.iter().all(|v| v.im == 0.0 && (v.re == 0.0 || v.re == 1.0)));
        assert!(pupil.phase().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn invalid_na_is_rejected() {
        let cfg = OpticalConfig { na: 1.5, ..Default::default() };
        assert!(matches!(make_pupil(&cfg, &[]), Err(OpticsError::InvalidNA { .. })));
    }
}
