//! Lorenz–Mie scattering by a homogeneous sphere.
//!
//! Coefficients follow the Bohren–Huffman scheme: the logarithmic derivative
//! `D_n(mx)` by downward recurrence started 15 orders above the truncation,
//! and the Riccati–Bessel functions `ψ_n(x)`, `ξ_n(x)` by upward recurrence.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;

use super::ScattererError;
use crate::optics::{Grid, OpticalConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct MieCoefficients {
    /// Electric multipoles `a_1..a_nmax` (index 0 holds `a_1`).
    pub a: Vec<Complex64>,
    /// Magnetic multipoles `b_1..b_nmax`.
    pub b: Vec<Complex64>,
    pub n_max: usize,
    pub size_parameter: f64,
}

/// Wiscombe truncation `ceil(x + 4·x^(1/3) + 2)`.
pub fn truncation_order(x: f64) -> usize {
    (x + 4.0 * x.cbrt() + 2.0).ceil() as usize
}

/// Coefficients below this magnitude are dropped from the end of the series.
pub const TAIL_TOLERANCE: f64 = 1e-12;

/// Coefficients truncated at the Wiscombe order or later: the series is
/// extended past internal resonances (orders up to about `|m|·x`) until
/// every dropped coefficient is below [`TAIL_TOLERANCE`].
pub fn mie_coefficients(x: f64, m: Complex64) -> Result<MieCoefficients, ScattererError> {
    check(x, m)?;
    let rule = truncation_order(x);
    let cap = rule.max((m.norm() * x).ceil() as usize) + 30;
    let (mut a, mut b) = series(x, m, cap);
    let last = a
        .iter()
        .zip(&b)
        .rposition(|(a, b)| a.norm() >= TAIL_TOLERANCE || b.norm() >= TAIL_TOLERANCE)
        .map_or(0, |i| i + 2);
    let n_max = last.max(rule).min(a.len());
    a.truncate(n_max);
    b.truncate(n_max);
    Ok(MieCoefficients { a, b, n_max, size_parameter: x })
}

/// Coefficients up to an explicit order `n_max`.
pub fn mie_coefficients_to(x: f64, m: Complex64, n_max: usize) -> Result<MieCoefficients, ScattererError> {
    check(x, m)?;
    let n_max = n_max.max(1);
    let (a, b) = series(x, m, n_max);
    Ok(MieCoefficients { a, b, n_max, size_parameter: x })
}

fn check(x: f64, m: Complex64) -> Result<(), ScattererError> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(ScattererError::NonPositiveSize(x));
    }
    if !(m.re > 0.0) || !m.is_finite() {
        return Err(ScattererError::InvalidIndex(m));
    }
    Ok(())
}

/// `a_n`, `b_n` for `n = 1..=n_max`. Orders where `χ_n(x)` exceeds 1e100 are
/// set to zero, which they are to far below double precision.
fn series(x: f64, m: Complex64, n_max: usize) -> (Vec<Complex64>, Vec<Complex64>) {
    let zero = Complex64::new(0.0, 0.0);
    let mx = m * x;
    let n_start = (n_max as f64).max(mx.norm()).ceil() as usize + 15;

    let mut d = vec![zero; n_start + 1];
    for n in (1..=n_start).rev() {
        let nf = n as f64;
        d[n - 1] = nf / mx - 1.0 / (d[n] + nf / mx);
    }

    let mut a = vec![zero; n_max];
    let mut b = vec![zero; n_max];
    // ψ_{-1} = cos x, ψ_0 = sin x; χ_{-1} = −sin x, χ_0 = cos x; ξ = ψ − iχ
    let (mut psi0, mut psi1) = (x.cos(), x.sin());
    let (mut chi0, mut chi1) = (-x.sin(), x.cos());
    for n in 1..=n_max {
        let nf = n as f64;
        let psi = (2.0 * nf - 1.0) * psi1 / x - psi0;
        let chi = (2.0 * nf - 1.0) * chi1 / x - chi0;
        if chi.abs() > 1e100 {
            break;
        }
        let (xi, xi1) = (Complex64::new(psi, -chi), Complex64::new(psi1, -chi1));
        let da = d[n] / m + nf / x;
        let db = d[n] * m + nf / x;
        a[n - 1] = (da * psi - psi1) / (da * xi - xi1);
        b[n - 1] = (db * psi - psi1) / (db * xi - xi1);
        psi0 = psi1;
        psi1 = psi;
        chi0 = chi1;
        chi1 = chi;
    }
    (a, b)
}

impl MieCoefficients {
    /// Extinction efficiency `(2/x²) Σ (2n+1) Re(a_n + b_n)`.
    pub fn q_ext(&self) -> f64 {
        let s: f64 = self
            .a
            .iter()
            .zip(&self.b)
            .enumerate()
            .map(|(i, (a, b))| (2 * i + 3) as f64 * (a + b).re)
            .sum();
        2.0 * s / (self.size_parameter * self.size_parameter)
    }

    /// Scattering efficiency `(2/x²) Σ (2n+1)(|a_n|² + |b_n|²)`.
    pub fn q_sca(&self) -> f64 {
        let s: f64 = self
            .a
            .iter()
            .zip(&self.b)
            .enumerate()
            .map(|(i, (a, b))| (2 * i + 3) as f64 * (a.norm_sqr() + b.norm_sqr()))
            .sum();
        2.0 * s / (self.size_parameter * self.size_parameter)
    }

    /// Amplitude functions `(S1, S2)` at `cos θ = mu`.
    pub fn amplitudes(&self, mu: f64) -> (Complex64, Complex64) {
        let (mut pi0, mut pi1) = (0.0, 1.0);
        let mut s1 = Complex64::new(0.0, 0.0);
        let mut s2 = Complex64::new(0.0, 0.0);
        for n in 1..=self.n_max {
            let nf = n as f64;
            let tau = nf * mu * pi1 - (nf + 1.0) * pi0;
            let f = (2.0 * nf + 1.0) / (nf * (nf + 1.0));
            let (a, b) = (self.a[n - 1], self.b[n - 1]);
            s1 += f * (a * pi1 + b * tau);
            s2 += f * (a * tau + b * pi1);
            let next = ((2.0 * nf + 1.0) * mu * pi1 - (nf + 1.0) * pi0) / nf;
            pi0 = pi1;
            pi1 = next;
        }
        (s1, s2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MieSphere {
    /// Lateral centre in output-grid pixels.
    pub x: f64,
    pub y: f64,
    /// Height above the focal plane (µm).
    pub z: f64,
    /// Radius (µm).
    pub radius: f64,
    /// Absolute refractive index of the sphere.
    pub refractive_index: Complex64,
}

impl MieSphere {
    pub fn size_parameter(&self, cfg: &OpticalConfig) -> f64 {
        2.0 * PI * cfg.n_medium * self.radius / cfg.wavelength
    }

    pub fn coefficients(&self, cfg: &OpticalConfig) -> Result<MieCoefficients, ScattererError> {
        if !(self.radius > 0.0) {
            return Err(ScattererError::NonPositiveSize(self.radius));
        }
        mie_coefficients(self.size_parameter(cfg), self.refractive_index / cfg.n_medium)
    }
}

/// Angular spectrum of the scattered field on the simulation grid, in the
/// scalar unpolarised approximation `S = (S1 + S2)/2`, restricted to the
/// collection cone of the objective.
///
/// The array is normalised so that its inverse FFT is the scattered field at
/// the focal plane relative to a unit illumination. The lateral position
/// enters as a linear phase ramp and the height `z` as the angular-spectrum
/// phase `exp(i·z·(k − k_z))`.
pub fn mie_pupil_field(s: &MieSphere, cfg: &OpticalConfig) -> Result<Array2<Complex64>, ScattererError> {
    let coeffs = s.coefficients(cfg)?;
    let grid = cfg.sim_grid();
    Ok(mie_field_on_grid(s, &coeffs, cfg, &grid))
}

pub(crate) fn mie_field_on_grid(s: &MieSphere, coeffs: &MieCoefficients, cfg: &OpticalConfig, grid: &Grid) -> Array2<Complex64> {
    let (ky, kx) = (grid.ky(), grid.kx());
    let k = cfg.k_medium();
    let cutoff = cfg.cutoff().min(k);
    let dx = grid.pixel_um;
    let (x0, y0) = ((s.x + grid.origin.1) * dx, (s.y + grid.origin.0) * dx);
    let norm = -2.0 * PI / (k * dx * dx);
    Array2::from_shape_fn(grid.shape(), |(i, j)| {
        let kxy2 = kx[j] * kx[j] + ky[i] * ky[i];
        if kxy2 > cutoff * cutoff {
            return Complex64::new(0.0, 0.0);
        }
        let kz = (k * k - kxy2).sqrt();
        let (s1, s2) = coeffs.amplitudes(kz / k);
        let amp = 0.5 * (s1 + s2) * (norm / kz);
        let phase = -(kx[j] * x0 + ky[i] * y0) + s.z * (k - kz);
        amp * Complex64::from_polar(1.0, phase)
    })
}
