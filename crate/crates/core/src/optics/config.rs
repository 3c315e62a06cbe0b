use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::OpticsError;

/// The simulated instrument.
///
/// Lateral coordinates throughout the crate are in output-grid pixels with
/// pixel `(row, col)` centred at `(y, x) = (row, col)`. Lengths along the
/// optical axis and physical sizes are in micrometres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpticalConfig {
    #[serde(rename = "NA")]
    pub na: f64,
    /// Vacuum wavelength (µm).
    pub wavelength: f64,
    pub magnification: f64,
    /// Camera pixel pitch (µm).
    pub pixel_size: f64,
    pub n_medium: f64,
    /// Output grid `(height, width)` in pixels.
    pub grid: [usize; 2],
    /// Minimum simulation margin on each side (pixels).
    pub pad: usize,
}

impl Default for OpticalConfig {
    fn default() -> Self {
        OpticalConfig {
            na: 0.8,
            wavelength: 0.633,
            magnification: 10.0,
            pixel_size: 1.0,
            n_medium: 1.33,
            grid: [128, 128],
            pad: 32,
        }
    }
}

impl OpticalConfig {
    pub fn validate(&self) -> Result<(), OpticsError> {
        if !(self.na > 0.0 && self.na < self.n_medium) {
            return Err(OpticsError::InvalidNA { na: self.na, n_medium: self.n_medium });
        }
        let positive = [
            ("wavelength", self.wavelength),
            ("magnification", self.magnification),
            ("pixel_size", self.pixel_size),
            ("n_medium", self.n_medium),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(OpticsError::InvalidParameter { name, value: v });
            }
        }
        if self.grid[0] == 0 || self.grid[1] == 0 {
            return Err(OpticsError::InvalidParameter { name: "grid", value: 0.0 });
        }
        Ok(())
    }

    /// Warning text when the object-plane sampling is coarser than λ/(4·NA).
    pub fn sampling_warning(&self) -> Option<String> {
        let limit = self.wavelength / (4.0 * self.na);
        let dx = self.object_pixel();
        (dx > limit).then(|| format!("object-plane pixel {dx:.4} µm exceeds λ/(4·NA) = {limit:.4} µm"))
    }

    /// Object-plane pixel pitch (µm).
    pub fn object_pixel(&self) -> f64 {
        self.pixel_size / self.magnification
    }

    /// Wavenumber in the medium (rad/µm).
    pub fn k_medium(&self) -> f64 {
        2.0 * PI * self.n_medium / self.wavelength
    }

    /// Pupil cutoff NA·2π/λ (rad/µm).
    pub fn cutoff(&self) -> f64 {
        self.na * 2.0 * PI / self.wavelength
    }

    /// Padded simulation shape: next power of two ≥ grid + 2·pad per axis.
    pub fn sim_shape(&self) -> (usize, usize) {
        (
            (self.grid[0] + 2 * self.pad).next_power_of_two(),
            (self.grid[1] + 2 * self.pad).next_power_of_two(),
        )
    }

    /// Position of output pixel (0, 0) inside the simulation grid.
    pub fn sim_offset(&self) -> (usize, usize) {
        let (h, w) = self.sim_shape();
        ((h - self.grid[0]) / 2, (w - self.grid[1]) / 2)
    }

    pub fn sim_grid(&self) -> Grid {
        let (h, w) = self.sim_shape();
        let (oy, ox) = self.sim_offset();
        Grid { height: h, width: w, origin: (oy as f64, ox as f64), pixel_um: self.object_pixel() }
    }

    pub fn output_grid(&self) -> Grid {
        Grid { height: self.grid[0], width: self.grid[1], origin: (0.0, 0.0), pixel_um: self.object_pixel() }
    }

    /// Crops a simulation-plane array to the output grid.
    pub fn crop<T: Clone>(&self, sim: &Array2<T>) -> Array2<T> {
        let (oy, ox) = self.sim_offset();
        sim.slice(ndarray::s![oy..oy + self.grid[0], ox..ox + self.grid[1]]).to_owned()
    }
}

/// A sampling grid. `origin` is where output pixel (0, 0) sits in this
/// grid's index space, so output coordinate `x` maps to index `x + origin.1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
    pub origin: (f64, f64),
    pub pixel_um: f64,
}

impl Grid {
    pub fn new(height: usize, width: usize, pixel_um: f64) -> Self {
        Grid { height, width, origin: (0.0, 0.0), pixel_um }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Angular spatial frequencies (rad/µm) along one axis in FFT order.
    pub fn frequencies(n: usize, pixel_um: f64) -> Vec<f64> {
        let dk = 2.0 * PI / (n as f64 * pixel_um);
        (0..n)
            .map(|i| {
                let f = if i < n.div_ceil(2) { i as f64 } else { i as f64 - n as f64 };
                f * dk
            })
            .collect()
    }

    pub fn ky(&self) -> Vec<f64> {
        Self::frequencies(self.height, self.pixel_um)
    }

    pub fn kx(&self) -> Vec<f64> {
        Self::frequencies(self.width, self.pixel_um)
    }

    /// Frequency spacing (rad/µm) along (y, x).
    pub fn dk(&self) -> (f64, f64) {
        (
            2.0 * PI / (self.height as f64 * self.pixel_um),
            2.0 * PI / (self.width as f64 * self.pixel_um),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sim_shape_is_padded_power_of_two() {
        let cfg = OpticalConfig { grid: [128, 100], pad: 32, ..Default::default() };
        assert_eq!(cfg.sim_shape(), (256, 256));
        assert_eq!(cfg.sim_offset(), (64, 78));
        let cfg = OpticalConfig { grid: [64, 64], pad: 0, ..Default::default() };
        assert_eq!(cfg.sim_shape(), (64, 64));
    }

    #[test]
    fn validation() {
        assert!(OpticalConfig::default().validate().is_ok());
        let bad = OpticalConfig { na: 1.4, n_medium: 1.33, ..Default::default() };
        assert!(matches!(bad.validate(), Err(OpticsError::InvalidNA { .. })));
        let bad = OpticalConfig { wavelength: -1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(OpticalConfig::default().sampling_warning().is_none());
        let coarse = OpticalConfig { pixel_size: 5.0, ..Default::default() };
        assert!(coarse.sampling_warning().is_some());
    }

    #[test]
    fn fft_frequencies() {
        let k = Grid::frequencies(4, 1.0);
        let dk = 2.0 * PI / 4.0;
        assert_eq!(k, vec![0.0, dk, -2.0 * dk, -dk]);
        let k = Grid::frequencies(5, 1.0);
        assert_eq!(k.len(), 5);
        assert!(k[2] > 0.0 && k[3] < 0.0);
    }
}
