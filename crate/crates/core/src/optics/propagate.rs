use ndarray::{s, Array2};
use num_complex::Complex64;

use super::config::{Grid, OpticalConfig};
use super::fft::{fft2, ifft2_inplace};
use super::OpticsError;

/// Angular-spectrum transfer function for distance `z` on `grid`.
/// Propagating components get `exp(i·z·k_z)`; evanescent ones decay as
/// `exp(−|z|·κ)`.
pub fn transfer_function(grid: &Grid, k: f64, z: f64) -> Array2<Complex64> {
    let (ky, kx) = (grid.ky(), grid.kx());
    Array2::from_shape_fn(grid.shape(), |(i, j)| {
        let kxy2 = kx[j] * kx[j] + ky[i] * ky[i];
        if kxy2 <= k * k {
            Complex64::from_polar(1.0, z * (k * k - kxy2).sqrt())
        } else {
            Complex64::new((-z.abs() * (kxy2 - k * k).sqrt()).exp(), 0.0)
        }
    })
}

/// Propagates `field` (sampled at the object-plane pitch of `cfg`) by `z` µm.
/// The field is treated as periodic over its own extent.
pub fn propagate(field: &Array2<Complex64>, z: f64, cfg: &OpticalConfig) -> Array2<Complex64> {
    if z == 0.0 {
        return field.clone();
    }
    let (h, w) = field.dim();
    let grid = Grid::new(h, w, cfg.object_pixel());
    let mut spec = fft2(field);
    spec *= &transfer_function(&grid, cfg.k_medium(), z);
    ifft2_inplace(&mut spec);
    spec
}

/// Propagates a non-periodic crop: edge-replicates to the next power of two
/// at least `pad` pixels larger on each side, propagates, and crops back.
pub fn propagate_padded(field: &Array2<Complex64>, z: f64, cfg: &OpticalConfig, pad: usize) -> Array2<Complex64> {
    let (h, w) = field.dim();
    let (ph, pw) = ((h + 2 * pad).next_power_of_two(), (w + 2 * pad).next_power_of_two());
    let (oy, ox) = ((ph - h) / 2, (pw - w) / 2);
    let padded = Array2::from_shape_fn((ph, pw), |(i, j)| {
        let si = (i as isize - oy as isize).clamp(0, h as isize - 1) as usize;
        let sj = (j as isize - ox as isize).clamp(0, w as isize - 1) as usize;
        field[[si, sj]]
    });
    propagate(&padded, z, cfg).slice(s![oy..oy + h, ox..ox + w]).to_owned()
}

/// Total power of the propagating band, computed in the frequency domain.
pub fn propagating_power(field: &Array2<Complex64>, cfg: &OpticalConfig) -> f64 {
    let (h, w) = field.dim();
    let grid = Grid::new(h, w, cfg.object_pixel());
    let (ky, kx) = (grid.ky(), grid.kx());
    let k2 = cfg.k_medium().powi(2);
    fft2(field)
        .indexed_iter()
        .filter(|((i, j), _)| kx[*j] * kx[*j] + ky[*i] * ky[*i] <= k2)
        .map(|(_, v)| v.norm_sqr())
        .sum::<f64>()
        / (h * w) as f64
}

/// Focus metrics. Larger is sharper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FocusMetric {
    /// Negative Tamura coefficient `−√(σ/μ)` of the field amplitude.
    #[default]
    NegativeTamura,
    /// Tamura coefficient of the scattered amplitude `|E − mean(E)|`.
    ScatteredTamura,
}

impl FocusMetric {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "negative_tamura" => Some(FocusMetric::NegativeTamura),
            "scattered_tamura" => Some(FocusMetric::ScatteredTamura),
            _ => None,
        }
    }

    pub fn evaluate(self, field: &Array2<Complex64>) -> Option<f64> {
        let amplitude: Vec<f64> = match self {
            FocusMetric::NegativeTamura => field.iter().map(|v| v.norm()).collect(),
            FocusMetric::ScatteredTamura => {
                let mean = field.mean().unwrap_or_default();
                field.iter().map(|v| (v - mean).norm()).collect()
            }
        };
        let n = amplitude.len() as f64;
        let mu = amplitude.iter().sum::<f64>() / n;
        let var = amplitude.iter().map(|a| (a - mu).powi(2)).sum::<f64>() / n;
        let sigma = var.sqrt();
        if !(mu > 0.0) || sigma <= 1e-12 * mu {
            return None;
        }
        let tamura = (sigma / mu).sqrt();
        Some(match self {
            FocusMetric::NegativeTamura => -tamura,
            FocusMetric::ScatteredTamura => tamura,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FocusWarning {
    /// The metric is constant over the range (no structure to focus on).
    FlatMetric,
}

#[derive(Debug, Clone)]
pub struct FocusResult {
    pub z: f64,
    pub field: Array2<Complex64>,
    /// `(z, metric)` for every searched plane.
    pub scores: Vec<(f64, f64)>,
    pub warning: Option<FocusWarning>,
}

/// Searches `steps` evenly spaced planes in `[z_min, z_max]` and returns the
/// one maximising `metric`.
pub fn autofocus(
    field: &Array2<Complex64>,
    cfg: &OpticalConfig,
    z_min: f64,
    z_max: f64,
    steps: usize,
    metric: FocusMetric,
) -> Result<FocusResult, OpticsError> {
    if steps == 0 || !(z_min <= z_max) || !z_min.is_finite() || !z_max.is_finite() {
        return Err(OpticsError::EmptyRange);
    }
    let zs: Vec<f64> = if steps == 1 {
        vec![0.5 * (z_min + z_max)]
    } else {
        (0..steps).map(|i| z_min + (z_max - z_min) * i as f64 / (steps - 1) as f64).collect()
    };
    let spec = fft2(field);
    let (h, w) = field.dim();
    let grid = Grid::new(h, w, cfg.object_pixel());
    let mut scores = Vec::with_capacity(zs.len());
    let mut best: Option<(f64, f64)> = None;
    for &z in &zs {
        let mut s = &spec * &transfer_function(&grid, cfg.k_medium(), z);
        ifft2_inplace(&mut s);
        let score = metric.evaluate(&s).unwrap_or(f64::NEG_INFINITY);
        scores.push((z, score));
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((z, score));
        }
    }
    let finite: Vec<f64> = scores.iter().map(|s| s.1).filter(|v| v.is_finite()).collect();
    let flat = finite.is_empty() || {
        let (lo, hi) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        hi - lo <= 1e-12 * hi.abs().max(1e-300)
    };
    let (z, warning) = if flat {
        log::warn!("autofocus: focus metric is flat over [{z_min}, {z_max}]");
        (0.5 * (z_min + z_max), Some(FocusWarning::FlatMetric))
    } else {
        (best.expect("at least one step").0, None)
    };
    Ok(FocusResult { z, field: propagate(field, z, cfg), scores, warning })
}
