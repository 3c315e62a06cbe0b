use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;

use super::ellipse::bounds;
use crate::optics::Grid;

/// A smooth, irregular cell-like intensity blob.
///
/// The shape is a soft union of `lobes` elliptical lobes whose centres are
/// jittered by up to `texture`·0.35 of the semi-axes. The boundary is a
/// logistic step of steepness `sharpness` on the level set of the combined
/// lobe density, and the interior is modulated by band-limited noise of
/// relative amplitude `texture`·0.5. With `texture = 0` the blob reduces to a
/// soft-edged ellipse that approaches [`rasterize_ellipse`] as `sharpness`
/// grows.
///
/// [`rasterize_ellipse`]: super::rasterize_ellipse
#[derive(Debug, Clone, PartialEq)]
pub struct CellBlob {
    /// Centroid in output-grid pixels.
    pub x: f64,
    pub y: f64,
    /// Semi-axes (µm).
    pub a: f64,
    pub b: f64,
    pub rotation: f64,
    pub sharpness: f64,
    /// Irregularity in `[0, 1]`.
    pub texture: f64,
    pub lobes: usize,
    /// Peak intensity.
    pub value: f64,
}

const SUPERSAMPLE: usize = 4;
const NOISE_WAVES: usize = 8;

struct Lobe {
    u: f64,
    v: f64,
    weight: f64,
}

struct Wave {
    ku: f64,
    kv: f64,
    phase: f64,
}

/// Renders `blob` on `grid`. All randomness is drawn from `rng`.
pub fn synth_cell_blob<R: Rng + ?Sized>(blob: &CellBlob, grid: &Grid, rng: &mut R) -> Array2<f64> {
    let a = blob.a.abs().max(1e-9) / grid.pixel_um;
    let b = blob.b.abs().max(1e-9) / grid.pixel_um;
    let texture = blob.texture.clamp(0.0, 1.0);
    let sharpness = blob.sharpness.max(1e-3);
    let jitter = 0.35 * texture;

    let n_lobes = blob.lobes.max(1);
    let lobes: Vec<Lobe> = (0..n_lobes)
        .map(|_| {
            let r = jitter * rng.random::<f64>().sqrt();
            let t = rng.random::<f64>() * 2.0 * PI;
            Lobe { u: r * t.cos(), v: r * t.sin(), weight: 0.5 + rng.random::<f64>() }
        })
        .collect();
    let total_weight: f64 = lobes.iter().map(|l| l.weight).sum();
    // band-limited texture: wavelengths between one and two short semi-axes
    let waves: Vec<Wave> = (0..NOISE_WAVES)
        .map(|_| {
            let k = PI / a.min(b) * (1.0 + rng.random::<f64>());
            let t = rng.random::<f64>() * 2.0 * PI;
            Wave { ku: k * t.cos(), kv: k * t.sin(), phase: rng.random::<f64>() * 2.0 * PI }
        })
        .collect();
    let noise_amp = 0.5 * texture * (2.0 / NOISE_WAVES as f64).sqrt();

    let (sin, cos) = blob.rotation.sin_cos();
    let (cx, cy) = (blob.x + grid.origin.1, blob.y + grid.origin.0);
    let value_at = |x: f64, y: f64| {
        let (dx, dy) = (x - cx, y - cy);
        let u = cos * dx + sin * dy;
        let v = -sin * dx + cos * dy;
        let (un, vn) = (u / a, v / b);
        let density: f64 = lobes
            .iter()
            .map(|l| l.weight * (-0.5 * ((un - l.u).powi(2) + (vn - l.v).powi(2))).exp())
            .sum::<f64>()
            / total_weight;
        let level = -2.0 * density.max(1e-300).ln();
        let inside = 1.0 / (1.0 + (sharpness * (level - 1.0)).exp());
        if noise_amp == 0.0 {
            return inside;
        }
        let n: f64 = waves.iter().map(|w| (w.ku * u + w.kv * v + w.phase).cos()).sum();
        inside * (1.0 + noise_amp * n).max(0.0)
    };

    // logistic tail below e^-36 beyond level 1 + 36/sharpness
    let reach = (1.0 + jitter) * (1.0 + 36.0 / sharpness).sqrt();
    let r = a.max(b) * reach + 1.0;
    let rows = bounds(cy - r, cy + r, grid.height);
    let cols = bounds(cx - r, cx + r, grid.width);
    let mut out = Array2::zeros(grid.shape());
    let n = SUPERSAMPLE;
    for i in rows.0..rows.1 {
        for j in cols.0..cols.1 {
            let mut acc = 0.0;
            for si in 0..n {
                let y = i as f64 - 0.5 + (si as f64 + 0.5) / n as f64;
                for sj in 0..n {
                    let x = j as f64 - 0.5 + (sj as f64 + 0.5) / n as f64;
                    acc += value_at(x, y);
                }
            }
            out[[i, j]] = blob.value * acc / (n * n) as f64;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scatterers::{rasterize_ellipse, EllipseScatterer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec() -> CellBlob {
        CellBlob { x: 40.2, y: 39.7, a: 2.0, b: 1.2, rotation: 0.6, sharpness: 6.0, texture: 0.6, lobes: 5, value: 1.0 }
    }

    #[test]
    fn sharp_smooth_blob_approaches_ellipse() {
        let grid = Grid::new(80, 80, 0.1);
        let blob = CellBlob { sharpness: 400.0, texture: 0.0, ..spec() };
        let img = synth_cell_blob(&blob, &grid, &mut ChaCha8Rng::seed_from_u64(1));
        let e = EllipseScatterer { x: blob.x, y: blob.y, z: 0.0, a: blob.a, b: blob.b, rotation: blob.rotation, value: 1.0 };
        let reference = rasterize_ellipse(&e, &grid).unwrap();
        let diff = (&img - &reference).mapv(|v| v * v).sum().sqrt();
        let norm = reference.mapv(|v| v * v).sum().sqrt();
        assert!(diff / norm <= 0.05, "relative rms {}", diff / norm);
    }

    #[test]
    fn deterministic_for_equal_seeds() {
        let grid = Grid::new(80, 80, 0.1);
        let a = synth_cell_blob(&spec(), &grid, &mut ChaCha8Rng::seed_from_u64(9));
        let b = synth_cell_blob(&spec(), &grid, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        let c = synth_cell_blob(&spec(), &grid, &mut ChaCha8Rng::seed_from_u64(10));
        assert_ne!(a, c);
    }
}
