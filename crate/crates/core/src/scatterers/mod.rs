//! Append features that create sample objects on the simulation grid.
//!
//! Positions are in output-grid pixels, sizes and heights in µm. Spatial
//! scatterers (ellipses, blobs) are rasterised; point emitters and Mie
//! spheres are produced directly as spectra on the unshifted FFT grid, so
//! sub-pixel positions are exact phase ramps.

mod blob;
mod ellipse;
mod mie;

use ndarray::Array2;
use num_complex::Complex64;
use thiserror::Error;

pub use blob::{synth_cell_blob, CellBlob};
pub use ellipse::{rasterize_ellipse, EllipseScatterer};
pub use mie::{mie_coefficients, mie_coefficients_to, mie_pupil_field, truncation_order, MieCoefficients, MieSphere};

use crate::optics::Grid;
use crate::pipeline::{Feature, FeatureEnv, FeatureFailure, FeatureKind, ImageData, Props, Rendered, TaggedImage};

/// Refractive index of polystyrene used when none is configured.
pub const POLYSTYRENE_INDEX: f64 = 1.59;

#[derive(Debug, Error)]
pub enum ScattererError {
    #[error("ellipse semi-axes must be positive (a = {a}, b = {b})")]
    DegenerateAxis { a: f64, b: f64 },
    #[error("size must be positive and finite, got {0}")]
    NonPositiveSize(f64),
    #[error("intensity must be non-negative, got {0}")]
    NegativeIntensity(f64),
    #[error("refractive index must have a positive real part, got {0}")]
    InvalidIndex(Complex64),
}

/// Spectrum of a unit delta at output position `(x, y)` on `grid`.
pub fn point_spectrum(x: f64, y: f64, intensity: f64, grid: &Grid) -> Array2<Complex64> {
    let (ky, kx) = (grid.ky(), grid.kx());
    let dx = grid.pixel_um;
    let (x0, y0) = ((x + grid.origin.1) * dx, (y + grid.origin.0) * dx);
    let row: Vec<Complex64> = kx.iter().map(|k| Complex64::from_polar(1.0, -k * x0)).collect();
    let col: Vec<Complex64> = ky.iter().map(|k| Complex64::from_polar(intensity, -k * y0)).collect();
    Array2::from_shape_fn(grid.shape(), |(i, j)| col[i] * row[j])
}

#[derive(Debug, Default)]
pub struct Ellipse;

impl Feature for Ellipse {
    fn type_name(&self) -> &str {
        "Ellipse"
    }

    fn kind(&self) -> FeatureKind {
        FeatureKind::Append
    }

    fn apply(&self, _: &[&TaggedImage], p: Props<'_>, env: &FeatureEnv<'_>) -> Result<Rendered, FeatureFailure> {
        let e = EllipseScatterer {
            x: p.num("x")?,
            y: p.num("y")?,
            z: p.num_or("z", 0.0)?,
            a: p.num("a")?,
            b: p.num("b")?,
            rotation: p.num_or("rotation", 0.0)?,
            value: p.num_or("value", 1.0)?,
        };
        Ok(Rendered::new(ImageData::real2(rasterize_ellipse(&e, &env.optics.sim_grid())?)))
    }
}

#[derive(Debug, Default)]
pub struct PointEmitter;

impl Feature for PointEmitter {
    fn type_name(&self) -> &str {
        "PointEmitter"
    }

    fn kind(&self) -> FeatureKind {
        FeatureKind::Append
    }

    fn apply(&self, _: &[&TaggedImage], p: Props<'_>, env: &FeatureEnv<'_>) -> Result<Rendered, FeatureFailure> {
        let intensity = p.num_or("intensity", 1.0)?;
        if !(intensity >= 0.0) {
            return Err(ScattererError::NegativeIntensity(intensity).into());
        }
        let s = point_spectrum(p.num("x")?, p.num("y")?, intensity, &env.optics.sim_grid());
        Ok(Rendered::frequency(ImageData::complex2(s)))
    }
}

#[derive(Debug, Default)]
pub struct Mie;

impl Feature for Mie {
    fn type_name(&self) -> &str {
        "MieSphere"
    }

    fn kind(&self) -> FeatureKind {
        FeatureKind::Append
    }

    fn apply(&self, _: &[&TaggedImage], p: Props<'_>, env: &FeatureEnv<'_>) -> Result<Rendered, FeatureFailure> {
        let sphere = MieSphere {
            x: p.num("x")?,
            y: p.num("y")?,
            z: p.num_or("z", 0.0)?,
            radius: p.num("radius")?,
            refractive_index: Complex64::new(
                p.num_or("refractive_index", POLYSTYRENE_INDEX)?,
                p.num_or("refractive_index_imag", 0.0)?,
            ),
        };
        // resolved defaults are imprinted so targets can read them
        Ok(Rendered::frequency(ImageData::complex2(mie_pupil_field(&sphere, env.optics)?))
            .with_derived("refractive_index", sphere.refractive_index.re)
            .with_derived("refractive_index_imag", sphere.refractive_index.im))
    }
}

#[derive(Debug, Default)]
pub struct Blob;

impl Feature for Blob {
    fn type_name(&self) -> &str {
        "CellBlob"
    }

    fn kind(&self) -> FeatureKind {
        FeatureKind::Append
    }

    fn apply(&self, _: &[&TaggedImage], p: Props<'_>, env: &FeatureEnv<'_>) -> Result<Rendered, FeatureFailure> {
        let a = p.num("a")?;
        let b = p.num_or("b", a)?;
        if !(a > 0.0) || !(b > 0.0) {
            return Err(ScattererError::DegenerateAxis { a, b }.into());
        }
        let blob = CellBlob {
            x: p.num("x")?,
            y: p.num("y")?,
            a,
            b,
            rotation: p.num_or("rotation", 0.0)?,
            sharpness: p.num_or("sharpness", 8.0)?,
            texture: p.num_or("texture", 0.5)?,
            lobes: p.num_or("lobes", 5.0)?.round().clamp(1.0, 64.0) as usize,
            value: p.num_or("value", 1.0)?,
        };
        let grid = env.optics.sim_grid();
        let img = synth_cell_blob(&blob, &grid, &mut env.rng("shape"));
        let (cy, cx) = intensity_centroid(&img)
            .map(|(cy, cx)| (cy - grid.origin.0, cx - grid.origin.1))
            .unwrap_or((blob.y, blob.x));
        Ok(Rendered::new(ImageData::real2(img)).with_derived("centroid_x", cx).with_derived("centroid_y", cy))
    }
}

/// Intensity-weighted centroid `(y, x)` in index coordinates.
pub(crate) fn intensity_centroid(img: &Array2<f64>) -> Option<(f64, f64)> {
    let (mut m, mut my, mut mx) = (0.0, 0.0, 0.0);
    for ((i, j), &v) in img.indexed_iter() {
        m += v;
        my += v * i as f64;
        mx += v * j as f64;
    }
    (m > 0.0).then(|| (my / m, mx / m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::fft::ifft2;

    #[test]
    fn point_spectrum_is_a_delta_at_integer_positions() {
        let grid = Grid { height: 16, width: 32, origin: (4.0, 8.0), pixel_um: 0.2 };
        let img = ifft2(&point_spectrum(3.0, 2.0, 5.0, &grid));
        for ((i, j), v) in img.indexed_iter() {
            let expected = if (i, j) == (6, 11) { 5.0 } else { 0.0 };
            assert!((v.re - expected).abs() < 1e-12 && v.im.abs() < 1e-12);
        }
    }
}
