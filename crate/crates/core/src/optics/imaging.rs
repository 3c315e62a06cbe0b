use std::collections::BTreeMap;

use ndarray::Array2;
use num_complex::Complex64;

use super::config::OpticalConfig;
use super::fft::{fft2, ifft2_inplace};
use super::pupil::{otf, Pupil};
use super::OpticsError;
use crate::pipeline::{Plane, TaggedImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoherentMode {
    Brightfield,
    OffAxisHolography,
    InlineHolography,
}

impl CoherentMode {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "brightfield" => CoherentMode::Brightfield,
            "offaxis" | "offaxis_holography" => CoherentMode::OffAxisHolography,
            "inline" | "inline_holography" => CoherentMode::InlineHolography,
            _ => return None,
        })
    }
}

/// Axial position of the object carried by `img`: the first record with a
/// numeric `z`, or 0.
pub fn source_z(img: &TaggedImage) -> f64 {
    img.records.iter().find_map(|r| r.number("z")).unwrap_or(0.0)
}

/// Spectrum of an image on the simulation grid.
pub fn spectrum(img: &TaggedImage, cfg: &OpticalConfig) -> Result<Array2<Complex64>, OpticsError> {
    let shape = cfg.sim_shape();
    if img.shape() != [shape.0, shape.1] {
        return Err(OpticsError::ShapeMismatch { expected: vec![shape.0, shape.1], found: img.shape().to_vec() });
    }
    let a: Array2<Complex64> = img
        .data
        .to_complex()
        .into_dimensionality()
        .map_err(|_| OpticsError::ShapeMismatch { expected: vec![shape.0, shape.1], found: img.shape().to_vec() })?;
    Ok(match img.plane {
        Plane::Frequency => a,
        Plane::Spatial => fft2(&a),
    })
}

fn group_by_z(
    inputs: &[&TaggedImage],
    cfg: &OpticalConfig,
    mut filter: impl FnMut(&TaggedImage, &mut Array2<Complex64>),
) -> Result<BTreeMap<u64, (f64, Array2<Complex64>)>, OpticsError> {
    let mut groups: BTreeMap<u64, (f64, Array2<Complex64>)> = BTreeMap::new();
    for img in inputs {
        let mut s = spectrum(img, cfg)?;
        filter(img, &mut s);
        let z = source_z(img);
        match groups.get_mut(&z.to_bits()) {
            Some((_, acc)) => *acc += &s,
            None => {
                groups.insert(z.to_bits(), (z, s));
            }
        }
    }
    Ok(groups)
}

/// Incoherent imaging over the full simulation plane. Each source is
/// convolved with the PSF for its axial position; sub-pixel positions are
/// carried exactly by the sources' spectra.
pub fn fluorescence_plane(inputs: &[&TaggedImage], cfg: &OpticalConfig, pupil: &Pupil) -> Result<Array2<f64>, OpticsError> {
    let shape = cfg.sim_shape();
    let mut total = Array2::<Complex64>::zeros(shape);
    for (_, (z, spec)) in group_by_z(inputs, cfg, |_, _| {})? {
        let transfer = otf(&pupil.defocused(cfg, z));
        total.zip_mut_with(&(spec * transfer), |t, v| *t += *v);
    }
    ifft2_inplace(&mut total);
    Ok(total.mapv(|v| v.re))
}

/// Fluorescence image cropped to the output grid.
pub fn image_fluorescence(inputs: &[&TaggedImage], cfg: &OpticalConfig, pupil: &Pupil) -> Result<Array2<f64>, OpticsError> {
    Ok(cfg.crop(&fluorescence_plane(inputs, cfg, pupil)?))
}

/// Scattered field on the simulation plane after pupil filtering.
///
/// Frequency-plane inputs are used as they are (they already carry their
/// axial phase); spatial inputs are moved to their `z` with the
/// angular-spectrum phase before filtering.
pub fn scattered_plane(inputs: &[&TaggedImage], cfg: &OpticalConfig, pupil: &Pupil) -> Result<Array2<Complex64>, OpticsError> {
    let grid = pupil.grid;
    let (ky, kx) = (grid.ky(), grid.kx());
    let k = cfg.k_medium();
    let mut total = Array2::<Complex64>::zeros(cfg.sim_shape());
    let groups = group_by_z(inputs, cfg, |img, s| {
        let z = source_z(img);
        if img.plane == Plane::Spatial && z != 0.0 {
            axial_phase(s, &kx, &ky, k, z);
        }
    })?;
    for (_, (_, spec)) in groups {
        total += &spec;
    }
    total.zip_mut_with(&pupil.values, |t, p| *t *= *p);
    ifft2_inplace(&mut total);
    Ok(total)
}

/// Multiplies a spectrum by `exp(i·z·(k − k_z))`, the field at the focal
/// plane of an object at height `z`, relative to the illumination.
fn axial_phase(s: &mut Array2<Complex64>, kx: &[f64], ky: &[f64], k: f64, z: f64) {
    for ((i, j), v) in s.indexed_iter_mut() {
        let kxy2 = kx[j] * kx[j] + ky[i] * ky[i];
        if kxy2 < k * k {
            *v *= Complex64::from_polar(1.0, z * (k - (k * k - kxy2).sqrt()));
        } else {
            *v *= (-z.abs() * (kxy2 - k * k).sqrt()).exp();
        }
    }
}

/// Total field `E = 1 + Σ E_s` on the output grid.
pub fn coherent_field(inputs: &[&TaggedImage], cfg: &OpticalConfig, pupil: &Pupil) -> Result<Array2<Complex64>, OpticsError> {
    let scattered = scattered_plane(inputs, cfg, pupil)?;
    Ok(cfg.crop(&scattered).mapv(|v| v + Complex64::new(1.0, 0.0)))
}

/// Output of coherent imaging: complex for off-axis holography, intensity otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum CoherentImage {
    Field(Array2<Complex64>),
    Intensity(Array2<f64>),
}

pub fn image_coherent(
    inputs: &[&TaggedImage],
    cfg: &OpticalConfig,
    pupil: &Pupil,
    mode: CoherentMode,
) -> Result<CoherentImage, OpticsError> {
    let field = coherent_field(inputs, cfg, pupil)?;
    Ok(match mode {
        CoherentMode::OffAxisHolography => CoherentImage::Field(field),
        CoherentMode::Brightfield | CoherentMode::InlineHolography => {
            CoherentImage::Intensity(field.mapv(|v| v.norm_sqr()))
        }
    })
}
