//! Imaging of scatterer lists through simulated instruments.

mod config;
pub mod fft;
mod imaging;
mod propagate;
mod pupil;

use ndarray::Array2;
use num_complex::Complex64;
use thiserror::Error;

pub use config::{Grid, OpticalConfig};
pub use imaging::{
    coherent_field, fluorescence_plane, image_coherent, image_fluorescence, scattered_plane, source_z, spectrum,
    CoherentImage, CoherentMode,
};
pub use propagate::{
    autofocus, propagate, propagate_padded, propagating_power, transfer_function, FocusMetric, FocusResult,
    FocusWarning,
};
pub use pupil::{coherent_psf, incoherent_psf, make_pupil, otf, pupil_on_grid, zernike, Aberration, Pupil};

use crate::pipeline::{Feature, FeatureEnv, FeatureFailure, FeatureKind, ImageData, Props, Rendered, TaggedImage};

#[derive(Debug, Error)]
pub enum OpticsError {
    #[error("NA must satisfy 0 < NA < n_medium (NA = {na}, n_medium = {n_medium})")]
    InvalidNA { na: f64, n_medium: f64 },
    #[error("optical parameter {name} must be positive and finite, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("array shape {found:?} does not match the simulation grid {expected:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error("empty focus search range")]
    EmptyRange,
    #[error("unknown imaging mode {0:?}")]
    UnknownMode(String),
}

/// Aberrations read from the standard optics properties.
pub fn aberrations_from(props: Props<'_>) -> Result<Vec<Aberration>, FeatureFailure> {
    let mut out = Vec::new();
    for (key, make) in [
        ("defocus", Aberration::defocus as fn(f64) -> Aberration),
        ("coma_x", Aberration::coma_x),
        ("coma_y", Aberration::coma_y),
        ("spherical", Aberration::spherical),
    ] {
        let c = props.num_or(key, 0.0)?;
        if c != 0.0 {
            out.push(make(c));
        }
    }
    Ok(out)
}

/// Incoherent fluorescence microscope.
#[derive(Debug, Default)]
pub struct Fluorescence;

impl Feature for Fluorescence {
    fn type_name(&self) -> &str {
        "Fluorescence"
    }

    fn kind(&self) -> FeatureKind {
        FeatureKind::Merge
    }

    fn apply(&self, inputs: &[&TaggedImage], props: Props<'_>, env: &FeatureEnv<'_>) -> Result<Rendered, FeatureFailure> {
        let pupil = make_pupil(env.optics, &aberrations_from(props)?)?;
        let img = image_fluorescence(inputs, env.optics, &pupil)?;
        Ok(Rendered::new(ImageData::real2(img)))
    }
}

/// Coherent microscope: brightfield, off-axis or in-line holography.
#[derive(Debug)]
pub struct Coherent {
    name: &'static str,
    fixed_mode: Option<CoherentMode>,
}

impl Coherent {
    pub fn brightfield() -> Self {
        Coherent { name: "Brightfield", fixed_mode: Some(CoherentMode::Brightfield) }
    }

    /// Mode chosen by the `mode` property (`offaxis` or `inline`).
    pub fn holography() -> Self {
        Coherent { name: "Holography", fixed_mode: None }
    }
}

impl Feature for Coherent {
    fn type_name(&self) -> &str {
        self.name
    }

    fn kind(&self) -> FeatureKind {
        FeatureKind::Merge
    }

    fn apply(&self, inputs: &[&TaggedImage], props: Props<'_>, env: &FeatureEnv<'_>) -> Result<Rendered, FeatureFailure> {
        let mode = match self.fixed_mode {
            Some(m) => m,
            None => {
                let text = props.text_or("mode", "offaxis")?;
                CoherentMode::parse(text).ok_or_else(|| OpticsError::UnknownMode(text.to_string()))?
            }
        };
        let pupil = make_pupil(env.optics, &aberrations_from(props)?)?;
        Ok(Rendered::new(match image_coherent(inputs, env.optics, &pupil, mode)? {
            CoherentImage::Field(f) => ImageData::complex2(f),
            CoherentImage::Intensity(i) => ImageData::real2(i),
        }))
    }
}

/// Numerical refocusing of a complex field by `distance` µm.
#[derive(Debug, Default)]
pub struct Refocus;

impl Feature for Refocus {
    fn type_name(&self) -> &str {
        "Refocus"
    }

    fn kind(&self) -> FeatureKind {
        FeatureKind::Transform
    }

    fn apply(&self, inputs: &[&TaggedImage], props: Props<'_>, env: &FeatureEnv<'_>) -> Result<Rendered, FeatureFailure> {
        let field: Array2<Complex64> = inputs[0]
            .data
            .as_complex()
            .ok_or("Refocus expects a complex field")?
            .clone()
            .into_dimensionality()?;
        let z = props.num("distance")?;
        let pad = props.num_or("pad", 0.0)? as usize;
        let out = if pad > 0 { propagate_padded(&field, z, env.optics, pad) } else { propagate(&field, z, env.optics) };
        Ok(Rendered::new(ImageData::complex2(out)))
    }
}
