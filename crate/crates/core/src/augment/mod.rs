//! Transform features: background, noise, and geometric augmentation.
//!
//! Geometric transforms imprint enough of their state (centre, field seed,
//! window) that [`GeometricOp::from_record`] rebuilds the identical map, so
//! labels derived from the same records stay aligned with the image.

mod filter;
mod geometry;
mod noise;

use rand::RngCore;
use thiserror::Error;

pub use filter::{gaussian_filter, gaussian_kernel};
pub use geometry::{
    sample_at, warp, AffineSpec, CropPadSpec, ElasticSpec, GeometricOp, Interp, Sample, ELASTIC_ALPHA, ELASTIC_SIGMA,
    GEOMETRIC_FEATURES,
};
pub use noise::{add_offset, gaussian_noise, poisson_noise, poisson_scale};

use crate::pipeline::{
    Feature, FeatureEnv, FeatureFailure, FeatureKind, ImageData, InstanceId, Plane, PropError, Props, RecordSet,
    Rendered, TaggedImage,
};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("Poisson noise needs non-negative input, found {0}")]
    NegativeInput(f64),
    #[error("affine map is singular (determinant {determinant})")]
    SingularTransform { determinant: f64 },
    #[error("parameter {name} is invalid: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("displacement field is {expected:?} but the image is {found:?}")]
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("geometric record lacks {0:?}")]
    IncompleteRecord(&'static str),
    #[error("arrays of rank {0} cannot be transformed")]
    UnsupportedRank(usize),
    #[error("{0} needs a spatial-domain image")]
    FrequencyPlane(&'static str),
    #[error("{0} needs a real image")]
    ComplexInput(&'static str),
    #[error(transparent)]
    Property(#[from] PropError),
}

/// Background level carried by an image: the sum of its `Offset` levels.
pub fn background_level(img: &TaggedImage) -> f64 {
    img.records_of("Offset").filter_map(|r| r.number("level")).sum()
}

/// Geometric transforms among `records` in application order. With `after`,
/// only transforms recorded after that instance are returned (objects added
/// later were never transformed by earlier ops).
pub fn geometry_chain(records: &RecordSet, after: Option<&InstanceId>) -> Result<Vec<GeometricOp>, AugmentError> {
    let mut started = after.is_none();
    let mut ops = Vec::new();
    for r in records.iter() {
        if !started {
            started = Some(r.instance()) == after;
            continue;
        }
        if let Some(op) = GeometricOp::from_record(r) {
            ops.push(op?);
        }
    }
    Ok(ops)
}

fn spatial<'a>(img: &'a TaggedImage, who: &'static str) -> Result<&'a ImageData, AugmentError> {
    if img.plane == Plane::Frequency {
        return Err(AugmentError::FrequencyPlane(who));
    }
    Ok(&img.data)
}

macro_rules! transform_feature {
    ($ty:ident, $name:literal) => {
        #[derive(Debug, Default)]
        pub struct $ty;

        impl Feature for $ty {
            fn type_name(&self) -> &str {
                $name
            }

            fn kind(&self) -> FeatureKind {
                FeatureKind::Transform
            }

            fn apply(&self, inputs: &[&TaggedImage], p: Props<'_>, env: &FeatureEnv<'_>) -> Result<Rendered, FeatureFailure> {
                Ok(self.transform(inputs[0], p, env)?)
            }
        }
    };
}

transform_feature!(Offset, "Offset");
transform_feature!(PoissonNoise, "Poisson");
transform_feature!(GaussianNoise, "Gaussian");
transform_feature!(Affine, "Affine");
transform_feature!(Elastic, "Elastic");
transform_feature!(CropPad, "CropPad");

impl Offset {
    fn transform(&self, img: &TaggedImage, p: Props<'_>, _: &FeatureEnv<'_>) -> Result<Rendered, AugmentError> {
        Ok(Rendered::new(add_offset(spatial(img, "Offset")?, p.num("level")?)))
    }
}

impl PoissonNoise {
    fn transform(&self, img: &TaggedImage, p: Props<'_>, env: &FeatureEnv<'_>) -> Result<Rendered, AugmentError> {
        let ImageData::Real(a) = spatial(img, "Poisson")? else {
            return Err(AugmentError::ComplexInput("Poisson"));
        };
        let scale = match p.get("scale") {
            Some(_) => p.num("scale")?,
            None => {
                let snr = p.num("snr")?;
                if !(snr > 0.0) {
                    return Err(AugmentError::InvalidParameter { name: "snr", value: snr });
                }
                let peak = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                poisson_scale(peak, background_level(img), snr)
            }
        };
        let out = poisson_noise(a, scale, &mut env.item_rng("noise"))?;
        Ok(Rendered::new(ImageData::Real(out)).with_derived("scale", scale))
    }
}

impl GaussianNoise {
    fn transform(&self, img: &TaggedImage, p: Props<'_>, env: &FeatureEnv<'_>) -> Result<Rendered, AugmentError> {
        let out = gaussian_noise(spatial(img, "Gaussian")?, p.num("sigma")?, &mut env.item_rng("noise"))?;
        Ok(Rendered::new(out))
    }
}

fn shape2(data: &ImageData) -> (usize, usize) {
    let s = data.shape();
    (s[0], s.get(1).copied().unwrap_or(1))
}

fn interp(p: Props<'_>) -> Result<Interp, AugmentError> {
    Ok(match p.text_or("interpolation", "bilinear")? {
        "nearest" => Interp::Nearest,
        _ => Interp::Bilinear,
    })
}

impl Affine {
    fn transform(&self, img: &TaggedImage, p: Props<'_>, _: &FeatureEnv<'_>) -> Result<Rendered, AugmentError> {
        let data = spatial(img, "Affine")?;
        let op = GeometricOp::affine(AffineSpec::from_props(p)?, shape2(data));
        let fill = p.num_or("fill", background_level(img))?;
        let out = op.apply(data, fill, interp(p)?)?;
        let GeometricOp::Affine { centre, .. } = op else { unreachable!() };
        Ok(Rendered::new(out).with_derived("centre_x", centre.1).with_derived("centre_y", centre.0))
    }
}

impl Elastic {
    fn transform(&self, img: &TaggedImage, p: Props<'_>, env: &FeatureEnv<'_>) -> Result<Rendered, AugmentError> {
        let data = spatial(img, "Elastic")?;
        let spec = ElasticSpec {
            alpha: p.num_or("alpha", ELASTIC_ALPHA)?,
            sigma: p.num_or("sigma", ELASTIC_SIGMA)?,
            seed: match p.get("seed") {
                Some(_) => p.num("seed")? as u64,
                None => u64::from(env.rng("field").next_u32()),
            },
        };
        if !(spec.alpha >= 0.0) {
            return Err(AugmentError::InvalidParameter { name: "alpha", value: spec.alpha });
        }
        if !(spec.sigma > 0.0) {
            return Err(AugmentError::InvalidParameter { name: "sigma", value: spec.sigma });
        }
        let shape = shape2(data);
        let fill = p.num_or("fill", background_level(img))?;
        let out = GeometricOp::elastic(spec, shape).apply(data, fill, interp(p)?)?;
        Ok(Rendered::new(out)
            .with_derived("field_seed", spec.seed as f64)
            .with_derived("input_height", shape.0 as f64)
            .with_derived("input_width", shape.1 as f64))
    }
}

impl CropPad {
    fn transform(&self, img: &TaggedImage, p: Props<'_>, _: &FeatureEnv<'_>) -> Result<Rendered, AugmentError> {
        let data = spatial(img, "CropPad")?;
        let (h, w) = shape2(data);
        let spec = CropPadSpec {
            top: p.num_or("top", 0.0)?.round() as i64,
            left: p.num_or("left", 0.0)?.round() as i64,
            height: p.num_or("height", h as f64)?.round().max(1.0) as usize,
            width: p.num_or("width", w as f64)?.round().max(1.0) as usize,
        };
        let fill = p.num_or("fill", background_level(img))?;
        let out = GeometricOp::CropPad(spec).apply(data, fill, Interp::Nearest)?;
        Ok(Rendered::new(out)
            .with_derived("top", spec.top as f64)
            .with_derived("left", spec.left as f64)
            .with_derived("height", spec.height as f64)
            .with_derived("width", spec.width as f64))
    }
}
