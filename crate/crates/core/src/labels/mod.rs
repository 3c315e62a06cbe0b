//! Ground-truth targets computed from imprinted records.
//!
//! Label features run in the label pipeline and read the records exported by
//! the image pipeline. Object positions are carried through every geometric
//! transform recorded after the object, so labels stay aligned with the
//! augmented image. Labels use no randomness of their own.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Array3};
use thiserror::Error;

use crate::augment::{geometry_chain, AugmentError, GeometricOp, Interp, GEOMETRIC_FEATURES};
use crate::optics::Grid;
use crate::pipeline::{
    Feature, FeatureEnv, FeatureFailure, FeatureKind, ImageData, PropError, PropertyRecord, Props, RecordSet,
    Rendered, SampleContext, TaggedImage,
};
use crate::scatterers::{rasterize_ellipse, synth_cell_blob, CellBlob, EllipseScatterer};

pub const DEFAULT_DISK_RADIUS: f64 = 3.0;
pub const DEFAULT_DENSITY_SIGMA: f64 = 10.0;
pub const DEFAULT_Z_RANGE: (f64, f64) = (2.0, 30.0);
pub const DEFAULT_DEPTH: usize = 32;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("record {instance} has no field {field:?}")]
    MissingField { instance: String, field: String },
    #[error("invalid label parameter {name}: {message}")]
    InvalidSpec { name: &'static str, message: String },
    #[error(transparent)]
    Geometry(#[from] AugmentError),
    #[error(transparent)]
    Property(#[from] PropError),
}

/// An object to label: its record and its position after augmentation.
#[derive(Debug, Clone)]
pub struct LabelObject {
    pub record: Arc<PropertyRecord>,
    /// Position in output-grid pixels after all later geometric transforms.
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Transforms applied to this object, in order.
    pub ops: Vec<GeometricOp>,
}

/// Objects among `records`: those named or typed `source`, or, without a
/// source, every non-geometric record with numeric `x` and `y`.
pub fn collect_objects(records: &RecordSet, source: Option<&str>) -> Result<Vec<LabelObject>, LabelError> {
    let mut out = Vec::new();
    for r in records.iter() {
        let selected = match source {
            Some(s) => r.name() == Some(s) || r.feature() == s,
            None => !GEOMETRIC_FEATURES.contains(&r.feature()) && r.number("x").is_some() && r.number("y").is_some(),
        };
        if !selected {
            continue;
        }
        let field = |f: &str| {
            r.number(f).ok_or_else(|| LabelError::MissingField { instance: r.instance().to_string(), field: f.into() })
        };
        let (mut x, mut y) = (field("x")?, field("y")?);
        let ops = geometry_chain(records, Some(r.instance()))?;
        for op in &ops {
            (x, y) = op.map_point(x, y);
        }
        out.push(LabelObject { record: r.clone(), x, y, z: r.number("z").unwrap_or(0.0), ops });
    }
    Ok(out)
}

/// Label grid shape: the output grid after every recorded crop/pad.
pub fn label_shape(records: &RecordSet, grid: (usize, usize)) -> Result<(usize, usize), LabelError> {
    Ok(geometry_chain(records, None)?.iter().fold(grid, |s, op| op.output_shape(s)))
}

/// 1 where a pixel centre lies within `radius` of any position, else 0.
pub fn disk_mask(positions: &[(f64, f64)], shape: (usize, usize), radius: f64) -> Array2<f64> {
    let mut out = Array2::zeros(shape);
    let r2 = radius * radius;
    for &(x, y) in positions {
        for i in span(y, radius, shape.0) {
            for j in span(x, radius, shape.1) {
                if (i as f64 - y).powi(2) + (j as f64 - x).powi(2) <= r2 {
                    out[[i, j]] = 1.0;
                }
            }
        }
    }
    out
}

fn span(c: f64, r: f64, n: usize) -> std::ops::Range<usize> {
    let lo = (c - r).ceil().max(0.0);
    let hi = ((c + r).floor() + 1.0).min(n as f64);
    if !(hi > lo) {
        return 0..0;
    }
    lo as usize..hi as usize
}

/// Axial slice of height `z` in a `depth`-slice volume over `[z_min, z_max]`,
/// clamped into range (`clamped` reports whether that was needed).
pub fn z_slice(z: f64, z_min: f64, z_max: f64, depth: usize) -> (f64, bool) {
    let d = ((z - z_min) / (z_max - z_min) * (depth - 1) as f64).round();
    let c = d.clamp(0.0, (depth - 1) as f64);
    (c, c != d)
}

/// Binary `(height, width, depth)` volume with a ball of `radius` voxels
/// around each `(x, y, z)`; balls are clipped at the borders.
pub fn sphere_volume(
    points: &[(f64, f64, f64)],
    shape: (usize, usize),
    radius: f64,
    z_min: f64,
    z_max: f64,
    depth: usize,
) -> Result<Array3<f64>, LabelError> {
    if !(radius > 0.0) {
        return Err(LabelError::InvalidSpec { name: "radius", message: format!("must be positive, got {radius}") });
    }
    if !(z_max > z_min) {
        return Err(LabelError::InvalidSpec { name: "z_max", message: format!("{z_max} must exceed z_min {z_min}") });
    }
    if depth < 2 {
        return Err(LabelError::InvalidSpec { name: "depth", message: format!("needs at least 2 slices, got {depth}") });
    }
    let mut out = Array3::zeros((shape.0, shape.1, depth));
    let r2 = radius * radius;
    for &(x, y, z) in points {
        let (d, clamped) = z_slice(z, z_min, z_max, depth);
        if clamped {
            log::warn!("object at z = {z} µm lies outside [{z_min}, {z_max}]; clamped to slice {d}");
        }
        for i in span(y, radius, shape.0) {
            for j in span(x, radius, shape.1) {
                for k in span(d, radius, depth) {
                    if (i as f64 - y).powi(2) + (j as f64 - x).powi(2) + (k as f64 - d).powi(2) <= r2 {
                        out[[i, j, k]] = 1.0;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Sum of unit-integral isotropic Gaussians sampled at pixel centres. Mass
/// falling outside the grid is not renormalised.
pub fn gaussian_density(positions: &[(f64, f64)], shape: (usize, usize), sigma: f64) -> Array2<f64> {
    let mut out = Array2::zeros(shape);
    let norm = 1.0 / (2.0 * PI * sigma * sigma);
    for &(x, y) in positions {
        let gy: Vec<f64> = (0..shape.0).map(|i| (-0.5 * ((i as f64 - y) / sigma).powi(2)).exp()).collect();
        let gx: Vec<f64> = (0..shape.1).map(|j| (-0.5 * ((j as f64 - x) / sigma).powi(2)).exp()).collect();
        for (i, a) in gy.iter().enumerate() {
            if *a < 1e-300 {
                continue;
            }
            for (j, b) in gx.iter().enumerate() {
                out[[i, j]] += norm * a * b;
            }
        }
    }
    out
}

/// Support of one object's shape on `grid` (before augmentation), or
/// `None` when its record carries no shape.
pub fn object_support(record: &PropertyRecord, grid: &Grid, ctx: Option<SampleContext>) -> Option<Array2<bool>> {
    let x = record.number("x")?;
    let y = record.number("y")?;
    match record.feature() {
        "Ellipse" => {
            let e = EllipseScatterer {
                x,
                y,
                z: 0.0,
                a: record.number("a")?,
                b: record.number("b")?,
                rotation: record.number("rotation").unwrap_or(0.0),
                value: 1.0,
            };
            Some(rasterize_ellipse(&e, grid).ok()?.mapv(|v| v >= 0.5))
        }
        "CellBlob" => {
            let a = record.number("a")?;
            let blob = CellBlob {
                x,
                y,
                a,
                b: record.number("b").unwrap_or(a),
                rotation: record.number("rotation").unwrap_or(0.0),
                sharpness: record.number("sharpness").unwrap_or(8.0),
                texture: record.number("texture").unwrap_or(0.5),
                lobes: record.number("lobes").unwrap_or(5.0).round().clamp(1.0, 64.0) as usize,
                value: 1.0,
            };
            let mut rng = ctx?.stream(record.instance().as_str(), "__shape");
            Some(synth_cell_blob(&blob, grid, &mut rng).mapv(|v| v >= 0.5))
        }
        _ => {
            let r = record.number("radius")? / grid.pixel_um;
            Some(disk_mask(&[(x, y)], grid.shape(), r).mapv(|v| v > 0.0))
        }
    }
}

/// Per-pixel object ids: the record's `class` if present, else its 1-based
/// position among `objects`. Later objects overwrite earlier ones.
pub fn semantic_mask(objects: &[LabelObject], shape: (usize, usize), grid: &Grid, ctx: Option<SampleContext>) -> Result<Array2<f64>, LabelError> {
    let mut out = Array2::zeros(shape);
    for (k, obj) in objects.iter().enumerate() {
        let id = obj.record.number("class").unwrap_or((k + 1) as f64);
        let Some(support) = object_support(&obj.record, grid, ctx) else {
            continue;
        };
        let mut support = ImageData::real2(support.mapv(|b| if b { 1.0 } else { 0.0 }));
        // binary per object, so bilinear resampling thresholded at 0.5 keeps ids intact
        for op in &obj.ops {
            support = op.apply(&support, 0.0, Interp::Bilinear)?;
        }
        let s = support.real_2d().expect("real support");
        if s.dim() != shape {
            return Err(LabelError::InvalidSpec { name: "shape", message: format!("support {:?} vs label {shape:?}", s.dim()) });
        }
        out.zip_mut_with(&s, |o, &v| {
            if v >= 0.5 {
                *o = id;
            }
        });
    }
    Ok(out)
}

/// `fields` of `record`, in order.
pub fn numeric_targets(record: &PropertyRecord, fields: &[&str]) -> Result<Vec<f64>, LabelError> {
    fields
        .iter()
        .map(|f| {
            record
                .number(f)
                .ok_or_else(|| LabelError::MissingField { instance: record.instance().to_string(), field: f.to_string() })
        })
        .collect()
}

fn source<'a>(p: &Props<'a>) -> Result<Option<&'a str>, LabelError> {
    Ok(match p.get("source") {
        Some(_) => Some(p.text("source")?),
        None => None,
    })
}

fn positive(p: &Props<'_>, name: &'static str, default: f64) -> Result<f64, LabelError> {
    let v = p.num_or(name, default)?;
    if !(v > 0.0) || !v.is_finite() {
        return Err(LabelError::InvalidSpec { name, message: format!("must be positive, got {v}") });
    }
    Ok(v)
}

macro_rules! label_feature {
    ($ty:ident, $name:literal) => {
        #[derive(Debug, Default)]
        pub struct $ty;

        impl Feature for $ty {
            fn type_name(&self) -> &str {
                $name
            }

            fn kind(&self) -> FeatureKind {
                FeatureKind::Append
            }

            fn apply(&self, _: &[&TaggedImage], p: Props<'_>, env: &FeatureEnv<'_>) -> Result<Rendered, FeatureFailure> {
                let objects = collect_objects(env.imports, source(&p)?)?;
                let shape = label_shape(env.imports, (env.optics.grid[0], env.optics.grid[1]))?;
                Ok(Rendered::new(self.render(&objects, shape, p, env)?))
            }
        }
    };
}

label_feature!(DiskMask, "DiskMask");
label_feature!(SphereVolume, "SphereVolume");
label_feature!(GaussianDensity, "GaussianDensity");
label_feature!(SemanticMask, "SemanticMask");
label_feature!(NumericTargets, "NumericTargets");

fn positions(objects: &[LabelObject]) -> Vec<(f64, f64)> {
    objects.iter().map(|o| (o.x, o.y)).collect()
}

impl DiskMask {
    fn render(&self, o: &[LabelObject], shape: (usize, usize), p: Props<'_>, _: &FeatureEnv<'_>) -> Result<ImageData, LabelError> {
        let r = positive(&p, "radius", DEFAULT_DISK_RADIUS)?;
        Ok(ImageData::real2(disk_mask(&positions(o), shape, r)))
    }
}

impl SphereVolume {
    fn render(&self, o: &[LabelObject], shape: (usize, usize), p: Props<'_>, _: &FeatureEnv<'_>) -> Result<ImageData, LabelError> {
        let pts: Vec<_> = o.iter().map(|o| (o.x, o.y, o.z)).collect();
        let v = sphere_volume(
            &pts,
            shape,
            positive(&p, "radius", DEFAULT_DISK_RADIUS)?,
            p.num_or("z_min", DEFAULT_Z_RANGE.0)?,
            p.num_or("z_max", DEFAULT_Z_RANGE.1)?,
            p.num_or("depth", DEFAULT_DEPTH as f64)?.round().max(0.0) as usize,
        )?;
        Ok(ImageData::Real(v.into_dyn()))
    }
}

impl GaussianDensity {
    fn render(&self, o: &[LabelObject], shape: (usize, usize), p: Props<'_>, _: &FeatureEnv<'_>) -> Result<ImageData, LabelError> {
        let sigma = positive(&p, "sigma", DEFAULT_DENSITY_SIGMA)?;
        Ok(ImageData::real2(gaussian_density(&positions(o), shape, sigma)))
    }
}

impl SemanticMask {
    fn render(&self, o: &[LabelObject], shape: (usize, usize), _: Props<'_>, env: &FeatureEnv<'_>) -> Result<ImageData, LabelError> {
        Ok(ImageData::real2(semantic_mask(o, shape, &env.optics.output_grid(), Some(env.ctx))?))
    }
}

impl NumericTargets {
    /// One row per object; `fields` is a comma-separated list. Positions are
    /// reported after augmentation.
    fn render(&self, o: &[LabelObject], _: (usize, usize), p: Props<'_>, _: &FeatureEnv<'_>) -> Result<ImageData, LabelError> {
        let fields: Vec<&str> = p.text("fields")?.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        let mut rows = Vec::with_capacity(o.len() * fields.len());
        for obj in o {
            let mut values = numeric_targets(&obj.record, &fields)?;
            for (f, v) in fields.iter().zip(values.iter_mut()) {
                match *f {
                    "x" => *v = obj.x,
                    "y" => *v = obj.y,
                    _ => {}
                }
            }
            rows.extend(values);
        }
        let arr = Array2::from_shape_vec((o.len(), fields.len()), rows).expect("rows × fields");
        Ok(ImageData::real2(arr))
    }
}

/// Replays every imported geometric transform on a label image (nearest
/// interpolation by default, so masks stay binary).
#[derive(Debug, Default)]
pub struct ApplyGeometry;

impl Feature for ApplyGeometry {
    fn type_name(&self) -> &str {
        "ApplyGeometry"
    }

    fn kind(&self) -> FeatureKind {
        FeatureKind::Transform
    }

    fn apply(&self, inputs: &[&TaggedImage], p: Props<'_>, env: &FeatureEnv<'_>) -> Result<Rendered, FeatureFailure> {
        let interp = match p.text_or("interpolation", "nearest")? {
            "bilinear" => Interp::Bilinear,
            _ => Interp::Nearest,
        };
        let fill = p.num_or("fill", 0.0)?;
        let mut data = inputs[0].data.clone();
        for op in geometry_chain(env.imports, None)? {
            data = op.apply(&data, fill, interp)?;
        }
        Ok(Rendered::new(data))
    }
}
