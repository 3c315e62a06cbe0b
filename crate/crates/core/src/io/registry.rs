use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value as Json};

use crate::augment::{self, ELASTIC_ALPHA, ELASTIC_SIGMA};
use crate::labels::{self, DEFAULT_DENSITY_SIGMA, DEFAULT_DEPTH, DEFAULT_DISK_RADIUS, DEFAULT_Z_RANGE};
use crate::optics::{Coherent, Fluorescence, Refocus};
use crate::pipeline::{Feature, FeatureKind};
use crate::scatterers::{self, POLYSTYRENE_INDEX};

/// Name of the structural node that clones its single child.
pub const DUPLICATE: &str = "Duplicate";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueType {
    Number,
    Flag,
    Text,
}

/// Which pipeline a feature belongs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Image,
    Label,
    Any,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertySchema {
    pub name: &'static str,
    #[serde(rename = "type")]
    pub value_type: ValueType,
    /// Filled in when the property is absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub default: Option<Json>,
    pub required: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unit: Option<&'static str>,
    pub description: &'static str,
}

#[derive(Clone, Serialize)]
pub struct FeatureSchema {
    pub name: &'static str,
    pub kind: &'static str,
    pub stage: Stage,
    pub description: &'static str,
    pub properties: Vec<PropertySchema>,
    /// At least one of these must be given (empty: no such rule).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub one_of: Vec<&'static str>,
    #[serde(skip)]
    make: Option<fn() -> Arc<dyn Feature>>,
}

impl std::fmt::Debug for FeatureSchema {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeatureSchema").field("name", &self.name).finish_non_exhaustive()
    }
}

impl FeatureSchema {
    pub fn property(&self, name: &str) -> Option<&PropertySchema> {
        self.properties.iter().find(|p| p.name == name)
    }

    /// A fresh implementation instance; `None` for structural nodes.
    pub fn instantiate(&self) -> Option<Arc<dyn Feature>> {
        self.make.map(|m| m())
    }

    pub fn is_structural(&self) -> bool {
        self.make.is_none()
    }
}

/// The immutable catalogue of features a config may name.
#[derive(Debug, Clone)]
pub struct Registry {
    features: BTreeMap<&'static str, FeatureSchema>,
}

fn num(name: &'static str, default: Option<f64>, unit: Option<&'static str>, description: &'static str) -> PropertySchema {
    PropertySchema { name, value_type: ValueType::Number, default: default.map(|d| json!(d)), required: false, unit, description }
}

fn req(name: &'static str, unit: Option<&'static str>, description: &'static str) -> PropertySchema {
    PropertySchema { name, value_type: ValueType::Number, default: None, required: true, unit, description }
}

fn flag(name: &'static str, description: &'static str) -> PropertySchema {
    PropertySchema { name, value_type: ValueType::Flag, default: Some(json!(false)), required: false, unit: None, description }
}

fn text(name: &'static str, default: Option<&'static str>, description: &'static str) -> PropertySchema {
    PropertySchema { name, value_type: ValueType::Text, default: default.map(|d| json!(d)), required: false, unit: None, description }
}

const PX: Option<&str> = Some("px");
const UM: Option<&str> = Some("µm");
const RAD: Option<&str> = Some("rad");
const RMS: Option<&str> = Some("rad RMS");

fn position() -> Vec<PropertySchema> {
    vec![
        req("x", PX, "column of the centre in output pixels"),
        req("y", PX, "row of the centre in output pixels"),
        num("z", Some(0.0), UM, "axial offset from the focal plane"),
        num("class", None, None, "class index reported by semantic labels"),
    ]
}

fn aberrations() -> Vec<PropertySchema> {
    vec![
        num("defocus", Some(0.0), RMS, "Zernike defocus coefficient"),
        num("coma_x", Some(0.0), RMS, "Zernike horizontal coma coefficient"),
        num("coma_y", Some(0.0), RMS, "Zernike vertical coma coefficient"),
        num("spherical", Some(0.0), RMS, "Zernike primary spherical coefficient"),
    ]
}

fn warp_common() -> Vec<PropertySchema> {
    vec![
        text("interpolation", Some("bilinear"), "bilinear or nearest"),
        num("fill", None, None, "value outside the source image (default: background level)"),
    ]
}

fn kind_name(kind: FeatureKind) -> &'static str {
    match kind {
        FeatureKind::Append => "append",
        FeatureKind::Transform => "transform",
        FeatureKind::Merge => "merge",
    }
}

impl Registry {
    /// Every built-in feature.
    pub fn standard() -> Self {
        let mut r = Registry { features: BTreeMap::new() };
        let label_source = || text("source", None, "name or feature of the objects to label (default: all)");

        r.add(
            "Ellipse",
            || Arc::new(scatterers::Ellipse),
            Stage::Image,
            "uniform ellipse rasterised with area-weighted edges",
            [
                position(),
                vec![
                    req("a", UM, "semi-axis along the rotated x direction"),
                    req("b", UM, "semi-axis along the rotated y direction"),
                    num("rotation", Some(0.0), RAD, "counter-clockwise rotation"),
                    num("value", Some(1.0), None, "interior intensity"),
                ],
            ]
            .concat(),
        );
        r.add(
            "PointEmitter",
            || Arc::new(scatterers::PointEmitter),
            Stage::Image,
            "sub-pixel point source",
            [position(), vec![num("intensity", Some(1.0), None, "emitted power")]].concat(),
        );
        r.add(
            "MieSphere",
            || Arc::new(scatterers::Mie),
            Stage::Image,
            "homogeneous sphere with exact Mie scattering",
            [
                position(),
                vec![
                    req("radius", UM, "sphere radius"),
                    num("refractive_index", Some(POLYSTYRENE_INDEX), None, "real part of the particle index"),
                    num("refractive_index_imag", Some(0.0), None, "imaginary part of the particle index"),
                ],
            ]
            .concat(),
        );
        r.add(
            "CellBlob",
            || Arc::new(scatterers::Blob),
            Stage::Image,
            "lobed textured cell body",
            [
                position(),
                vec![
                    req("a", UM, "mean semi-axis along x"),
                    num("b", None, UM, "mean semi-axis along y (default: a)"),
                    num("rotation", Some(0.0), RAD, "counter-clockwise rotation"),
                    num("sharpness", Some(8.0), None, "edge steepness"),
                    num("texture", Some(0.5), None, "boundary and interior roughness"),
                    num("lobes", Some(5.0), None, "number of boundary lobes"),
                    num("value", Some(1.0), None, "mean interior intensity"),
                ],
            ]
            .concat(),
        );
        r.add(
            "Fluorescence",
            || Arc::new(Fluorescence), Stage::Image, "incoherent widefield imaging", aberrations());
        r.add(
            "Brightfield",
            || Arc::new(Coherent::brightfield()), Stage::Image, "coherent brightfield intensity", aberrations());
        r.add(
            "Holography",
            || Arc::new(Coherent::holography()),
            Stage::Image,
            "holographic field (offaxis) or intensity (inline)",
            [aberrations(), vec![text("mode", Some("offaxis"), "offaxis or inline")]].concat(),
        );
        r.add(
            "Refocus",
            || Arc::new(Refocus),
            Stage::Image,
            "numerical propagation of a complex field",
            vec![req("distance", UM, "propagation distance"), num("pad", Some(0.0), PX, "zero padding per side")],
        );
        r.add(
            "Offset",
            || Arc::new(augment::Offset),
            Stage::Any,
            "constant background",
            vec![req("level", None, "added intensity")],
        );
        let mut poisson = r.schema(
            "Poisson",
            || Arc::new(augment::PoissonNoise),
            Stage::Image,
            "shot noise at a target SNR or a fixed photon scale",
            vec![
                num("snr", None, None, "(peak − background)/√background in photon units"),
                num("scale", None, None, "photons per intensity unit; overrides snr"),
            ],
        );
        poisson.one_of = vec!["snr", "scale"];
        r.insert(poisson);
        r.add(
            "Gaussian",
            || Arc::new(augment::GaussianNoise),
            Stage::Any,
            "additive white Gaussian noise",
            vec![req("sigma", None, "standard deviation")],
        );
        r.add(
            "Affine",
            || Arc::new(augment::Affine),
            Stage::Image,
            "rotation, scale, shear, flips and translation about the image centre",
            [
                vec![
                    num("translate_x", Some(0.0), PX, "shift along columns"),
                    num("translate_y", Some(0.0), PX, "shift along rows"),
                    num("rotation", Some(0.0), RAD, "counter-clockwise rotation"),
                    num("shear", Some(0.0), None, "shear factor"),
                    num("scale", Some(1.0), None, "isotropic zoom"),
                    flag("flip_x", "mirror columns"),
                    flag("flip_y", "mirror rows"),
                ],
                warp_common(),
            ]
            .concat(),
        );
        r.add(
            "Elastic",
            || Arc::new(augment::Elastic),
            Stage::Image,
            "smooth random displacement field",
            [
                vec![
                    num("alpha", Some(ELASTIC_ALPHA), PX, "displacement scale"),
                    num("sigma", Some(ELASTIC_SIGMA), PX, "smoothing width"),
                    num("seed", None, None, "field seed (default: drawn per sample)"),
                ],
                warp_common(),
            ]
            .concat(),
        );
        r.add(
            "CropPad",
            || Arc::new(augment::CropPad),
            Stage::Image,
            "window of the image, padding outside",
            vec![
                num("top", Some(0.0), PX, "first row of the window"),
                num("left", Some(0.0), PX, "first column of the window"),
                num("height", None, PX, "window rows (default: image height)"),
                num("width", None, PX, "window columns (default: image width)"),
                num("fill", None, None, "value outside the image (default: background level)"),
            ],
        );
        r.add(
            "DiskMask",
            || Arc::new(labels::DiskMask),
            Stage::Label,
            "binary disks at object positions",
            vec![num("radius", Some(DEFAULT_DISK_RADIUS), PX, "disk radius"), label_source()],
        );
        r.add(
            "SphereVolume",
            || Arc::new(labels::SphereVolume),
            Stage::Label,
            "binary spheres in a (row, column, z-slice) volume",
            vec![
                num("radius", Some(DEFAULT_DISK_RADIUS), PX, "sphere radius in voxels"),
                num("z_min", Some(DEFAULT_Z_RANGE.0), UM, "z of the first slice"),
                num("z_max", Some(DEFAULT_Z_RANGE.1), UM, "z of the last slice"),
                num("depth", Some(DEFAULT_DEPTH as f64), None, "number of slices"),
                label_source(),
            ],
        );
        r.add(
            "GaussianDensity",
            || Arc::new(labels::GaussianDensity),
            Stage::Label,
            "sum of unit-mass Gaussians at object positions",
            vec![num("sigma", Some(DEFAULT_DENSITY_SIGMA), PX, "kernel width"), label_source()],
        );
        r.add(
            "SemanticMask",
            || Arc::new(labels::SemanticMask),
            Stage::Label,
            "object supports painted with class or 1-based index",
            vec![label_source()],
        );
        r.add(
            "NumericTargets",
            || Arc::new(labels::NumericTargets),
            Stage::Label,
            "table of per-object record fields",
            vec![
                PropertySchema {
                    name: "fields",
                    value_type: ValueType::Text,
                    default: None,
                    required: true,
                    unit: None,
                    description: "comma-separated record fields",
                },
                label_source(),
            ],
        );
        r.add(
            "ApplyGeometry",
            || Arc::new(labels::ApplyGeometry),
            Stage::Label,
            "replays the image's geometric transforms on a label",
            vec![
                text("interpolation", Some("nearest"), "nearest or bilinear"),
                num("fill", Some(0.0), None, "value outside the source label"),
            ],
        );
        r.insert(FeatureSchema {
            name: DUPLICATE,
            kind: "duplicate",
            stage: Stage::Any,
            description: "independent copies of the single child",
            properties: vec![req("n", None, "number of copies (a positive integer constant)")],
            one_of: Vec::new(),
            make: None,
        });
        r
    }

    fn schema(
        &self,
        name: &'static str,
        make: fn() -> Arc<dyn Feature>,
        stage: Stage,
        description: &'static str,
        properties: Vec<PropertySchema>,
    ) -> FeatureSchema {
        let probe = make();
        debug_assert_eq!(probe.type_name(), name);
        FeatureSchema { name, kind: kind_name(probe.kind()), stage, description, properties, one_of: Vec::new(), make: Some(make) }
    }

    fn add(
        &mut self,
        name: &'static str,
        make: fn() -> Arc<dyn Feature>,
        stage: Stage,
        description: &'static str,
        properties: Vec<PropertySchema>,
    ) {
        let s = self.schema(name, make, stage, description, properties);
        self.insert(s);
    }

    fn insert(&mut self, schema: FeatureSchema) {
        self.features.insert(schema.name, schema);
    }

    pub fn get(&self, name: &str) -> Option<&FeatureSchema> {
        self.features.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.features.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &FeatureSchema> {
        self.features.values()
    }

    /// JSON listing served to clients.
    pub fn to_json(&self) -> Json {
        json!({ "features": self.features.values().collect::<Vec<_>>() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schemas_match_implementations() {
        let r = Registry::standard();
        for s in r.iter() {
            if let Some(f) = s.instantiate() {
                assert_eq!(f.type_name(), s.name);
            }
            for p in &s.properties {
                assert!(!(p.required && p.default.is_some()), "{}.{}", s.name, p.name);
            }
        }
        for name in ["Ellipse", "PointEmitter", "MieSphere", "Fluorescence", "Brightfield", "Holography", "Offset", "Poisson", "Gaussian", "Affine", "Elastic"] {
            assert!(r.get(name).is_some(), "{name}");
        }
    }
}
