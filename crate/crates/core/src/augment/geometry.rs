use std::ops::{Add, Mul};

use ndarray::{Array2, ArrayD, ArrayView2, Axis, Ix2, IxDyn};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::filter::gaussian_filter;
use super::AugmentError;
use crate::pipeline::{ImageData, PropertyRecord, Props};

/// Pixel types that can be interpolated.
pub trait Sample: Copy + Add<Output = Self> + Mul<f64, Output = Self> {
    fn from_fill(v: f64) -> Self;
}

impl Sample for f64 {
    fn from_fill(v: f64) -> Self {
        v
    }
}

impl Sample for Complex64 {
    fn from_fill(v: f64) -> Self {
        Complex64::new(v, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interp {
    #[default]
    Bilinear,
    Nearest,
}

/// Value of `a` at fractional index `(y, x)`; `fill` outside the sampled
/// area.
pub fn sample_at<T: Sample>(a: &ArrayView2<'_, T>, y: f64, x: f64, fill: T, interp: Interp) -> T {
    let (h, w) = a.dim();
    const EPS: f64 = 1e-9;
    match interp {
        Interp::Nearest => {
            let (i, j) = (y.round(), x.round());
            if i < 0.0 || j < 0.0 || i >= h as f64 || j >= w as f64 {
                return fill;
            }
            a[[i as usize, j as usize]]
        }
        Interp::Bilinear => {
            if y < -EPS || x < -EPS || y > (h - 1) as f64 + EPS || x > (w - 1) as f64 + EPS {
                return fill;
            }
            let (y, x) = (y.clamp(0.0, (h - 1) as f64), x.clamp(0.0, (w - 1) as f64));
            let (i0, j0) = (y.floor() as usize, x.floor() as usize);
            let (fy, fx) = (y - i0 as f64, x - j0 as f64);
            let (i1, j1) = ((i0 + 1).min(h - 1), (j0 + 1).min(w - 1));
            let top = if fx == 0.0 { a[[i0, j0]] } else { a[[i0, j0]] * (1.0 - fx) + a[[i0, j1]] * fx };
            if fy == 0.0 {
                return top;
            }
            let bottom = if fx == 0.0 { a[[i1, j0]] } else { a[[i1, j0]] * (1.0 - fx) + a[[i1, j1]] * fx };
            top * (1.0 - fy) + bottom * fy
        }
    }
}

/// Builds an `out_shape` image whose pixel `(i, j)` samples `a` at
/// `source(i, j) = (y, x)`.
pub fn warp<T: Sample>(
    a: &ArrayView2<'_, T>,
    out_shape: (usize, usize),
    fill: f64,
    interp: Interp,
    source: impl Fn(usize, usize) -> (f64, f64),
) -> Array2<T> {
    let fill = T::from_fill(fill);
    Array2::from_shape_fn(out_shape, |(i, j)| {
        let (y, x) = source(i, j);
        sample_at(a, y, x, fill, interp)
    })
}

/// Affine map about the image centre:
/// `p' = R(θ)·Shear(s)·k·Mirror·(p − c) + c + t`, in `(x, y)` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineSpec {
    pub translate_x: f64,
    pub translate_y: f64,
    pub rotation: f64,
    pub shear: f64,
    pub scale: f64,
    pub flip_x: bool,
    pub flip_y: bool,
}

impl Default for AffineSpec {
    fn default() -> Self {
        AffineSpec { translate_x: 0.0, translate_y: 0.0, rotation: 0.0, shear: 0.0, scale: 1.0, flip_x: false, flip_y: false }
    }
}

impl AffineSpec {
    pub fn from_props(p: Props<'_>) -> Result<Self, AugmentError> {
        let num = |k: &str, d: f64| p.num_or(k, d).map_err(AugmentError::from);
        Ok(AffineSpec {
            translate_x: num("translate_x", 0.0)?,
            translate_y: num("translate_y", 0.0)?,
            rotation: num("rotation", 0.0)?,
            shear: num("shear", 0.0)?,
            scale: num("scale", 1.0)?,
            flip_x: p.flag("flip_x")?,
            flip_y: p.flag("flip_y")?,
        })
    }

    /// Linear part `[[a, b], [c, d]]` acting on `(x, y)`.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.rotation.sin_cos();
        let mx = if self.flip_x { -self.scale } else { self.scale };
        let my = if self.flip_y { -self.scale } else { self.scale };
        // R · [[1, shear], [0, 1]] · diag(mx, my)
        [[c * mx, (c * self.shear - s) * my], [s * mx, (s * self.shear + c) * my]]
    }

    fn inverse(&self) -> Result<[[f64; 2]; 2], AugmentError> {
        let [[a, b], [c, d]] = self.matrix();
        let det = a * d - b * c;
        if !(det.abs() > 1e-12) || !det.is_finite() {
            return Err(AugmentError::SingularTransform { determinant: det });
        }
        Ok([[d / det, -b / det], [-c / det, a / det]])
    }
}

/// Simard-style elastic distortion: per-axis uniform(−1, 1) fields smoothed
/// with a Gaussian of width `sigma` and scaled by `alpha` (pixels).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticSpec {
    pub alpha: f64,
    pub sigma: f64,
    pub seed: u64,
}

pub const ELASTIC_ALPHA: f64 = 20.0;
pub const ELASTIC_SIGMA: f64 = 4.0;

impl ElasticSpec {
    /// Displacement fields `(dy, dx)`: output `q` samples input `q + d(q)`.
    pub fn field(&self, shape: (usize, usize)) -> (Array2<f64>, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut noise = || Array2::from_shape_simple_fn(shape, || rng.random_range(-1.0..=1.0));
        let rx = noise();
        let ry = noise();
        (gaussian_filter(&ry, self.sigma) * self.alpha, gaussian_filter(&rx, self.sigma) * self.alpha)
    }
}

/// Crop/pad window: output `(i, j)` is input `(i + top, j + left)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropPadSpec {
    pub top: i64,
    pub left: i64,
    pub height: usize,
    pub width: usize,
}

/// A replayable geometric transform, as recovered from its record.
#[derive(Debug, Clone)]
pub enum GeometricOp {
    Affine { spec: AffineSpec, centre: (f64, f64) },
    Elastic { dy: Array2<f64>, dx: Array2<f64> },
    CropPad(CropPadSpec),
}

/// Names of features whose records describe geometric transforms.
pub const GEOMETRIC_FEATURES: [&str; 3] = ["Affine", "Elastic", "CropPad"];

impl GeometricOp {
    pub fn affine(spec: AffineSpec, shape: (usize, usize)) -> Self {
        GeometricOp::Affine { spec, centre: ((shape.0 as f64 - 1.0) / 2.0, (shape.1 as f64 - 1.0) / 2.0) }
    }

    pub fn elastic(spec: ElasticSpec, shape: (usize, usize)) -> Self {
        let (dy, dx) = spec.field(shape);
        GeometricOp::Elastic { dy, dx }
    }

    /// Rebuilds the transform described by `record`, or `None` for records of
    /// non-geometric features.
    pub fn from_record(record: &PropertyRecord) -> Option<Result<Self, AugmentError>> {
        let p = Props::new(record.values());
        let need = |k: &'static str| record.number(k).ok_or(AugmentError::IncompleteRecord(k));
        let op = match record.feature() {
            "Affine" => (|| {
                Ok(GeometricOp::Affine { spec: AffineSpec::from_props(p)?, centre: (need("centre_y")?, need("centre_x")?) })
            })(),
            "Elastic" => (|| {
                let spec = ElasticSpec {
                    alpha: p.num_or("alpha", ELASTIC_ALPHA)?,
                    sigma: p.num_or("sigma", ELASTIC_SIGMA)?,
                    seed: need("field_seed")? as u64,
                };
                Ok(GeometricOp::elastic(spec, (need("input_height")? as usize, need("input_width")? as usize)))
            })(),
            "CropPad" => (|| {
                Ok(GeometricOp::CropPad(CropPadSpec {
                    top: need("top")? as i64,
                    left: need("left")? as i64,
                    height: need("height")? as usize,
                    width: need("width")? as usize,
                }))
            })(),
            _ => return None,
        };
        Some(op)
    }

    pub fn output_shape(&self, input: (usize, usize)) -> (usize, usize) {
        match self {
            GeometricOp::CropPad(c) => (c.height, c.width),
            _ => input,
        }
    }

    /// Where an object at input position `(x, y)` appears in the output.
    pub fn map_point(&self, x: f64, y: f64) -> (f64, f64) {
        match self {
            GeometricOp::Affine { spec, centre } => {
                let [[a, b], [c, d]] = spec.matrix();
                let (u, v) = (x - centre.1, y - centre.0);
                (a * u + b * v + centre.1 + spec.translate_x, c * u + d * v + centre.0 + spec.translate_y)
            }
            GeometricOp::Elastic { dy, dx } => {
                // solve q + d(q) = p by fixed-point iteration (d is smooth)
                let (vy, vx) = (dy.view(), dx.view());
                let (mut qx, mut qy) = (x, y);
                for _ in 0..50 {
                    let (h, w) = vy.dim();
                    let (cy, cx) = (qy.clamp(0.0, (h - 1) as f64), qx.clamp(0.0, (w - 1) as f64));
                    let nx = x - sample_at(&vx, cy, cx, 0.0, Interp::Bilinear);
                    let ny = y - sample_at(&vy, cy, cx, 0.0, Interp::Bilinear);
                    let done = (nx - qx).abs() + (ny - qy).abs() < 1e-10;
                    qx = nx;
                    qy = ny;
                    if done {
                        break;
                    }
                }
                (qx, qy)
            }
            GeometricOp::CropPad(c) => (x - c.left as f64, y - c.top as f64),
        }
    }

    fn apply2<T: Sample>(&self, a: &ArrayView2<'_, T>, fill: f64, interp: Interp) -> Result<Array2<T>, AugmentError> {
        let shape = a.dim();
        Ok(match self {
            GeometricOp::Affine { spec, centre } => {
                let [[a00, a01], [a10, a11]] = spec.inverse()?;
                let (cy, cx) = *centre;
                warp(a, shape, fill, interp, |i, j| {
                    let (u, v) = (j as f64 - cx - spec.translate_x, i as f64 - cy - spec.translate_y);
                    (a10 * u + a11 * v + cy, a00 * u + a01 * v + cx)
                })
            }
            GeometricOp::Elastic { dy, dx } => {
                if dy.dim() != shape {
                    return Err(AugmentError::ShapeMismatch { expected: dy.dim(), found: shape });
                }
                warp(a, shape, fill, interp, |i, j| (i as f64 + dy[[i, j]], j as f64 + dx[[i, j]]))
            }
            GeometricOp::CropPad(c) => warp(a, (c.height, c.width), fill, Interp::Nearest, |i, j| {
                ((i as i64 + c.top) as f64, (j as i64 + c.left) as f64)
            }),
        })
    }

    /// Applies the transform to a 2-D image, or slice-wise along the last
    /// axis of a 3-D volume.
    pub fn apply(&self, img: &ImageData, fill: f64, interp: Interp) -> Result<ImageData, AugmentError> {
        Ok(match img {
            ImageData::Real(a) => ImageData::Real(self.apply_nd(a, fill, interp)?),
            ImageData::Complex(a) => ImageData::Complex(self.apply_nd(a, fill, interp)?),
        })
    }

    fn apply_nd<T: Sample + Default>(&self, a: &ArrayD<T>, fill: f64, interp: Interp) -> Result<ArrayD<T>, AugmentError> {
        match a.ndim() {
            2 => {
                let v = a.view().into_dimensionality::<Ix2>().expect("2-D");
                Ok(self.apply2(&v, fill, interp)?.into_dyn())
            }
            3 => {
                let (h, w, d) = (a.shape()[0], a.shape()[1], a.shape()[2]);
                let (oh, ow) = self.output_shape((h, w));
                let mut out = ArrayD::from_elem(IxDyn(&[oh, ow, d]), T::default());
                for k in 0..d {
                    let slice = a.index_axis(Axis(2), k).into_dimensionality::<Ix2>().expect("2-D slice");
                    out.index_axis_mut(Axis(2), k).assign(&self.apply2(&slice, fill, interp)?.into_dyn());
                }
                Ok(out)
            }
            n => Err(AugmentError::UnsupportedRank(n)),
        }
    }
}
