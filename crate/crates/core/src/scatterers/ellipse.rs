use ndarray::Array2;

use super::ScattererError;
use crate::optics::Grid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseScatterer {
    /// Centre in output-grid pixels.
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Semi-axes (µm).
    pub a: f64,
    pub b: f64,
    /// Rotation of the `a` axis from +x (radians).
    pub rotation: f64,
    pub value: f64,
}

const SUPERSAMPLE: usize = 16;

/// Fraction of the pixel centred at `(px, py)` (grid pixels) covered by the
/// ellipse, with `a`, `b` in pixels.
fn coverage(px: f64, py: f64, cx: f64, cy: f64, a: f64, b: f64, cos: f64, sin: f64) -> f64 {
    let inside = |x: f64, y: f64| {
        let (dx, dy) = (x - cx, y - cy);
        let u = cos * dx + sin * dy;
        let v = -sin * dx + cos * dy;
        (u / a).powi(2) + (v / b).powi(2) <= 1.0
    };
    // sE ⊇ E ⊕ (s−1)·min(a,b)-disk, so points with |s − 1|·min(a,b) beyond
    // the pixel half-diagonal are unambiguous.
    let (dx, dy) = (px - cx, py - cy);
    let u = cos * dx + sin * dy;
    let v = -sin * dx + cos * dy;
    let s = ((u / a).powi(2) + (v / b).powi(2)).sqrt();
    let margin = (s - 1.0).abs() * a.min(b);
    if margin > std::f64::consts::FRAC_1_SQRT_2 + 1e-9 {
        return if s < 1.0 { 1.0 } else { 0.0 };
    }
    let n = SUPERSAMPLE;
    let mut hits = 0usize;
    for i in 0..n {
        let sy = py - 0.5 + (i as f64 + 0.5) / n as f64;
        for j in 0..n {
            let sx = px - 0.5 + (j as f64 + 0.5) / n as f64;
            if inside(sx, sy) {
                hits += 1;
            }
        }
    }
    hits as f64 / (n * n) as f64
}

/// Area-fraction rasterisation of the ellipse on `grid`, scaled by `value`.
pub fn rasterize_ellipse(e: &EllipseScatterer, grid: &Grid) -> Result<Array2<f64>, ScattererError> {
    if !(e.a > 0.0) || !(e.b > 0.0) {
        return Err(ScattererError::DegenerateAxis { a: e.a, b: e.b });
    }
    let (a, b) = (e.a / grid.pixel_um, e.b / grid.pixel_um);
    let (cx, cy) = (e.x + grid.origin.1, e.y + grid.origin.0);
    let (sin, cos) = e.rotation.sin_cos();
    let mut out = Array2::zeros(grid.shape());
    let r = a.max(b) + 1.0;
    let rows = bounds(cy - r, cy + r, grid.height);
    let cols = bounds(cx - r, cx + r, grid.width);
    for i in rows.0..rows.1 {
        for j in cols.0..cols.1 {
            let c = coverage(j as f64, i as f64, cx, cy, a, b, cos, sin);
            if c > 0.0 {
                out[[i, j]] = c * e.value;
            }
        }
    }
    Ok(out)
}

/// Index range `[lo, hi)` of pixels whose centres may lie in `[from, to]`.
pub(crate) fn bounds(from: f64, to: f64, n: usize) -> (usize, usize) {
    let lo = from.floor().max(0.0);
    let hi = (to.ceil() + 1.0).min(n as f64);
    if hi <= lo {
        return (0, 0);
    }
    (lo as usize, hi as usize)
}
