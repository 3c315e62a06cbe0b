use ndarray::ArrayView2;

use super::AnalysisError;

/// Sub-pixel centre `(x, y)` of a radially symmetric spot.
///
/// Gradients are taken by cross differences on the half-pixel grid; each
/// midpoint contributes the line through it along its gradient, and the
/// centre is the weighted least-squares point nearest to all lines. Weights
/// are `|∇I|²` divided by the distance to the `|∇I|²`-weighted centroid of
/// the midpoints, so the estimate is unchanged under `I → a·I + b`, `a > 0`.
pub fn radial_center(crop: ArrayView2<'_, f64>) -> Result<(f64, f64), AnalysisError> {
    let (h, w) = crop.dim();
    if h < 2 || w < 2 {
        return Err(AnalysisError::SingularSystem);
    }
    let n = (h - 1) * (w - 1);
    // (y, x, gy, gx, |g|²) per midpoint
    let mut lines = Vec::with_capacity(n);
    let (mut m, mut my, mut mx) = (0.0, 0.0, 0.0);
    for i in 0..h - 1 {
        for j in 0..w - 1 {
            let u = crop[[i + 1, j + 1]] - crop[[i, j]];
            let v = crop[[i + 1, j]] - crop[[i, j + 1]];
            let (gy, gx) = (0.5 * (u + v), 0.5 * (u - v));
            let g2 = gy * gy + gx * gx;
            let (y, x) = (i as f64 + 0.5, j as f64 + 0.5);
            m += g2;
            my += g2 * y;
            mx += g2 * x;
            lines.push((y, x, gy, gx, g2));
        }
    }
    if !(m > 0.0) || !m.is_finite() {
        return Err(AnalysisError::SingularSystem);
    }
    let (cy, cx) = (my / m, mx / m);

    // Σ w·n·nᵀ c = Σ w·n·nᵀ p with n the unit normal to the gradient line
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(y, x, gy, gx, g2) in &lines {
        if g2 == 0.0 {
            continue;
        }
        let dist = ((y - cy).powi(2) + (x - cx).powi(2)).sqrt().max(1e-9);
        let wgt = g2 / dist;
        // unit normal (ny, nx) = (gx, −gy)/|g|; products scaled by 1/|g|²
        let (nyy, nxx, nxy) = (gx * gx / g2, gy * gy / g2, -gx * gy / g2);
        a11 += wgt * nxx;
        a12 += wgt * nxy;
        a22 += wgt * nyy;
        let proj_x = nxx * x + nxy * y;
        let proj_y = nxy * x + nyy * y;
        b1 += wgt * proj_x;
        b2 += wgt * proj_y;
    }
    let det = a11 * a22 - a12 * a12;
    let scale = (a11 * a22).abs().max(a12 * a12);
    if !(det.abs() > 1e-12 * scale) || !det.is_finite() || scale == 0.0 {
        return Err(AnalysisError::SingularSystem);
    }
    let x = (a22 * b1 - a12 * b2) / det;
    let y = (a11 * b2 - a12 * b1) / det;
    Ok((x, y))
}
