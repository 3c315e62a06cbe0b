use ndarray::{ArrayView2, ArrayView3};
use serde::{Deserialize, Serialize};

/// A detected object: centroid in pixels (and slices), mean map value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    pub score: f64,
    #[serde(default)]
    pub frame: usize,
    #[serde(default)]
    pub area: usize,
    /// The component touches the array border; its centroid is biased
    /// toward the interior.
    #[serde(default)]
    pub touches_border: bool,
}

impl Detection {
    pub fn at(x: f64, y: f64) -> Self {
        Detection { x, y, z: None, score: 1.0, frame: 0, area: 1, touches_border: false }
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MIN_AREA: usize = 2;

/// Connected components (4-connected) of `map ≥ threshold` with at least
/// `min_area` pixels, in raster order of their first pixel.
pub fn detect_from_map(map: ArrayView2<'_, f64>, threshold: f64, min_area: usize) -> Vec<Detection> {
    let (h, w) = map.dim();
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if seen[start] || !(map[[start / w, start % w]] >= threshold) {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut n, mut sy, mut sx, mut sv, mut border) = (0usize, 0.0, 0.0, 0.0, false);
        while let Some(p) = stack.pop() {
            let (i, j) = (p / w, p % w);
            n += 1;
            sy += i as f64;
            sx += j as f64;
            sv += map[[i, j]];
            border |= i == 0 || j == 0 || i == h - 1 || j == w - 1;
            let mut visit = |q: usize| {
                if !seen[q] && map[[q / w, q % w]] >= threshold {
                    seen[q] = true;
                    stack.push(q);
                }
            };
            if i > 0 {
                visit(p - w);
            }
            if i + 1 < h {
                visit(p + w);
            }
            if j > 0 {
                visit(p - 1);
            }
            if j + 1 < w {
                visit(p + 1);
            }
        }
        if n >= min_area {
            let nf = n as f64;
            out.push(Detection { x: sx / nf, y: sy / nf, z: None, score: sv / nf, frame: 0, area: n, touches_border: border });
        }
    }
    out
}

/// 3-D variant over a `(height, width, depth)` volume with 6-connectivity;
/// `z` is the centroid slice.
pub fn detect_from_volume(vol: ArrayView3<'_, f64>, threshold: f64, min_area: usize) -> Vec<Detection> {
    let (h, w, d) = vol.dim();
    let idx = |i: usize, j: usize, k: usize| (i * w + j) * d + k;
    let mut seen = vec![false; h * w * d];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for i0 in 0..h {
        for j0 in 0..w {
            for k0 in 0..d {
                if seen[idx(i0, j0, k0)] || !(vol[[i0, j0, k0]] >= threshold) {
                    continue;
                }
                seen[idx(i0, j0, k0)] = true;
                stack.push((i0, j0, k0));
                let (mut n, mut s, mut sv, mut border) = (0usize, [0.0; 3], 0.0, false);
                while let Some((i, j, k)) = stack.pop() {
                    n += 1;
                    s[0] += i as f64;
                    s[1] += j as f64;
                    s[2] += k as f64;
                    sv += vol[[i, j, k]];
                    border |= i == 0 || j == 0 || k == 0 || i == h - 1 || j == w - 1 || k == d - 1;
                    let nbrs = [
                        (i.wrapping_sub(1), j, k),
                        (i + 1, j, k),
                        (i, j.wrapping_sub(1), k),
                        (i, j + 1, k),
                        (i, j, k.wrapping_sub(1)),
                        (i, j, k + 1),
                    ];
                    for (a, b, c) in nbrs {
                        if a < h && b < w && c < d && !seen[idx(a, b, c)] && vol[[a, b, c]] >= threshold {
                            seen[idx(a, b, c)] = true;
                            stack.push((a, b, c));
                        }
                    }
                }
                if n >= min_area {
                    let nf = n as f64;
                    out.push(Detection {
                        x: s[1] / nf,
                        y: s[0] / nf,
                        z: Some(s[2] / nf),
                        score: sv / nf,
                        frame: 0,
                        area: n,
                        touches_border: border,
                    });
                }
            }
        }
    }
    out
}
