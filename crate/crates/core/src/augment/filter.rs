use ndarray::{Array2, Axis};

/// Normalised 1-D Gaussian kernel truncated at 4σ.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (4.0 * sigma).ceil().max(1.0) as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Index reflected into `[0, n)` (`d c b | a b c d | c b a`).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - m }) as usize
}

fn convolve_axis(a: &Array2<f64>, kernel: &[f64], axis: Axis) -> Array2<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = Array2::zeros(a.dim());
    let n = a.len_of(axis);
    for (src, mut dst) in a.lanes(axis).into_iter().zip(out.lanes_mut(axis)) {
        for i in 0..n {
            dst[i] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * src[reflect(i as isize + k as isize - r, n)])
                .sum();
        }
    }
    out
}

/// Separable Gaussian smoothing with reflective borders. `sigma ≤ 0`
/// returns the input unchanged.
pub fn gaussian_filter(a: &Array2<f64>, sigma: f64) -> Array2<f64> {
    if !(sigma > 0.0) {
        return a.clone();
    }
    let k = gaussian_kernel(sigma);
    convolve_axis(&convolve_axis(a, &k, Axis(0)), &k, Axis(1))
}
