//! 2-D FFT helpers over `ndarray` with per-thread plan caches.
//!
//! `ifft2` is normalised by `1/N`, so `ifft2(fft2(a)) == a`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (planner, cache) = &mut *guard;
        cache
            .entry((n, inverse))
            .or_insert_with(|| if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) })
            .clone()
    })
}

fn transform(a: &mut Array2<Complex64>, inverse: bool) {
    let (h, w) = a.dim();
    if h == 0 || w == 0 {
        return;
    }
    let row_plan = plan(w, inverse);
    let mut buf = vec![Complex64::default(); w];
    for mut row in a.axis_iter_mut(Axis(0)) {
        buf.iter_mut().zip(row.iter()).for_each(|(b, v)| *b = *v);
        row_plan.process(&mut buf);
        row.iter_mut().zip(buf.iter()).for_each(|(v, b)| *v = *b);
    }
    let col_plan = plan(h, inverse);
    let mut buf = vec![Complex64::default(); h];
    for mut col in a.axis_iter_mut(Axis(1)) {
        buf.iter_mut().zip(col.iter()).for_each(|(b, v)| *b = *v);
        col_plan.process(&mut buf);
        col.iter_mut().zip(buf.iter()).for_each(|(v, b)| *v = *b);
    }
    if inverse {
        let scale = 1.0 / (h * w) as f64;
        a.mapv_inplace(|v| v * scale);
    }
}

pub fn fft2(a: &Array2<Complex64>) -> Array2<Complex64> {
    let mut out = a.clone();
    transform(&mut out, false);
    out
}

pub fn ifft2(a: &Array2<Complex64>) -> Array2<Complex64> {
    let mut out = a.clone();
    transform(&mut out, true);
    out
}

pub fn fft2_real(a: &Array2<f64>) -> Array2<Complex64> {
    let mut out = a.mapv(|v| Complex64::new(v, 0.0));
    transform(&mut out, false);
    out
}

pub fn fft2_inplace(a: &mut Array2<Complex64>) {
    transform(a, false);
}

pub fn ifft2_inplace(a: &mut Array2<Complex64>) {
    transform(a, true);
}

/// Moves the zero-frequency (or origin) sample to the array centre.
pub fn fftshift<T: Clone>(a: &Array2<T>) -> Array2<T> {
    let (h, w) = a.dim();
    Array2::from_shape_fn((h, w), |(i, j)| a[[(i + h - h / 2) % h, (j + w - w / 2) % w]].clone())
}

/// Inverse of [`fftshift`].
pub fn ifftshift<T: Clone>(a: &Array2<T>) -> Array2<T> {
    let (h, w) = a.dim();
    Array2::from_shape_fn((h, w), |(i, j)| a[[(i + h / 2) % h, (j + w / 2) % w]].clone())
}
