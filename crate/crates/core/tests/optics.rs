use std::time::Instant;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synthscope::optics::fft::{fft2, ifft2};
use synthscope::optics::{
    coherent_field, fluorescence_plane, image_coherent, image_fluorescence, incoherent_psf, make_pupil, propagate, propagating_power,
    pupil_on_grid, Aberration, CoherentImage, CoherentMode, Grid, OpticalConfig,
};
use synthscope::pipeline::{ImageData, Plane, TaggedImage};
use synthscope::scatterers::{mie_pupil_field, point_spectrum, MieSphere};

fn fine_optics() -> OpticalConfig {
    // 0.05 µm object pixels sample the 0.48 µm Airy radius finely
    OpticalConfig { pixel_size: 0.5, grid: [192, 192], pad: 32, ..OpticalConfig::default() }
}

fn emitter(x: f64, y: f64, intensity: f64, cfg: &OpticalConfig) -> TaggedImage {
    TaggedImage::new(ImageData::complex2(point_spectrum(x, y, intensity, &cfg.sim_grid()))).with_plane(Plane::Frequency)
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs_diff_c(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Column mirror on an FFT-ordered axis: index j ↔ (w − j) mod w.
fn mirror_x<T: Clone>(a: &Array2<T>) -> Array2<T> {
    let w = a.ncols();
    Array2::from_shape_fn(a.dim(), |(i, j)| a[[i, (w - j) % w]].clone())
}

#[test]
fn psf_is_normalised() {
    for ab in [vec![], vec![Aberration::coma_x(0.7)], vec![Aberration::defocus(1.3), Aberration::spherical(-0.4)]] {
        let psf = incoherent_psf(&make_pupil(&OpticalConfig::default(), &ab).unwrap());
        assert!((psf.sum() - 1.0).abs() < 1e-6);
        assert!(psf.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn unaberrated_psf_is_an_airy_pattern() {
    let cfg = fine_optics();
    let psf = incoherent_psf(&make_pupil(&cfg, &[]).unwrap());
    let dx = cfg.object_pixel();
    let want = 0.61 * cfg.wavelength / cfg.na;
    for profile in [psf.row(0).to_vec(), psf.column(0).to_vec()] {
        let j = (1..profile.len() / 2).find(|&j| profile[j] < profile[j - 1] && profile[j] <= profile[j + 1]).unwrap();
        let r = j as f64 * dx;
        assert!((r - want).abs() <= 0.5 * dx, "first zero at {r} µm, expected {want} µm");
        assert!(profile[j] < 1e-3 * profile[0]);
    }
}

#[test]
fn pupil_cutoff_matches_the_grid() {
    let cfg = OpticalConfig::default();
    let pupil = make_pupil(&cfg, &[]).unwrap();
    let grid = cfg.sim_grid();
    let (dky, dkx) = grid.dk();
    let (ky, kx) = (grid.ky(), grid.kx());
    let radius = pupil
        .values
        .indexed_iter()
        .filter(|(_, v)| v.norm() > 0.0)
        .map(|((i, j), _)| ((kx[j] / dkx).powi(2) + (ky[i] / dky).powi(2)).sqrt())
        .fold(0.0, f64::max);
    assert!((radius - cfg.cutoff() / dkx).abs() <= 1.0, "{radius} vs {}", cfg.cutoff() / dkx);
    assert!(pupil.phase().iter().all(|&p| p == 0.0));
    assert!(pupil.values.iter().all(|v| v.norm() == 0.0 || (v.norm() - 1.0).abs() < 1e-15));
}

#[test]
fn coma_sign_flip_mirrors_the_psf() {
    let cfg = OpticalConfig::default();
    let plus = incoherent_psf(&make_pupil(&cfg, &[Aberration::coma_x(0.9)]).unwrap());
    let minus = incoherent_psf(&make_pupil(&cfg, &[Aberration::coma_x(-0.9)]).unwrap());
    assert!(max_abs_diff(&plus, &minus) > 1e-4, "coma must break the symmetry");
    assert!(max_abs_diff(&mirror_x(&plus), &minus) < 1e-10);

    let plus = incoherent_psf(&make_pupil(&cfg, &[Aberration::coma_y(0.9)]).unwrap());
    let minus = incoherent_psf(&make_pupil(&cfg, &[Aberration::coma_y(-0.9)]).unwrap());
    let mirror_y = plus.t().to_owned();
    let mirror_y = mirror_x(&mirror_y).t().to_owned();
    assert!(max_abs_diff(&mirror_y, &minus) < 1e-10);
}

#[test]
fn defocus_psf_is_symmetric_in_sign() {
    let cfg = OpticalConfig::default();
    let plus = incoherent_psf(&make_pupil(&cfg, &[Aberration::defocus(1.5)]).unwrap());
    let minus = incoherent_psf(&make_pupil(&cfg, &[Aberration::defocus(-1.5)]).unwrap());
    assert!(max_abs_diff(&plus, &minus) < 1e-9);
}

#[test]
fn aberration_phases_compose_linearly() {
    let grid = OpticalConfig::default().sim_grid();
    let cutoff = OpticalConfig::default().cutoff();
    let a = [Aberration::coma_x(0.4), Aberration::defocus(-0.8)];
    let b = [Aberration::spherical(0.3), Aberration::coma_y(1.1)];
    let both: Vec<_> = a.iter().chain(&b).cloned().collect();
    let (pa, pb, pab) = (pupil_on_grid(grid, cutoff, &a), pupil_on_grid(grid, cutoff, &b), pupil_on_grid(grid, cutoff, &both));
    let product = &pa.values * &pb.values;
    assert!(max_abs_diff_c(&product, &pab.values) < 1e-12);
}

/// Random field band-limited below the medium wavenumber.
fn band_limited(cfg: &OpticalConfig, n: usize, seed: u64) -> Array2<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid::new(n, n, cfg.object_pixel());
    let (ky, kx) = (grid.ky(), grid.kx());
    let limit = 0.9 * cfg.k_medium();
    let spec = Array2::from_shape_fn((n, n), |(i, j)| {
        if (kx[j].powi(2) + ky[i].powi(2)).sqrt() < limit {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    ifft2(&spec)
}

#[test]
fn propagation_group_law_and_parseval() {
    let start = Instant::now();
    let cfg = OpticalConfig::default();
    let field = band_limited(&cfg, 256, 3);
    let scale = field.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let power = propagating_power(&field, &cfg);
    let total: f64 = field.iter().map(|v| v.norm_sqr()).sum();
    let zs = [1.0, -1.0, 10.0, -10.0, 100.0, -100.0];
    let moved: Vec<_> = zs.iter().map(|&z| propagate(&field, z, &cfg)).collect();
    for (z, f) in zs.iter().zip(&moved) {
        assert!((propagating_power(f, &cfg) / power - 1.0).abs() < 1e-10, "z = {z}");
        let t: f64 = f.iter().map(|v| v.norm_sqr()).sum();
        assert!((t / total - 1.0).abs() < 1e-10, "z = {z}");
    }
    for &z1 in &zs {
        for (j, &z2) in zs.iter().enumerate() {
            let composed = propagate(&moved[j], z1, &cfg);
            let direct = if z1 + z2 == 0.0 { field.clone() } else { propagate(&field, z1 + z2, &cfg) };
            let err = max_abs_diff_c(&composed, &direct) / scale;
            assert!(err < 1e-9, "z1 = {z1}, z2 = {z2}: {err}");
        }
    }
    assert!(propagate(&field, 0.0, &cfg) == field);
    assert!(start.elapsed().as_secs_f64() < 5.0, "{:?}", start.elapsed());
}

#[test]
fn evanescent_components_decay() {
    let cfg = OpticalConfig::default();
    let n = 64;
    let grid = Grid::new(n, n, cfg.object_pixel());
    let kx = grid.kx();
    let j = (0..n).find(|&j| kx[j] > 1.5 * cfg.k_medium()).unwrap();
    let mut spec = Array2::zeros((n, n));
    spec[[0, j]] = Complex64::new(1.0, 0.0);
    let field = ifft2(&spec);
    let out = fft2(&propagate(&field, 0.5, &cfg));
    let kappa = (kx[j].powi(2) - cfg.k_medium().powi(2)).sqrt();
    assert!((out[[0, j]].re - (-0.5 * kappa).exp()).abs() < 1e-12);
    assert!(out[[0, j]].im.abs() < 1e-12);
}

fn holography_optics() -> OpticalConfig {
    OpticalConfig { grid: [64, 64], pad: 16, wavelength: 0.532, magnification: 20.0, pixel_size: 2.0, ..OpticalConfig::default() }
}

fn random_scene(cfg: &OpticalConfig, rng: &mut ChaCha8Rng) -> Vec<TaggedImage> {
    (0..rng.random_range(1..4))
        .map(|_| {
            let s = MieSphere {
                x: rng.random_range(8.0..56.0),
                y: rng.random_range(8.0..56.0),
                z: rng.random_range(-3.0..3.0),
                radius: rng.random_range(0.2..1.0),
                refractive_index: Complex64::new(rng.random_range(1.4..1.7), rng.random_range(0.0..0.01)),
            };
            TaggedImage::new(ImageData::complex2(mie_pupil_field(&s, cfg).unwrap())).with_plane(Plane::Frequency)
        })
        .collect()
}

#[test]
fn inline_hologram_is_the_squared_field() {
    let cfg = holography_optics();
    let pupil = make_pupil(&cfg, &[]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let scene = random_scene(&cfg, &mut rng);
        let refs: Vec<&TaggedImage> = scene.iter().collect();
        let CoherentImage::Field(field) = image_coherent(&refs, &cfg, &pupil, CoherentMode::OffAxisHolography).unwrap() else {
            panic!("off-axis holography returns the complex field");
        };
        let CoherentImage::Intensity(inline) = image_coherent(&refs, &cfg, &pupil, CoherentMode::InlineHolography).unwrap() else {
            panic!("in-line holography returns an intensity");
        };
        assert!(max_abs_diff(&field.mapv(|v| v.norm_sqr()), &inline) <= 1e-12);
        assert!(field.iter().any(|v| (v - Complex64::new(1.0, 0.0)).norm() > 1e-6));
    }
}

#[test]
fn empty_scene_is_the_reference_wave() {
    let cfg = holography_optics();
    let pupil = make_pupil(&cfg, &[]).unwrap();
    let CoherentImage::Field(f) = image_coherent(&[], &cfg, &pupil, CoherentMode::OffAxisHolography).unwrap() else {
        panic!("complex output expected");
    };
    assert_eq!(f.dim(), (64, 64));
    assert!(f.iter().all(|&v| v == Complex64::new(1.0, 0.0)));
}

#[test]
fn brightfield_contrast_expands_algebraically() {
    let cfg = holography_optics();
    let pupil = make_pupil(&cfg, &[]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let scene = random_scene(&cfg, &mut rng);
    let refs: Vec<&TaggedImage> = scene.iter().collect();
    let es = coherent_field(&refs, &cfg, &pupil).unwrap().mapv(|v| v - Complex64::new(1.0, 0.0));
    let CoherentImage::Intensity(bf) = image_coherent(&refs, &cfg, &pupil, CoherentMode::Brightfield).unwrap() else {
        panic!("intensity expected");
    };
    let expanded = es.mapv(|e| 1.0 + 2.0 * e.re + e.norm_sqr());
    assert!(max_abs_diff(&bf, &expanded) < 1e-12);
}

#[test]
fn coherent_imaging_is_additive_before_the_modulus() {
    let cfg = holography_optics();
    let pupil = make_pupil(&cfg, &[Aberration::coma_x(0.5)]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = random_scene(&cfg, &mut rng);
    let b = random_scene(&cfg, &mut rng);
    let one = |s: &[TaggedImage]| {
        let refs: Vec<&TaggedImage> = s.iter().collect();
        coherent_field(&refs, &cfg, &pupil).unwrap().mapv(|v| v - Complex64::new(1.0, 0.0))
    };
    let both: Vec<TaggedImage> = a.iter().chain(&b).cloned().collect();
    assert!(max_abs_diff_c(&(one(&a) + one(&b)), &one(&both)) < 1e-12);
}

#[test]
fn fluorescence_conserves_intensity() {
    let cfg = fine_optics();
    let pupil = make_pupil(&cfg, &[]).unwrap();
    for i0 in [1.0, 37.5] {
        let e = emitter(96.3, 81.7, i0, &cfg);
        let plane = fluorescence_plane(&[&e], &cfg, &pupil).unwrap();
        assert!((plane.sum() - i0).abs() <= 1e-6 * i0);
    }
}

#[test]
fn fluorescence_superposes_emitters() {
    let cfg = fine_optics();
    let pupil = make_pupil(&cfg, &[Aberration::coma_y(0.6)]).unwrap();
    let a = emitter(40.2, 70.9, 1.0, &cfg);
    let b = emitter(120.5, 33.1, 2.5, &cfg);
    let single = |imgs: &[&TaggedImage]| fluorescence_plane(imgs, &cfg, &pupil).unwrap();
    let sum = single(&[&a]) + single(&[&b]);
    assert!(max_abs_diff(&sum, &single(&[&a, &b])) < 1e-9);
}

fn centroid(a: &Array2<f64>) -> (f64, f64) {
    let total = a.sum();
    let (mut x, mut y) = (0.0, 0.0);
    for ((i, j), &v) in a.indexed_iter() {
        x += j as f64 * v;
        y += i as f64 * v;
    }
    (x / total, y / total)
}

#[test]
fn half_pixel_shift_moves_the_centroid() {
    // the cropped output image: on the periodic plane the slow Airy tails wrap around
    let cfg = OpticalConfig::default();
    let pupil = make_pupil(&cfg, &[]).unwrap();
    let img = |x: f64| image_fluorescence(&[&emitter(x, 64.0, 1.0, &cfg)], &cfg, &pupil).unwrap();
    let (x0, y0) = centroid(&img(64.0));
    let (x1, y1) = centroid(&img(64.5));
    assert!((x1 - x0 - 0.5).abs() <= 0.01, "{}", x1 - x0);
    assert!((y1 - y0).abs() <= 0.01);
}

#[test]
fn integer_translation_commutes_with_imaging() {
    let cfg = fine_optics();
    let pupil = make_pupil(&cfg, &[Aberration::coma_x(0.4)]).unwrap();
    let base = fluorescence_plane(&[&emitter(50.3, 60.6, 1.0, &cfg)], &cfg, &pupil).unwrap();
    let moved = fluorescence_plane(&[&emitter(57.3, 55.6, 1.0, &cfg)], &cfg, &pupil).unwrap();
    let (h, w) = base.dim();
    let rolled = Array2::from_shape_fn((h, w), |(i, j)| base[[(i + 5) % h, (j + w - 7) % w]]);
    assert!(max_abs_diff(&rolled, &moved) < 1e-9);
}

