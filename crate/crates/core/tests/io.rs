use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayD, IxDyn};
use num_complex::Complex64;
use proptest::prelude::*;
use serde_json::json;
use npyz::WriterBuilder;
use sha2::{Digest, Sha256};
use synthscope::io::{
    compare_frames, export_array, generate_dataset, import_image, load_array, load_config, npy_bytes, parse_config,
    preview_png, read_dataset_manifest, read_npy, read_png16, read_sample_manifest, ConfigError, ExportTarget,
    IoError, NodeConfig, PipelineConfig, Registry, SampleStatus,
};
use synthscope::pipeline::{ImageData, SampleContext};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn shipped() -> Vec<(String, String)> {
    let mut out: Vec<_> = fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn minimal() -> String {
    json!({
        "optics": { "grid": [32, 32], "pad": 16 },
        "nodes": [
            { "feature": "PointEmitter", "properties": { "x": 15.5, "y": 16 } },
            { "feature": "Fluorescence" }
        ]
    })
    .to_string()
}

fn invalid(text: &str) -> Vec<(String, String)> {
    match load_config(text) {
        Err(ConfigError::Invalid(r)) => r.errors().map(|f| (f.path.clone(), f.rule.clone())).collect(),
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn minimal_config_round_trips() {
    let c = load_config(&minimal()).unwrap();
    let text = c.to_json_string();
    let again = load_config(&text).unwrap();
    assert_eq!(again.to_json_string(), text);
    assert_eq!(again, c);
    // defaults are echoed
    let emitter = &c.nodes[0].properties;
    assert_eq!(emitter["intensity"], json!(1.0));
    assert_eq!(emitter["z"], json!(0.0));
    assert_eq!(c.optics.na, 0.8);
}

#[test]
fn shipped_configs_round_trip_and_evaluate() {
    let registry = Registry::standard();
    let names: Vec<_> = shipped().into_iter().map(|(n, _)| n).collect();
    assert_eq!(names.len(), 6, "{names:?}");
    for (name, text) in shipped() {
        let once = load_config(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let s1 = once.to_json_string();
        let s2 = load_config(&s1).unwrap().to_json_string();
        assert_eq!(s1, s2, "{name}");
        let pair = once.build(&registry).unwrap().sample(SampleContext::new(1, 0)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(pair.image.data.shape().len() == 2, "{name}");
        assert!(!pair.label.data.shape().is_empty(), "{name}");
    }
}

#[test]
fn ellipse_pipeline_gives_a_real_image() {
    let text = fs::read_to_string(configs_dir().join("ellipses.json")).unwrap();
    let c = load_config(&text).unwrap();
    let pair = c.build(&Registry::standard()).unwrap().sample(SampleContext::new(3, 0)).unwrap();
    let img = pair.image.data.real_2d().expect("2-D real image");
    assert_eq!(img.dim(), (128, 128));
    assert_eq!(pair.image.records_of("Ellipse").count(), 5);
    assert!(img.iter().all(|v| *v >= 0.0));
    let label = pair.label.data.real_2d().unwrap();
    assert!(label.iter().all(|v| *v == 0.0 || *v == 1.0));
    assert!(label.sum() > 0.0);
}

#[test]
fn unknown_feature_names_its_path() {
    let text = json!({
        "nodes": [
            { "feature": "Duplicate", "properties": { "n": 2 }, "children": [ { "feature": "Elipse" } ] },
            { "feature": "Fluorescence" }
        ]
    })
    .to_string();
    assert_eq!(invalid(&text), vec![("nodes/0/children/0".to_string(), "unknown-feature".to_string())]);
}

#[test]
fn parse_errors_carry_positions() {
    match load_config("{\n  \"nodes\": [\n    { \"feature\": }\n  ]\n}") {
        Err(ConfigError::Parse { line, column, .. }) => {
            assert_eq!(line, 3);
            assert!(column > 10);
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(load_config("{\"nodes\": [], \"extra\": 1}"), Err(ConfigError::Parse { .. })));
}

#[test]
fn structural_rules_are_reported() {
    let case = |nodes: serde_json::Value| invalid(&json!({ "nodes": nodes }).to_string());
    let pe = json!({ "feature": "PointEmitter", "properties": { "x": 1, "y": 1 } });

    assert_eq!(case(json!([{ "feature": "Gaussian", "properties": { "sigma": 1 } }]))[0].1, "empty-input");
    assert_eq!(case(json!([pe, pe]))[0], ("nodes".to_string(), "output-arity".to_string()));
    assert_eq!(case(json!([{ "feature": "PointEmitter", "properties": { "x": 1 } }, { "feature": "Fluorescence" }]))[0].1, "missing-property");
    assert_eq!(case(json!([{ "feature": "Duplicate", "properties": { "n": 0 }, "children": [pe] }, { "feature": "Fluorescence" }]))[0].1, "duplicate-count");
    assert_eq!(case(json!([{ "feature": "Duplicate", "properties": { "n": 2 } }, { "feature": "Fluorescence" }]))[0].1, "duplicate-arity");
    let cyclic = json!({ "feature": "PointEmitter", "properties": { "x": { "expr": "y" }, "y": { "expr": "x + 1" } } });
    assert_eq!(case(json!([cyclic, { "feature": "Fluorescence" }]))[0].1, "cycle");
    let dangling = json!({ "feature": "PointEmitter", "properties": { "x": { "expr": "ghost.x" }, "y": 1 } });
    assert_eq!(case(json!([dangling, { "feature": "Fluorescence" }]))[0].1, "unknown-source");
    assert_eq!(case(json!([pe, { "feature": "Fluorescence" }, { "feature": "DiskMask" }]))[0].1, "stage");
    assert_eq!(case(json!([pe, { "feature": "Fluorescence" }, { "feature": "Poisson" }]))[0].1, "missing-property");
    let typed = json!({ "feature": "PointEmitter", "properties": { "x": "left", "y": 1 } });
    assert_eq!(case(json!([typed, { "feature": "Fluorescence" }]))[0].1, "property-type");
    let bad = json!({ "feature": "PointEmitter", "properties": { "x": { "uniform": [3, 1] }, "y": 1 } });
    assert_eq!(case(json!([bad, { "feature": "Fluorescence" }]))[0].1, "property-syntax");
}

#[test]
fn duplicate_list_lengths_are_tracked() {
    let pe = NodeConfig::new("PointEmitter").prop("x", json!(3)).prop("y", json!(4));
    // Duplicate(3) of an append yields three images; a following merge makes one.
    let ok = PipelineConfig::new(vec![
        NodeConfig::new("Duplicate").prop("n", json!(3)).child(pe.clone()),
        NodeConfig::new("Fluorescence"),
    ]);
    assert!(load_config(&ok.to_json_string()).is_ok());
    let unmerged = PipelineConfig::new(vec![NodeConfig::new("Duplicate").prop("n", json!(3)).child(pe)]);
    let errs = invalid(&unmerged.to_json_string());
    assert_eq!(errs[0].1, "output-arity");
}

#[test]
fn label_sources_must_exist() {
    let text = json!({
        "nodes": [
            { "feature": "PointEmitter", "name": "dot", "properties": { "x": 1, "y": 1 } },
            { "feature": "Fluorescence" }
        ],
        "label": [ { "feature": "DiskMask", "properties": { "source": "spot" } } ]
    })
    .to_string();
    assert_eq!(invalid(&text), vec![("label/0".to_string(), "unknown-source".to_string())]);
}

#[test]
fn unknown_properties_only_warn() {
    let text = json!({
        "nodes": [
            { "feature": "PointEmitter", "properties": { "x": 1, "y": 1, "brightness_class": 2 } },
            { "feature": "Fluorescence" }
        ]
    })
    .to_string();
    let (_, report) = synthscope::io::load_config_with(&text, &Registry::standard()).unwrap();
    let w: Vec<_> = report.warnings().map(|f| f.rule.as_str()).collect();
    assert_eq!(w, vec!["unknown-property"]);
}

fn digest_tree(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, hex::encode(Sha256::digest(fs::read(&p).unwrap())));
            }
        }
    }
    out
}

fn small_fig6() -> PipelineConfig {
    let mut c = load_config(&fs::read_to_string(configs_dir().join("ellipses.json")).unwrap()).unwrap();
    c.optics.grid = [48, 48];
    c.optics.pad = 16;
    load_config(&c.to_json_string()).unwrap()
}

#[test]
fn dataset_is_worker_independent() {
    let c = small_fig6();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let s1 = generate_dataset(&c, 10, 42, a.path(), 1).unwrap();
    let s8 = generate_dataset(&c, 10, 42, b.path(), 8).unwrap();
    assert_eq!(s1.config_hash, s8.config_hash);
    let (da, db) = (digest_tree(a.path()), digest_tree(b.path()));
    assert_eq!(da.len(), 1 + 10 * 3);
    assert_eq!(da, db);
    let c2 = tempfile::tempdir().unwrap();
    generate_dataset(&c, 10, 43, c2.path(), 4).unwrap();
    assert_ne!(digest_tree(c2.path())["samples/00000003_image.npy"], da["samples/00000003_image.npy"]);
}

#[test]
fn manifests_reproduce_the_generating_records() {
    let c = small_fig6();
    let dir = tempfile::tempdir().unwrap();
    generate_dataset(&c, 4, 7, dir.path(), 2).unwrap();
    let ds = read_dataset_manifest(dir.path()).unwrap();
    assert_eq!(ds.count, 4);
    assert_eq!(ds.config, c);
    assert_eq!(ds.config_hash, c.hash());
    let generator = c.build(&Registry::standard()).unwrap();
    for entry in &ds.samples {
        let m = read_sample_manifest(&dir.path().join(&entry.manifest)).unwrap();
        let pair = generator.sample(SampleContext::new(7, entry.index)).unwrap();
        assert_eq!(m.records, pair.image.records.to_vec());
        assert_eq!(m.objects.len(), 5);
        assert_eq!(m.label_kind, vec!["DiskMask".to_string()]);
        let img = load_array(dir.path(), m.array("image").unwrap()).unwrap();
        assert_eq!(img, pair.image.data);
        let files: Vec<_> = m.arrays.iter().map(|a| a.file.clone()).collect();
        assert_eq!(files.len(), 2);
        assert_ne!(files[0], files[1]);
    }
}

#[test]
fn zero_count_writes_only_the_dataset_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let s = generate_dataset(&small_fig6(), 0, 1, dir.path(), 2).unwrap();
    assert_eq!(s.count, 0);
    let files = digest_tree(dir.path());
    assert_eq!(files.keys().cloned().collect::<Vec<_>>(), vec!["dataset.json".to_string()]);
}

#[test]
fn lenient_mode_records_failures() {
    // The offset is negative for some samples, which Poisson rejects.
    let text = json!({
        "optics": { "grid": [24, 24], "pad": 8 },
        "nodes": [
            { "feature": "PointEmitter", "properties": { "x": 12, "y": 12 } },
            { "feature": "Fluorescence" },
            { "feature": "Offset", "properties": { "level": { "uniform": [-1, 1] } } },
            { "feature": "Poisson", "properties": { "scale": 100 } }
        ],
        "export": { "lenient": true }
    })
    .to_string();
    let c = load_config(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let s = generate_dataset(&c, 12, 5, dir.path(), 3).unwrap();
    assert!(s.failed > 0 && s.failed < 12, "{}", s.failed);
    let ds = read_dataset_manifest(dir.path()).unwrap();
    let failed = ds.samples.iter().find(|e| e.status == SampleStatus::Failed).unwrap();
    let m = read_sample_manifest(&dir.path().join(&failed.manifest)).unwrap();
    assert!(m.error.as_deref().unwrap().contains("Poisson"));
    assert!(m.arrays.is_empty());

    let mut strict = c.clone();
    strict.export.lenient = false;
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(generate_dataset(&strict, 12, 5, dir.path(), 3), Err(IoError::Sample { .. })));
}

#[test]
fn png_export_uses_declared_or_data_range() {
    let mut c = small_fig6();
    c.export.format = synthscope::io::ExportFormat::Png;
    let dir = tempfile::tempdir().unwrap();
    generate_dataset(&c, 2, 9, dir.path(), 2).unwrap();
    let m = read_sample_manifest(&dir.path().join("samples/00000001.json")).unwrap();
    let arr = m.array("image").unwrap();
    assert!(arr.file.ends_with(".png"));
    let back = load_array(dir.path(), arr).unwrap();
    let pair = c.build(&Registry::standard()).unwrap().sample(SampleContext::new(9, 1)).unwrap();
    let [lo, hi] = arr.range.unwrap();
    let step = (hi - lo) / 65535.0;
    let orig = pair.image.data.real_2d().unwrap();
    let back = back.real_2d().unwrap();
    assert!(orig.iter().zip(back.iter()).all(|(a, b)| (a - b).abs() <= 0.5 * step + 1e-12));
}

#[test]
fn npy_is_readable_by_a_third_party_reader() {
    let a = ArrayD::from_shape_vec(IxDyn(&[2, 2]), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let bytes = npy_bytes(&ImageData::Real(a));
    let npy = npyz::NpyFile::new(&bytes[..]).unwrap();
    assert_eq!(npy.shape(), &[2, 2]);
    assert_eq!(npy.order(), npyz::Order::C);
    let values: Vec<f64> = npy.into_vec().unwrap();
    assert_eq!(values, vec![1.0, 0.0, 0.0, 1.0]);

    let z = ArrayD::from_shape_vec(IxDyn(&[3]), vec![Complex64::new(1.5, -2.0), Complex64::new(0.0, 1e-300), Complex64::new(-0.0, 7.0)]).unwrap();
    let bytes = npy_bytes(&ImageData::Complex(z.clone()));
    let values: Vec<num_complex::Complex<f64>> = npyz::NpyFile::new(&bytes[..]).unwrap().into_vec().unwrap();
    assert_eq!(values, z.iter().copied().collect::<Vec<_>>());
}

#[test]
fn third_party_npy_files_are_readable() {
    let mut buf = Vec::new();
    {
        let mut w = npyz::WriteOptions::<f64>::new().default_dtype().shape(&[2, 3]).writer(&mut buf).begin_nd().unwrap();
        w.extend([1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        w.finish().unwrap();
    }
    let ImageData::Real(a) = read_npy(&buf).unwrap() else { panic!("real") };
    assert_eq!(a.shape(), &[2, 3]);
    assert_eq!(a[[1, 0]], 4.0);
}

#[test]
fn png16_is_standard_sixteen_bit_grayscale() {
    let a = Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f64);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.png");
    export_array(&ImageData::real2(a.clone()), ExportTarget::Png16 { range: Some([0.0, 11.0]) }, &path).unwrap();
    let img = image::open(&path).unwrap();
    let luma = img.as_luma16().expect("16-bit grayscale");
    for ((i, j), v) in a.indexed_iter() {
        let expected = (v / 11.0 * 65535.0).round() as u16;
        assert_eq!(luma.get_pixel(j as u32, i as u32).0[0], expected);
    }
    let back = read_png16(&fs::read(&path).unwrap()).unwrap();
    assert_eq!(back.range, Some([0.0, 11.0]));
}

#[test]
fn png16_rejects_unsupported_arrays() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.png");
    let neg = ImageData::real2(Array2::from_elem((2, 2), -0.5));
    assert!(export_array(&neg, ExportTarget::Png16 { range: None }, &path).is_err());
    let c = ImageData::complex2(Array2::from_elem((2, 2), Complex64::new(1.0, 0.0)));
    assert!(export_array(&c, ExportTarget::Png16 { range: None }, &path).is_err());
    let vol = ImageData::Real(ArrayD::zeros(IxDyn(&[2, 2, 2])));
    assert!(export_array(&vol, ExportTarget::Png16 { range: None }, &path).is_err());
    export_array(&c, ExportTarget::NpyV1, &path).unwrap();
    assert_eq!(read_npy(&fs::read(&path).unwrap()).unwrap(), c);
}

#[test]
fn imports_tiff_and_png() {
    let a = Array2::from_shape_fn((6, 5), |(i, j)| (i * 5 + j) as f32 / 29.0);
    let raw: Vec<u16> = a.iter().map(|v| (v * 65535.0).round() as u16).collect();
    let tiff = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(5, 6, raw).unwrap();
    let mut bytes = std::io::Cursor::new(Vec::new());
    tiff.write_to(&mut bytes, image::ImageFormat::Tiff).unwrap();
    let back = import_image(bytes.get_ref()).unwrap();
    assert_eq!(back.dim(), (6, 5));
    assert!(back.iter().zip(a.iter()).all(|(x, y)| (x - f64::from(*y)).abs() < 1e-4));

    let png8 = image::GrayImage::from_fn(4, 3, |x, y| image::Luma([(x * 60 + y) as u8]));
    let mut bytes = std::io::Cursor::new(Vec::new());
    png8.write_to(&mut bytes, image::ImageFormat::Png).unwrap();
    let back = import_image(bytes.get_ref()).unwrap();
    assert!((back[[2, 3]] - 182.0 / 255.0).abs() < 1e-6);

    assert!(import_image(b"definitely not an image").is_err());
}

#[test]
fn engine_preview_self_comparison_overlaps() {
    let c = small_fig6();
    let pair = c.build(&Registry::standard()).unwrap().sample(SampleContext::new(11, 0)).unwrap();
    let (png, _) = preview_png(&pair.image.data).unwrap();
    let experimental = import_image(&png).unwrap();
    let synthetic = pair.image.data.real_2d().unwrap();
    let cmp = compare_frames(synthetic, experimental.view());
    assert!(cmp.histogram_overlap > 0.99, "{}", cmp.histogram_overlap);
}

#[test]
fn parse_only_preserves_raw_descriptors() {
    let raw = parse_config(&minimal()).unwrap();
    assert!(!raw.nodes[0].properties.contains_key("intensity"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn config_round_trip_is_a_fixed_point(
        n in 1usize..6,
        lo in -50.0f64..50.0,
        width in 0.001f64..40.0,
        level in 0.0f64..2.0,
        snr in 0.5f64..100.0,
        use_expr in any::<bool>(),
    ) {
        let y = if use_expr { json!({ "expr": "x * 0.5 + 1" }) } else { json!({ "normal": { "mean": lo, "std": width } }) };
        let text = json!({
            "optics": { "grid": [40, 40] },
            "nodes": [
                { "feature": "Duplicate", "properties": { "n": n }, "children": [
                    { "feature": "Ellipse", "name": "e", "properties": {
                        "x": { "uniform": [lo, lo + width] }, "y": y, "a": 3, "b": 2 } } ] },
                { "feature": "Fluorescence" },
                { "feature": "Offset", "properties": { "level": level } },
                { "feature": "Poisson", "properties": { "snr": snr } }
            ],
            "label": [ { "feature": "GaussianDensity", "properties": { "source": "e" } } ]
        })
        .to_string();
        let s1 = load_config(&text).unwrap().to_json_string();
        let s2 = load_config(&s1).unwrap().to_json_string();
        prop_assert_eq!(s1, s2);
    }

    #[test]
    fn npy_round_trip_is_bit_exact(shape in proptest::collection::vec(0usize..5, 0..4), seed in any::<u64>()) {
        let n: usize = shape.iter().product();
        let mut state = seed;
        let v: Vec<f64> = (0..n).map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            f64::from_bits(state)
        }).collect();
        let a = ArrayD::from_shape_vec(IxDyn(&shape), v.clone()).unwrap();
        let bytes = npy_bytes(&ImageData::Real(a));
        let ImageData::Real(back) = read_npy(&bytes).unwrap() else { unreachable!() };
        prop_assert_eq!(back.shape(), &shape[..]);
        prop_assert!(back.iter().zip(&v).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn imports_float_tiff_values_unscaled() {
    let values: Vec<f32> = (0..12).map(|i| i as f32 * 0.75 - 2.0).collect();
    let mut bytes = std::io::Cursor::new(Vec::new());
    tiff::encoder::TiffEncoder::new(&mut bytes)
        .unwrap()
        .write_image::<tiff::encoder::colortype::Gray32Float>(4, 3, &values)
        .unwrap();
    let back = import_image(bytes.get_ref()).unwrap();
    assert_eq!(back.dim(), (3, 4));
    assert!(back.iter().zip(&values).all(|(a, b)| *a == f64::from(*b)));
    assert!(matches!(
        synthscope::io::import_image_limited(bytes.get_ref(), 11),
        Err(synthscope::io::ImageError::TooLarge { width: 4, height: 3, limit: 11 })
    ));
}
