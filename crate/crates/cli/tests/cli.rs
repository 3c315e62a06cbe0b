use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_synthscope"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}\nstdout: {}\nstderr: {}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
    })
}

/// One emitter per quadrant, so noiseless disks never touch.
fn quadrant_config() -> Value {
    let emitter = |name: &str, x: [f64; 2], y: [f64; 2]| {
        json!({ "feature": "PointEmitter", "name": name, "properties": { "x": { "uniform": x }, "y": { "uniform": y } } })
    };
    json!({
        "optics": { "grid": [48, 48], "pad": 16 },
        "nodes": [
            emitter("dot", [6.0, 18.0], [6.0, 18.0]),
            emitter("dot", [30.0, 42.0], [6.0, 18.0]),
            emitter("dot", [6.0, 18.0], [30.0, 42.0]),
            emitter("dot", [30.0, 42.0], [30.0, 42.0]),
            { "feature": "Fluorescence" },
            { "feature": "Offset", "properties": { "level": 0.01 } }
        ],
        "label": [ { "feature": "DiskMask", "properties": { "radius": 3, "source": "dot" } } ]
    })
}

fn write_config(dir: &Path, v: &Value) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, v.to_string()).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), &quadrant_config());
    let out = run(&["validate", "--config", &good]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["valid"], true);
    assert_eq!(v["findings"], json!([]));

    let mut bad = quadrant_config();
    bad["nodes"][4]["feature"] = json!("Fluoresence");
    let bad = write_config(dir.path(), &bad);
    let out = run(&["validate", "--config", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["findings"][0]["path"], "nodes/4");
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown-feature"));

    let out = run(&["validate", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["validate"]);
    assert_ne!(out.status.code(), Some(0));
    assert!(!out.stderr.is_empty());
}

#[test]
fn canonical_output_is_a_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &quadrant_config());
    let once = run(&["validate", "--config", &cfg, "--canonical"]);
    assert_eq!(once.status.code(), Some(0));
    let path = dir.path().join("canonical.json");
    std::fs::write(&path, &once.stdout).unwrap();
    let twice = run(&["validate", "--config", path.to_str().unwrap(), "--canonical"]);
    assert_eq!(once.stdout, twice.stdout);
}

#[test]
fn generate_then_detect_recovers_every_object() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &quadrant_config());
    let data = dir.path().join("data");
    let data = data.to_str().unwrap();
    let out = run(&["generate", "--config", &cfg, "--count", "10", "--seed", "5", "--out", data, "--workers", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert_eq!(summary["count"], 10);
    assert!(summary["samples_per_second"].as_f64().unwrap() > 0.0);

    let out = run(&["analyze", "detect", "--dataset", data]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["truth"], 40);
    assert_eq!(v["precision"], 1.0);
    assert_eq!(v["recall"], 1.0);
    assert!(v["rmse"].as_f64().unwrap() < 0.5);

    let out = run(&["analyze", "radial-center", "--dataset", data, "--window", "7"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["objects"].as_array().unwrap().len() + v["skipped"].as_u64().unwrap() as usize, 40);
    assert!(v["rmse"].as_f64().unwrap() < 0.2, "{}", v["rmse"]);

    let out = run(&["analyze", "link", "--dataset", data, "--max-displacement", "20"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["frames"], 10);
    // each quadrant is a stationary population, so links never jump quadrants
    assert_eq!(v["traces"].as_array().unwrap().len(), 4);

    let out = run(&["analyze", "count", "--dataset", data, "--calibration", "6"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["test"].as_array().unwrap().len(), 4);

    let out = run(&["analyze", "detect", "--dataset", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn png_format_flag_applies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &quadrant_config());
    let data = dir.path().join("data");
    let out = run(&["generate", "--config", &cfg, "--count", "2", "--out", data.to_str().unwrap(), "--format", "png"]);
    assert_eq!(out.status.code(), Some(0));
    let img = image::open(data.join("samples/00000001_image.png")).unwrap();
    assert!(img.as_luma16().is_some());
    let out = run(&["generate", "--config", &cfg, "--count", "2", "--out", data.to_str().unwrap(), "--format", "tiff"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn preview_writes_decodable_pngs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &quadrant_config());
    let img = dir.path().join("img.png");
    let label = dir.path().join("label.png");
    let out = bin()
        .args(["preview", "--config", &cfg, "--seed", "2", "--out", img.to_str().unwrap(), "--label", label.to_str().unwrap()])
        .env("SYNTHSCOPE_LOG", "debug")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for p in [&img, &label] {
        let decoded = image::open(p).unwrap();
        assert_eq!((decoded.width(), decoded.height()), (48, 48));
    }
    assert_eq!(stdout_json(&out).as_array().unwrap().len(), 2);
}

#[test]
fn evaluation_failures_are_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = quadrant_config();
    c["nodes"][5]["properties"]["level"] = json!(-10);
    c["nodes"].as_array_mut().unwrap().push(json!({ "feature": "Poisson", "properties": { "snr": 5 } }));
    let cfg = write_config(dir.path(), &c);
    let data = dir.path().join("data");
    let out = run(&["generate", "--config", &cfg, "--count", "2", "--out", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["generate", "--config", &cfg, "--count", "2", "--out", data.to_str().unwrap(), "--lenient"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["failed"], 2);
}
