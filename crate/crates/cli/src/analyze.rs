//! `analyze` subcommands: classical baselines evaluated against the ground
//! truth stored in a dataset's manifests.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Subcommand};
use ndarray::{s, Array2, Ix3};
use serde_json::{json, Value};
use synthscope::analysis::{
    detect_from_map, detect_from_volume, link_traces, match_detections, radial_center, CountCalibration, Detection,
    DEFAULT_MIN_AREA, DEFAULT_THRESHOLD,
};
use synthscope::io::{display_plane, load_array, read_dataset_manifest, read_sample_manifest, SampleManifest, SampleStatus};
use synthscope::pipeline::ImageData;

#[derive(Args, Clone)]
pub struct Source {
    /// Dataset directory written by `generate`.
    #[arg(long)]
    dataset: PathBuf,
    /// Array analysed in each sample (`image` or `label`).
    #[arg(long)]
    role: Option<String>,
}

#[derive(Args, Clone, Copy)]
pub struct Threshold {
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_AREA)]
    min_area: usize,
}

#[derive(Subcommand)]
pub enum Method {
    /// Sub-pixel centres of every object from a window of the image.
    RadialCenter {
        #[command(flatten)]
        source: Source,
        /// Odd window side in pixels, centred on the rounded true position.
        #[arg(long, default_value_t = 9)]
        window: usize,
    },
    /// Connected-component detection on probability maps, matched to the objects.
    Detect {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        threshold: Threshold,
        /// Largest distance (px) of a matched pair.
        #[arg(long, default_value_t = 3.0)]
        radius: f64,
    },
    /// Detections linked into traces, one frame per sample in index order.
    Link {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        threshold: Threshold,
        #[arg(long, default_value_t = 5.0)]
        max_displacement: f64,
        #[arg(long, default_value_t = 0)]
        max_gap: usize,
    },
    /// Counting by calibrated intensity integration.
    Count {
        #[command(flatten)]
        source: Source,
        /// Samples used for the calibration; the rest are predicted. Defaults to half.
        #[arg(long)]
        calibration: Option<usize>,
    },
}

struct Sample {
    manifest: SampleManifest,
    data: ImageData,
}

fn samples(source: &Source, default_role: &str) -> anyhow::Result<Vec<Sample>> {
    let root = &source.dataset;
    let role = source.role.as_deref().unwrap_or(default_role);
    let ds = read_dataset_manifest(root)?;
    let mut out = Vec::new();
    for entry in ds.samples.iter().filter(|e| e.status == SampleStatus::Ok) {
        let manifest = read_sample_manifest(&root.join(&entry.manifest))?;
        let array = manifest
            .array(role)
            .with_context(|| format!("sample {} has no {role:?} array", entry.index))?;
        let data = load_array(root, array)?;
        out.push(Sample { manifest, data });
    }
    log::info!("{} samples read from {}", out.len(), root.display());
    Ok(out)
}

fn truth(m: &SampleManifest) -> Vec<(f64, f64)> {
    m.objects.iter().map(|o| (o.x, o.y)).collect()
}

fn detect(data: &ImageData, t: Threshold) -> anyhow::Result<Vec<Detection>> {
    match data.as_real() {
        Some(a) if a.ndim() == 3 => Ok(detect_from_volume(a.view().into_dimensionality::<Ix3>()?, t.threshold, t.min_area)),
        _ => Ok(detect_from_map(display_plane(data)?.view(), t.threshold, t.min_area)),
    }
}

pub fn run(method: Method) -> anyhow::Result<Value> {
    match method {
        Method::RadialCenter { source, window } => radial(&source, window),
        Method::Detect { source, threshold, radius } => detection(&source, threshold, radius),
        Method::Link { source, threshold, max_displacement, max_gap } => {
            let frames = samples(&source, "label")?
                .iter()
                .map(|s| detect(&s.data, threshold))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let traces = link_traces(&frames, max_displacement, max_gap);
            Ok(json!({ "method": "link", "frames": frames.len(), "traces": traces }))
        }
        Method::Count { source, calibration } => count(&source, calibration),
    }
}

fn rms(errors: &[f64]) -> Option<f64> {
    (!errors.is_empty()).then(|| (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

fn radial(source: &Source, window: usize) -> anyhow::Result<Value> {
    if window < 3 || window % 2 == 0 {
        bail!("--window must be odd and at least 3, got {window}");
    }
    let half = (window / 2) as isize;
    let mut objects = Vec::new();
    let mut errors = Vec::new();
    let mut skipped = 0usize;
    for s in samples(source, "image")? {
        let plane: Array2<f64> = display_plane(&s.data)?;
        let (h, w) = plane.dim();
        for o in &s.manifest.objects {
            let (ci, cj) = (o.y.round() as isize, o.x.round() as isize);
            let (i0, j0) = (ci - half, cj - half);
            if i0 < 0 || j0 < 0 || i0 + window as isize > h as isize || j0 + window as isize > w as isize {
                skipped += 1;
                continue;
            }
            let (i0, j0) = (i0 as usize, j0 as usize);
            let crop = plane.slice(s![i0..i0 + window, j0..j0 + window]);
            let Ok((x, y)) = radial_center(crop) else {
                skipped += 1;
                continue;
            };
            let (x, y) = (j0 as f64 + x, i0 as f64 + y);
            let err = ((x - o.x).powi(2) + (y - o.y).powi(2)).sqrt();
            errors.push(err);
            objects.push(json!({
                "sample": s.manifest.sample_index, "instance": o.instance,
                "x": x, "y": y, "true_x": o.x, "true_y": o.y, "error": err,
            }));
        }
    }
    Ok(json!({ "method": "radial-center", "window": window, "rmse": rms(&errors), "skipped": skipped, "objects": objects }))
}

fn detection(source: &Source, t: Threshold, radius: f64) -> anyhow::Result<Value> {
    let mut per_sample = Vec::new();
    let (mut matched, mut predicted, mut truths, mut sq) = (0usize, 0usize, 0usize, 0.0);
    for s in samples(source, "label")? {
        let dets = detect(&s.data, t)?;
        let points: Vec<(f64, f64)> = dets.iter().map(|d| (d.x, d.y)).collect();
        let gt = truth(&s.manifest);
        let m = match_detections(&points, &gt, radius);
        matched += m.matched;
        predicted += points.len();
        truths += gt.len();
        sq += m.rmse.map_or(0.0, |r| r * r * m.matched as f64);
        per_sample.push(json!({
            "sample": s.manifest.sample_index, "predicted": points.len(), "truth": gt.len(),
            "precision": m.precision, "recall": m.recall, "rmse": m.rmse, "detections": dets,
        }));
    }
    let ratio = |n: usize| if n == 0 { 1.0 } else { matched as f64 / n as f64 };
    Ok(json!({
        "method": "detect",
        "precision": ratio(predicted),
        "recall": ratio(truths),
        "rmse": (matched > 0).then(|| (sq / matched as f64).sqrt()),
        "matched": matched, "predicted": predicted, "truth": truths,
        "samples": per_sample,
    }))
}

fn total(data: &ImageData) -> anyhow::Result<f64> {
    Ok(match data.as_real() {
        Some(a) => a.sum(),
        None => display_plane(data)?.sum(),
    })
}

fn count(source: &Source, calibration: Option<usize>) -> anyhow::Result<Value> {
    let all = samples(source, "image")?;
    let k = calibration.unwrap_or(all.len() / 2);
    if k < 2 || k >= all.len() {
        bail!("need at least two calibration samples and one test sample (have {}, calibration {k})", all.len());
    }
    let sums = all.iter().map(|s| total(&s.data)).collect::<anyhow::Result<Vec<_>>>()?;
    let counts: Vec<f64> = all.iter().map(|s| s.manifest.objects.len() as f64).collect();
    let cal = CountCalibration::fit(&sums[..k], &counts[..k])?;
    let predictions: Vec<f64> = sums[k..].iter().map(|&v| cal.predict(v)).collect();
    let mae = predictions.iter().zip(&counts[k..]).map(|(p, c)| (p - c).abs()).sum::<f64>() / predictions.len() as f64;
    let test: Vec<Value> = all[k..]
        .iter()
        .zip(&predictions)
        .map(|(s, p)| json!({ "sample": s.manifest.sample_index, "predicted": p, "truth": s.manifest.objects.len() }))
        .collect();
    Ok(json!({
        "method": "count",
        "calibration": { "samples": k, "a": cal.a, "b": cal.b },
        "mae": mae,
        "test": test,
    }))
}
