//! Dataset export: per-sample arrays and manifests plus one dataset manifest.
//!
//! Output layout under `out_dir`:
//!
//! ```text
//! dataset.json
//! samples/00000000.json        sample manifest
//! samples/00000000_image.npy   (or .png)
//! samples/00000000_label.npy   (or .png)
//! ```
//!
//! Every byte written is a function of the canonical config, the master seed
//! and the sample index, so the worker count never changes the output.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExportFormat, PipelineConfig};
use super::image::png16_bytes;
use super::npy::npy_bytes;
use super::registry::Registry;
use super::IoError;
use crate::labels::collect_objects;
use crate::pipeline::{ImageData, PropertyRecord, SampleContext, SampleGenerator, SamplePair};

pub const DATASET_MANIFEST: &str = "dataset.json";
pub const SAMPLES_DIR: &str = "samples";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrayFormat {
    Npy,
    Png16,
}

/// One exported array file, relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayRef {
    pub role: String,
    pub file: String,
    pub format: ArrayFormat,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Intensity range of a png16 file's `0..=65535`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
}

/// Ground truth of one imaged object, positions after geometric augmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectTruth {
    pub instance: String,
    pub feature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Column (px).
    pub x: f64,
    /// Row (px).
    pub y: f64,
    /// Axial position (µm).
    pub z: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refractive_index: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub sample_index: u64,
    pub master_seed: u64,
    pub status: SampleStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Every record of the image, in imprint order.
    pub records: Vec<PropertyRecord>,
    pub objects: Vec<ObjectTruth>,
    /// Features of the label pipeline that produced the label array.
    pub label_kind: Vec<String>,
    pub label_records: Vec<PropertyRecord>,
    pub arrays: Vec<ArrayRef>,
}

impl SampleManifest {
    pub fn array(&self, role: &str) -> Option<&ArrayRef> {
        self.arrays.iter().find(|a| a.role == role)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub index: u64,
    pub manifest: String,
    pub status: SampleStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub manifest_version: u32,
    pub generator: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub count: u64,
    pub failed: u64,
    pub config: PipelineConfig,
    pub samples: Vec<SampleEntry>,
}

/// Outcome of [`generate_dataset`]; timing lives here, never in the files.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub out_dir: PathBuf,
    pub count: u64,
    pub failed: u64,
    pub workers: usize,
    pub config_hash: String,
    pub elapsed_seconds: f64,
    pub samples_per_second: f64,
}

fn sample_stem(index: u64) -> String {
    format!("{index:08}")
}

/// Ground-truth objects of a generated image.
pub fn object_truth(records: &crate::pipeline::RecordSet) -> Vec<ObjectTruth> {
    let Ok(objects) = collect_objects(records, None) else {
        return Vec::new();
    };
    objects
        .into_iter()
        .map(|o| ObjectTruth {
            instance: o.record.instance().to_string(),
            feature: o.record.feature().to_string(),
            name: o.record.name().map(str::to_string),
            x: o.x,
            y: o.y,
            z: o.z,
            radius: o.record.number("radius"),
            refractive_index: o.record.number("refractive_index"),
            class: o.record.number("class"),
        })
        .collect()
}

/// Serialises one sample: its manifest and array files as `(relative path, bytes)`.
pub fn render_sample_files(
    pair: &SamplePair,
    master_seed: u64,
    config: &PipelineConfig,
) -> Result<(SampleManifest, Vec<(String, Vec<u8>)>), IoError> {
    let stem = sample_stem(pair.index);
    let mut files = Vec::new();
    let mut arrays = Vec::new();
    let has_label = !config.label.is_empty();
    for (role, img) in [("image", &pair.image), ("label", &pair.label)] {
        if role == "label" && !has_label {
            continue;
        }
        let (format, bytes, range) = encode_array(&img.data, config)?;
        let ext = if format == ArrayFormat::Png16 { "png" } else { "npy" };
        let file = format!("{SAMPLES_DIR}/{stem}_{role}.{ext}");
        arrays.push(ArrayRef {
            role: role.to_string(),
            file: file.clone(),
            format,
            shape: img.data.shape().to_vec(),
            dtype: img.data.dtype().to_string(),
            range,
        });
        files.push((file, bytes));
    }
    let manifest = SampleManifest {
        sample_index: pair.index,
        master_seed,
        status: SampleStatus::Ok,
        error: None,
        records: pair.image.records.to_vec(),
        objects: object_truth(&pair.image.records),
        label_kind: label_kind(&pair.label.records.to_vec(), config),
        label_records: pair.label.records.to_vec(),
        arrays,
    };
    Ok((manifest, files))
}

fn label_kind(records: &[PropertyRecord], config: &PipelineConfig) -> Vec<String> {
    let label_features: Vec<&str> = config.label.iter().map(|n| n.feature.as_str()).collect();
    records
        .iter()
        .map(|r| r.feature().to_string())
        .filter(|f| label_features.contains(&f.as_str()))
        .collect()
}

/// png16 applies to 2-D real arrays; anything else is written as npy.
fn encode_array(data: &ImageData, config: &PipelineConfig) -> Result<(ArrayFormat, Vec<u8>, Option<[f64; 2]>), IoError> {
    if config.export.format == ExportFormat::Png {
        if let Some(view) = data.real_2d() {
            let range = config.export.range.or_else(|| {
                let (lo, hi) = view.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
                (lo < 0.0).then_some([lo, hi])
            });
            let (bytes, used) = png16_bytes(view, range)?;
            return Ok((ArrayFormat::Png16, bytes, Some(used)));
        }
    }
    Ok((ArrayFormat::Npy, npy_bytes(data), None))
}

fn failed_manifest(index: u64, master_seed: u64, error: String) -> SampleManifest {
    SampleManifest {
        sample_index: index,
        master_seed,
        status: SampleStatus::Failed,
        error: Some(error),
        records: Vec::new(),
        objects: Vec::new(),
        label_kind: Vec::new(),
        label_records: Vec::new(),
        arrays: Vec::new(),
    }
}

fn write(root: &Path, rel: &str, bytes: &[u8]) -> Result<(), IoError> {
    let path = root.join(rel);
    fs::write(&path, bytes).map_err(|e| IoError::Write { path, source: e })
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("manifests are always representable");
    s.push(b'\n');
    s
}

/// Writes `count` samples of `config` for `master_seed` under `out_dir`.
///
/// With `config.export.lenient` a failing sample gets a manifest with status
/// `failed` and no arrays; otherwise the first failure aborts the run.
pub fn generate_dataset(
    config: &PipelineConfig,
    count: u64,
    master_seed: u64,
    out_dir: &Path,
    workers: usize,
) -> Result<DatasetSummary, IoError> {
    let start = Instant::now();
    let generator: SampleGenerator = config.build(&Registry::standard())?;
    let samples_dir = out_dir.join(SAMPLES_DIR);
    fs::create_dir_all(&samples_dir).map_err(|e| IoError::Write { path: samples_dir.clone(), source: e })?;
    let workers = workers.max(1);
    let lenient = config.export.lenient;

    let one = |k: u64| -> Result<SampleEntry, IoError> {
        let manifest = match generator.sample(SampleContext::new(master_seed, k)) {
            Ok(pair) => {
                let (manifest, files) = render_sample_files(&pair, master_seed, config)?;
                for (rel, bytes) in &files {
                    write(out_dir, rel, bytes)?;
                }
                manifest
            }
            Err(e) if lenient => {
                log::warn!("sample {k} failed: {e}");
                failed_manifest(k, master_seed, e.to_string())
            }
            Err(e) => return Err(IoError::Sample { index: k, source: e }),
        };
        let rel = format!("{SAMPLES_DIR}/{}.json", sample_stem(k));
        write(out_dir, &rel, &to_json(&manifest))?;
        Ok(SampleEntry { index: k, manifest: rel, status: manifest.status })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| IoError::Runtime(e.to_string()))?;
    let entries: Vec<SampleEntry> = pool.install(|| (0..count).into_par_iter().map(one).collect::<Result<_, _>>())?;

    let failed = entries.iter().filter(|e| e.status == SampleStatus::Failed).count() as u64;
    let config_hash = config.hash();
    let manifest = DatasetManifest {
        manifest_version: MANIFEST_VERSION,
        generator: concat!("synthscope ", env!("CARGO_PKG_VERSION")).to_string(),
        config_hash: config_hash.clone(),
        master_seed,
        count,
        failed,
        config: config.clone(),
        samples: entries,
    };
    write(out_dir, DATASET_MANIFEST, &to_json(&manifest))?;
    let elapsed = start.elapsed().as_secs_f64();
    Ok(DatasetSummary {
        out_dir: out_dir.to_path_buf(),
        count,
        failed,
        workers,
        config_hash,
        elapsed_seconds: elapsed,
        samples_per_second: if elapsed > 0.0 { count as f64 / elapsed } else { 0.0 },
    })
}

pub fn read_dataset_manifest(dir: &Path) -> Result<DatasetManifest, IoError> {
    read_json(&dir.join(DATASET_MANIFEST))
}

pub fn read_sample_manifest(path: &Path) -> Result<SampleManifest, IoError> {
    read_json(path)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::Read { path: path.to_path_buf(), source: e })?;
    serde_json::from_str(&text).map_err(|e| IoError::Manifest { path: path.to_path_buf(), message: e.to_string() })
}

/// Loads an exported array referenced by a manifest.
pub fn load_array(root: &Path, array: &ArrayRef) -> Result<ImageData, IoError> {
    let path = root.join(&array.file);
    let bytes = fs::read(&path).map_err(|e| IoError::Read { path: path.clone(), source: e })?;
    Ok(match array.format {
        ArrayFormat::Npy => super::npy::read_npy(&bytes).map_err(|e| IoError::Npy { path, source: e })?,
        ArrayFormat::Png16 => ImageData::real2(super::image::read_png16(&bytes)?.intensities()),
    })
}
