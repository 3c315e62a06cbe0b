//! External interfaces: the JSON pipeline grammar, array and image file
//! formats, and dataset export.

mod config;
mod dataset;
mod image;
mod npy;
mod registry;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{
    load_config, load_config_with, parse_config, ConfigError, ExportConfig, ExportFormat, Finding, NodeConfig,
    PipelineConfig, Severity, ValidationReport, CONFIG_VERSION, MAX_DUPLICATE,
};
pub use dataset::{
    generate_dataset, load_array, object_truth, read_dataset_manifest, read_sample_manifest, render_sample_files,
    ArrayFormat, ArrayRef, DatasetManifest, DatasetSummary, ObjectTruth, SampleEntry, SampleManifest, SampleStatus,
    DATASET_MANIFEST, MANIFEST_VERSION, SAMPLES_DIR,
};
pub use image::{
    compare_frames, display_plane, frame_stats, import_image, import_image_limited, png16_bytes, preview_png,
    read_png16, Comparison, FrameStats, ImageError, Png16, HISTOGRAM_BINS, MAX_IMPORT_PIXELS, RANGE_KEYWORD,
};
pub use npy::{npy_bytes, parse_header, read_npy, split as split_npy, NpyError, NpyHeader};
pub use registry::{FeatureSchema, PropertySchema, Registry, Stage, ValueType, DUPLICATE};

use crate::pipeline::{ImageData, PipelineError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Npy {
        path: PathBuf,
        #[source]
        source: NpyError,
    },
    #[error("{path}: malformed manifest: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("sample {index}: {source}")]
    Sample {
        index: u64,
        #[source]
        source: PipelineError,
    },
    #[error("{0}")]
    Runtime(String),
}

/// Target container of [`export_array`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExportTarget {
    NpyV1,
    /// 16-bit grayscale; `range` maps onto `0..=65535`.
    Png16 { range: Option<[f64; 2]> },
}

/// Writes `data` to `path`. png16 accepts only 2-D real arrays.
pub fn export_array(data: &ImageData, target: ExportTarget, path: &Path) -> Result<(), IoError> {
    let bytes = match target {
        ExportTarget::NpyV1 => npy_bytes(data),
        ExportTarget::Png16 { range } => {
            let view = data.real_2d().ok_or_else(|| {
                ImageError::UnsupportedShape(format!("{} array of shape {:?}", data.dtype(), data.shape()))
            })?;
            png16_bytes(view, range)?.0
        }
    };
    std::fs::write(path, bytes).map_err(|e| IoError::Write { path: path.to_path_buf(), source: e })
}
