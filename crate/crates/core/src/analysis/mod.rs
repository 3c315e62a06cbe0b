//! Classical baselines and evaluation against ground truth: radial-center
//! localisation, detection from probability maps, trace linking,
//! integration-based counting, and detection matching.

mod count;
mod detect;
mod link;
mod localize;
mod metrics;

use thiserror::Error;

pub use count::{count_by_integration, CountCalibration};
pub use detect::{detect_from_map, detect_from_volume, Detection, DEFAULT_MIN_AREA, DEFAULT_THRESHOLD};
pub use link::{average_trace_predictions, link_traces, Trace};
pub use localize::radial_center;
pub use metrics::{match_detections, MatchStats};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("least-squares system is singular (no usable gradient)")]
    SingularSystem,
    #[error("trace has no observations")]
    EmptyTrace,
    #[error("calibration needs at least two distinct image sums")]
    DegenerateFit,
    #[error("expected {expected} values, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}
