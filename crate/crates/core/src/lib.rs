//! Synthetic microscopy data for training and evaluating image-analysis
//! models. Samples are built from composable feature pipelines, imaged
//! through simulated optics, degraded with noise and augmentations, and
//! paired with labels.

pub mod analysis;
pub mod augment;
pub mod io;
pub mod labels;
pub mod optics;
pub mod pipeline;
pub mod scatterers;
