use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;

use super::image::{ImageData, RecordSet, TaggedImage};
use super::node::{EvalEnv, Pipeline, PipelineError};
use super::rng::SampleContext;
use crate::augment::GEOMETRIC_FEATURES;
use crate::optics::OpticalConfig;

/// One generated (image, label) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub index: u64,
    pub image: TaggedImage,
    pub label: TaggedImage,
}

/// Image and label pipelines sharing one optical configuration.
///
/// The label pipeline sees the image pipeline's *named* records, and the
/// records of geometric transforms, as imports; other records are private to
/// the image pipeline.
#[derive(Debug, Clone)]
pub struct SampleGenerator {
    image: Arc<Pipeline>,
    label: Arc<Pipeline>,
    optics: Arc<OpticalConfig>,
}

impl SampleGenerator {
    pub fn new(image: Pipeline, label: Pipeline, optics: OpticalConfig) -> Self {
        SampleGenerator { image: Arc::new(image), label: Arc::new(label), optics: Arc::new(optics) }
    }

    pub fn optics(&self) -> &OpticalConfig {
        &self.optics
    }

    pub fn image_pipeline(&self) -> &Pipeline {
        &self.image
    }

    pub fn label_pipeline(&self) -> &Pipeline {
        &self.label
    }

    /// Produces the pair for `ctx`; a pure function of the pipelines and `ctx`.
    pub fn sample(&self, ctx: SampleContext) -> Result<SamplePair, PipelineError> {
        let env = EvalEnv::new(ctx, self.optics.clone());
        let image = single(self.image.evaluate(&env)?)?;
        let exports: RecordSet = image
            .records
            .iter()
            .filter(|r| r.name().is_some() || GEOMETRIC_FEATURES.contains(&r.feature()))
            .map(|r| (**r).clone())
            .collect();
        let label = if self.label.is_empty() {
            TaggedImage::new(ImageData::empty())
        } else {
            single(self.label.evaluate(&env.with_imports(exports))?)?
        };
        Ok(SamplePair { index: ctx.sample_index, image, label })
    }

    pub fn stream(&self, master_seed: u64, lenient: bool) -> SampleStream {
        SampleStream { generator: self.clone(), master_seed, next: 0, lenient, failed: false }
    }

    /// Evaluates `indices` on `workers` threads. Results are returned in
    /// index order whatever the completion order.
    pub fn par_samples(
        &self,
        master_seed: u64,
        indices: Range<u64>,
        workers: usize,
    ) -> Vec<(u64, Result<SamplePair, PipelineError>)> {
        let run = || {
            indices
                .clone()
                .into_par_iter()
                .map(|k| (k, self.sample(SampleContext::new(master_seed, k))))
                .collect::<Vec<_>>()
        };
        match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        }
    }
}

fn single(mut list: Vec<TaggedImage>) -> Result<TaggedImage, PipelineError> {
    if list.len() != 1 {
        return Err(PipelineError::OutputArity { expected: 1, found: list.len() });
    }
    Ok(list.pop().expect("one element"))
}

/// Endless iterator of pairs; item `k` comes from `SampleContext(master_seed, k)`.
///
/// A strict stream yields the first error and then ends; a lenient stream
/// yields errors in place of the failing items and keeps going.
#[derive(Debug, Clone)]
pub struct SampleStream {
    generator: SampleGenerator,
    master_seed: u64,
    next: u64,
    lenient: bool,
    failed: bool,
}

impl Iterator for SampleStream {
    type Item = Result<SamplePair, PipelineError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let item = self.generator.sample(SampleContext::new(self.master_seed, self.next));
        self.next += 1;
        if item.is_err() && !self.lenient {
            self.failed = true;
        }
        Some(item)
    }
}

/// Stream over `(image, label)` pairs for `master_seed`.
pub fn sample_stream(image: Pipeline, label: Pipeline, optics: OpticalConfig, master_seed: u64) -> SampleStream {
    SampleGenerator::new(image, label, optics).stream(master_seed, false)
}
