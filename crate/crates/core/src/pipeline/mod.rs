//! Feature/property/image algebra.
//!
//! A pipeline threads a list of [`TaggedImage`]s through feature nodes. Append
//! features add an image, transforms alter every image, and merges collapse
//! the list into one image. Each feature imprints its resolved
//! [`PropertyRecord`] on the images it touches; records form a set keyed by
//! feature instance id.

mod expr;
mod external;
mod image;
mod node;
mod property;
mod rng;
mod stream;
mod value;

pub use expr::{Ast, BinOp, Expr, ExprParseError, Func, Reference};
pub use external::{wrap_external, ExternalFeature};
pub use image::{ImageData, InstanceId, Plane, PropertyRecord, RecordSet, TaggedImage};
pub use node::{
    evaluate, EvalEnv, Feature, FeatureEnv, FeatureFailure, FeatureKind, NodeKind, Pipeline, PipelineError,
    PipelineNode, PropError, Props, Rendered,
};
pub use property::{Distribution, PropertyKind, PropertySpec};
pub use rng::{derive_seed, SampleContext};
pub use stream::{sample_stream, SampleGenerator, SamplePair, SampleStream};
pub use value::Value;
