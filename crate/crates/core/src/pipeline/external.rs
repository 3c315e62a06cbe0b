use std::fmt;
use std::sync::Arc;

use super::image::{ImageData, TaggedImage};
use super::node::{Feature, FeatureEnv, FeatureFailure, FeatureKind, PipelineNode, Props, Rendered};
use super::property::PropertySpec;

type ExternalFn = dyn Fn(&ImageData, Props<'_>) -> Result<ImageData, FeatureFailure> + Send + Sync;

/// A caller-supplied image function running as a transform.
pub struct ExternalFeature {
    type_name: String,
    func: Arc<ExternalFn>,
}

impl fmt::Debug for ExternalFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExternalFeature").field("type_name", &self.type_name).finish_non_exhaustive()
    }
}

impl Feature for ExternalFeature {
    fn type_name(&self) -> &str {
        &self.type_name
    }

    fn kind(&self) -> FeatureKind {
        FeatureKind::Transform
    }

    fn is_external(&self) -> bool {
        true
    }

    fn apply(&self, inputs: &[&TaggedImage], props: Props<'_>, _env: &FeatureEnv<'_>) -> Result<Rendered, FeatureFailure> {
        let img = inputs[0];
        let data = (self.func)(&img.data, props)?;
        Ok(Rendered { data, plane: img.plane, derived: Default::default() })
    }
}

/// Wraps `func` as a transform node. The declared properties are resolved and
/// imprinted like those of built-in features; `func` must be a pure function
/// of the input array and the resolved properties.
pub fn wrap_external<F>(id: &str, type_name: &str, properties: Vec<PropertySpec>, func: F) -> PipelineNode
where
    F: Fn(&ImageData, Props<'_>) -> Result<ImageData, FeatureFailure> + Send + Sync + 'static,
{
    let feature = ExternalFeature { type_name: type_name.to_string(), func: Arc::new(func) };
    PipelineNode::feature(id, Arc::new(feature)).with_properties(properties)
}
