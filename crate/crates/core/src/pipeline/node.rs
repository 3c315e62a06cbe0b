use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::expr::Reference;
use super::image::{ImageData, InstanceId, Plane, PropertyRecord, RecordSet, TaggedImage};
use super::property::{PropertyKind, PropertySpec};
use super::rng::SampleContext;
use super::value::Value;
use crate::optics::OpticalConfig;

/// Error raised by a feature implementation.
pub type FeatureFailure = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("dependency cycle among properties {names:?} of {instance}")]
    Cycle { instance: InstanceId, names: Vec<String> },
    #[error("property {property:?} of {instance} references unknown {reference}")]
    UnknownReference { instance: InstanceId, property: String, reference: String },
    #[error("property {property:?} of {instance}: reference {reference} matches several records")]
    AmbiguousReference { instance: InstanceId, property: String, reference: String },
    #[error("property {property:?} of {instance}: {message}")]
    InvalidValue { instance: InstanceId, property: String, message: String },
    #[error("invalid node {instance}: {message}")]
    InvalidNode { instance: InstanceId, message: String },
    #[error("{instance}: input shapes differ ({expected:?} vs {found:?})")]
    ShapeMismatch { instance: InstanceId, expected: Vec<usize>, found: Vec<usize> },
    #[error("{instance} needs at least {required} input image(s), got {found}")]
    EmptyInput { instance: InstanceId, required: usize, found: usize },
    #[error("feature {instance} failed: {source}")]
    FeatureEvaluation {
        instance: InstanceId,
        #[source]
        source: FeatureFailure,
    },
    #[error("conflicting records for {instance} in one sample")]
    RecordConflict { instance: InstanceId },
    #[error("pipeline must produce exactly {expected} image(s), produced {found}")]
    OutputArity { expected: usize, found: usize },
}

impl PipelineError {
    pub fn instance(&self) -> Option<&InstanceId> {
        match self {
            PipelineError::Cycle { instance, .. }
            | PipelineError::UnknownReference { instance, .. }
            | PipelineError::AmbiguousReference { instance, .. }
            | PipelineError::InvalidValue { instance, .. }
            | PipelineError::InvalidNode { instance, .. }
            | PipelineError::ShapeMismatch { instance, .. }
            | PipelineError::EmptyInput { instance, .. }
            | PipelineError::FeatureEvaluation { instance, .. }
            | PipelineError::RecordConflict { instance } => Some(instance),
            PipelineError::OutputArity { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    /// Appends one new image to the list.
    Append,
    /// Alters every image of the list.
    Transform,
    /// Merges the whole list into one image.
    Merge,
}

/// Typed access to a resolved record.
#[derive(Clone, Copy)]
pub struct Props<'a> {
    values: &'a BTreeMap<String, Value>,
}

#[derive(Debug, Error)]
pub enum PropError {
    #[error("missing property {0:?}")]
    Missing(String),
    #[error("property {name:?} must be a {expected}, got {found}")]
    Type { name: String, expected: &'static str, found: &'static str },
}

impl<'a> Props<'a> {
    pub fn new(values: &'a BTreeMap<String, Value>) -> Self {
        Props { values }
    }

    pub fn get(&self, name: &str) -> Option<&'a Value> {
        self.values.get(name)
    }

    pub fn num(&self, name: &str) -> Result<f64, PropError> {
        let v = self.get(name).ok_or_else(|| PropError::Missing(name.to_string()))?;
        v.as_f64().ok_or(PropError::Type { name: name.to_string(), expected: "number", found: v.type_name() })
    }

    pub fn num_or(&self, name: &str, default: f64) -> Result<f64, PropError> {
        match self.get(name) {
            None => Ok(default),
            Some(_) => self.num(name),
        }
    }

    pub fn text(&self, name: &str) -> Result<&'a str, PropError> {
        let v = self.get(name).ok_or_else(|| PropError::Missing(name.to_string()))?;
        v.as_str().ok_or(PropError::Type { name: name.to_string(), expected: "text", found: v.type_name() })
    }

    pub fn text_or(&self, name: &str, default: &'a str) -> Result<&'a str, PropError> {
        match self.get(name) {
            None => Ok(default),
            Some(_) => self.text(name),
        }
    }

    pub fn flag(&self, name: &str) -> Result<bool, PropError> {
        Ok(self.num_or(name, 0.0)? != 0.0)
    }

    pub fn values(&self) -> &'a BTreeMap<String, Value> {
        self.values
    }
}

/// Everything a feature may read while it runs.
#[derive(Clone, Copy)]
pub struct FeatureEnv<'a> {
    pub ctx: SampleContext,
    pub optics: &'a OpticalConfig,
    /// Records exported from another pipeline (image → label sharing).
    pub imports: &'a RecordSet,
    pub instance: &'a InstanceId,
    /// Position of the image being transformed within the list (0 for
    /// append and merge calls).
    pub item: usize,
}

impl FeatureEnv<'_> {
    /// Random stream private to this feature instance and `label`, shared by
    /// every image a transform touches.
    pub fn rng(&self, label: &str) -> ChaCha8Rng {
        self.ctx.stream(self.instance.as_str(), &format!("__{label}"))
    }

    /// Random stream private to this instance, `label` and list position.
    pub fn item_rng(&self, label: &str) -> ChaCha8Rng {
        self.ctx.stream(self.instance.as_str(), &format!("__{label}@{}", self.item))
    }
}

/// Output of one feature call.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub data: ImageData,
    pub plane: Plane,
    /// Values computed during evaluation, imprinted alongside the resolved ones.
    pub derived: BTreeMap<String, Value>,
}

impl Rendered {
    pub fn new(data: ImageData) -> Self {
        Rendered { data, plane: Plane::Spatial, derived: BTreeMap::new() }
    }

    pub fn frequency(data: ImageData) -> Self {
        Rendered { data, plane: Plane::Frequency, derived: BTreeMap::new() }
    }

    pub fn with_derived(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.derived.insert(key.to_string(), value.into());
        self
    }
}

/// A feature implementation. Feature objects are immutable and shared
/// between threads; all per-sample state arrives through the arguments.
pub trait Feature: Send + Sync + fmt::Debug {
    /// Registered name, e.g. `"Ellipse"`.
    fn type_name(&self) -> &str;

    fn kind(&self) -> FeatureKind;

    fn min_inputs(&self) -> usize {
        match self.kind() {
            FeatureKind::Transform => 1,
            FeatureKind::Append | FeatureKind::Merge => 0,
        }
    }

    fn is_external(&self) -> bool {
        false
    }

    /// `inputs` is empty for append features, a single image for
    /// transforms, and the full list for merges.
    fn apply(&self, inputs: &[&TaggedImage], props: Props<'_>, env: &FeatureEnv<'_>) -> Result<Rendered, FeatureFailure>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Append,
    Transform,
    Merge,
    Duplicate(usize),
    External,
}

#[derive(Debug, Clone)]
enum NodeOp {
    Feature(Arc<dyn Feature>),
    Duplicate(usize),
}

/// A node of the feature graph. Children are evaluated first, in order, each
/// receiving the list produced by the previous one; the node's own operation
/// is then applied to the result.
#[derive(Debug, Clone)]
pub struct PipelineNode {
    id: InstanceId,
    name: Option<String>,
    op: NodeOp,
    properties: Vec<PropertySpec>,
    children: Vec<PipelineNode>,
}

impl PipelineNode {
    pub fn feature(id: impl AsRef<str>, feature: Arc<dyn Feature>) -> Self {
        PipelineNode {
            id: InstanceId::new(id),
            name: None,
            op: NodeOp::Feature(feature),
            properties: Vec::new(),
            children: Vec::new(),
        }
    }

    /// `n` independent copies of `child`.
    pub fn duplicate(id: impl AsRef<str>, n: usize, child: PipelineNode) -> Self {
        PipelineNode {
            id: InstanceId::new(id),
            name: None,
            op: NodeOp::Duplicate(n),
            properties: Vec::new(),
            children: vec![child],
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn with_property(mut self, spec: PropertySpec) -> Self {
        match self.properties.iter_mut().find(|p| p.name == spec.name) {
            Some(existing) => *existing = spec,
            None => self.properties.push(spec),
        }
        self
    }

    pub fn with_properties(self, specs: impl IntoIterator<Item = PropertySpec>) -> Self {
        specs.into_iter().fold(self, |node, s| node.with_property(s))
    }

    pub fn with_child(mut self, child: PipelineNode) -> Self {
        self.children.push(child);
        self
    }

    pub fn id(&self) -> &InstanceId {
        &self.id
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn properties(&self) -> &[PropertySpec] {
        &self.properties
    }

    pub fn children(&self) -> &[PipelineNode] {
        &self.children
    }

    pub fn feature_impl(&self) -> Option<&Arc<dyn Feature>> {
        match &self.op {
            NodeOp::Feature(f) => Some(f),
            NodeOp::Duplicate(_) => None,
        }
    }

    pub fn kind(&self) -> NodeKind {
        match &self.op {
            NodeOp::Duplicate(n) => NodeKind::Duplicate(*n),
            NodeOp::Feature(f) if f.is_external() => NodeKind::External,
            NodeOp::Feature(f) => match f.kind() {
                FeatureKind::Append => NodeKind::Append,
                FeatureKind::Transform => NodeKind::Transform,
                FeatureKind::Merge => NodeKind::Merge,
            },
        }
    }

    /// Checks the structural invariants of the subtree.
    pub fn validate(&self) -> Result<(), PipelineError> {
        match &self.op {
            NodeOp::Duplicate(n) => {
                if *n == 0 {
                    return Err(self.invalid("duplicate count must be at least 1"));
                }
                if self.children.len() != 1 {
                    return Err(self.invalid("duplicate needs exactly one child"));
                }
                if !self.properties.is_empty() {
                    return Err(self.invalid("duplicate nodes take no properties"));
                }
            }
            NodeOp::Feature(_) => {
                self.resolution_order()?;
            }
        }
        self.children.iter().try_for_each(PipelineNode::validate)
    }

    fn invalid(&self, message: &str) -> PipelineError {
        PipelineError::InvalidNode { instance: self.id.clone(), message: message.to_string() }
    }

    /// Property indices in dependency order (Kahn's algorithm, ties broken by name).
    fn resolution_order(&self) -> Result<Vec<usize>, PipelineError> {
        let index: BTreeMap<&str, usize> =
            self.properties.iter().enumerate().map(|(i, p)| (p.name.as_str(), i)).collect();
        let mut deps: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.properties.len()];
        for (i, p) in self.properties.iter().enumerate() {
            if let PropertyKind::Dependent(expr) = &p.kind {
                for r in expr.references() {
                    if let Reference::Local(name) = &r {
                        match index.get(name.as_str()) {
                            Some(&j) => {
                                deps[i].insert(j);
                            }
                            None => {
                                return Err(PipelineError::UnknownReference {
                                    instance: self.id.clone(),
                                    property: p.name.clone(),
                                    reference: name.clone(),
                                })
                            }
                        }
                    }
                }
            }
        }
        let mut done = vec![false; self.properties.len()];
        let mut order = Vec::with_capacity(self.properties.len());
        let mut by_name: Vec<usize> = (0..self.properties.len()).collect();
        by_name.sort_by(|&a, &b| self.properties[a].name.cmp(&self.properties[b].name));
        while order.len() < self.properties.len() {
            let next = by_name.iter().copied().find(|&i| !done[i] && deps[i].iter().all(|&d| done[d]));
            match next {
                Some(i) => {
                    done[i] = true;
                    order.push(i);
                }
                None => {
                    let names = by_name
                        .iter()
                        .filter(|&&i| !done[i])
                        .map(|&i| self.properties[i].name.clone())
                        .collect();
                    return Err(PipelineError::Cycle { instance: self.id.clone(), names });
                }
            }
        }
        Ok(order)
    }

    /// Resolves this node's properties with no upstream records in scope.
    pub fn resolve_properties(&self, ctx: SampleContext) -> Result<PropertyRecord, PipelineError> {
        self.resolve_properties_in(ctx, &RecordSet::new())
    }

    /// Resolves this node's properties; `scope` supplies records that
    /// `source.property` references may read.
    pub fn resolve_properties_in(&self, ctx: SampleContext, scope: &RecordSet) -> Result<PropertyRecord, PipelineError> {
        let feature_name = match &self.op {
            NodeOp::Feature(f) => f.type_name().to_string(),
            NodeOp::Duplicate(_) => "Duplicate".to_string(),
        };
        let mut values: BTreeMap<String, Value> = BTreeMap::new();
        for i in self.resolution_order()? {
            let spec = &self.properties[i];
            let value = match &spec.kind {
                PropertyKind::Constant(v) => v.clone(),
                PropertyKind::Sampler(dist) => dist.sample(&mut ctx.stream(self.id.as_str(), &spec.name)),
                PropertyKind::Dependent(expr) => {
                    let mut lookup = |r: &Reference| -> Result<f64, PipelineError> {
                        let value = match r {
                            Reference::Local(name) => values.get(name).cloned(),
                            Reference::Import { source, property } => {
                                let mut hits = scope
                                    .iter()
                                    .filter(|rec| rec.name() == Some(source) || rec.instance().as_str() == source);
                                let first = hits.next();
                                if hits.next().is_some() {
                                    return Err(PipelineError::AmbiguousReference {
                                        instance: self.id.clone(),
                                        property: spec.name.clone(),
                                        reference: r.to_string(),
                                    });
                                }
                                first.and_then(|rec| rec.get(property).cloned())
                            }
                        };
                        let value = value.ok_or_else(|| PipelineError::UnknownReference {
                            instance: self.id.clone(),
                            property: spec.name.clone(),
                            reference: r.to_string(),
                        })?;
                        value.as_f64().ok_or_else(|| PipelineError::InvalidValue {
                            instance: self.id.clone(),
                            property: spec.name.clone(),
                            message: format!("{r} is a {}, expressions need numbers", value.type_name()),
                        })
                    };
                    let v = expr.eval(&mut lookup)?;
                    if !v.is_finite() {
                        return Err(PipelineError::InvalidValue {
                            instance: self.id.clone(),
                            property: spec.name.clone(),
                            message: format!("expression {:?} evaluated to {v}", expr.source()),
                        });
                    }
                    Value::Number(v)
                }
            };
            values.insert(spec.name.clone(), value);
        }
        Ok(PropertyRecord::new(self.id.clone(), feature_name, self.name.clone(), values))
    }

    /// The `n` clones of a duplicate node's child, each with fresh ids
    /// throughout its subtree.
    pub fn expand_duplicate(&self) -> Result<Vec<PipelineNode>, PipelineError> {
        let NodeOp::Duplicate(n) = self.op else {
            return Err(self.invalid("not a duplicate node"));
        };
        if n == 0 || self.children.len() != 1 {
            self.validate()?;
        }
        let child = &self.children[0];
        Ok((0..n).map(|i| child.relabel(i)).collect())
    }

    fn relabel(&self, index: usize) -> PipelineNode {
        PipelineNode {
            id: self.id.clone_of(index),
            name: self.name.clone(),
            op: self.op.clone(),
            properties: self.properties.clone(),
            children: self.children.iter().map(|c| c.relabel(index)).collect(),
        }
    }

    /// Evaluates the subtree on `input`.
    pub fn evaluate(&self, input: Vec<TaggedImage>, env: &EvalEnv) -> Result<Vec<TaggedImage>, PipelineError> {
        let mut list = input;
        let feature = match &self.op {
            NodeOp::Duplicate(_) => {
                for clone in self.expand_duplicate()? {
                    list = clone.evaluate(list, env)?;
                }
                return Ok(list);
            }
            NodeOp::Feature(f) => f,
        };
        for child in &self.children {
            list = child.evaluate(list, env)?;
        }

        let mut scope = RecordSet::new();
        for rec in list.iter().flat_map(|img| img.records.iter()).chain(env.imports.iter()) {
            let _ = scope.insert(rec.clone());
        }
        let record = self.resolve_properties_in(env.ctx, &scope)?;
        let fenv = FeatureEnv { ctx: env.ctx, optics: &env.optics, imports: &env.imports, instance: &self.id, item: 0 };
        let props = Props::new(record.values());
        let wrap = |source: FeatureFailure| PipelineError::FeatureEvaluation { instance: self.id.clone(), source };

        if list.len() < feature.min_inputs() {
            return Err(PipelineError::EmptyInput {
                instance: self.id.clone(),
                required: feature.min_inputs(),
                found: list.len(),
            });
        }

        match feature.kind() {
            FeatureKind::Append => {
                let out = feature.apply(&[], props, &fenv).map_err(wrap)?;
                let mut img = TaggedImage::new(out.data).with_plane(out.plane);
                let rec = Arc::new(record.clone().with_extra(out.derived));
                img.records.insert(rec).expect("fresh record set");
                list.push(img);
            }
            FeatureKind::Transform => {
                for (item, img) in list.iter_mut().enumerate() {
                    let fenv = FeatureEnv { item, ..fenv };
                    let out = feature.apply(&[&*img], props, &fenv).map_err(wrap)?;
                    img.data = out.data;
                    img.plane = out.plane;
                    let rec = Arc::new(record.clone().with_extra(out.derived));
                    img.records
                        .insert(rec)
                        .map_err(|_| PipelineError::RecordConflict { instance: self.id.clone() })?;
                }
            }
            FeatureKind::Merge => {
                if let Some(first) = list.first() {
                    for img in &list[1..] {
                        if img.shape() != first.shape() {
                            return Err(PipelineError::ShapeMismatch {
                                instance: self.id.clone(),
                                expected: first.shape().to_vec(),
                                found: img.shape().to_vec(),
                            });
                        }
                    }
                }
                let refs: Vec<&TaggedImage> = list.iter().collect();
                let out = feature.apply(&refs, props, &fenv).map_err(wrap)?;
                let mut merged = TaggedImage::new(out.data).with_plane(out.plane);
                for rec in list.iter().flat_map(|img| img.records.iter()) {
                    merged
                        .records
                        .insert(rec.clone())
                        .map_err(|existing| PipelineError::RecordConflict { instance: existing.instance().clone() })?;
                }
                let own = Arc::new(record.with_extra(out.derived));
                merged
                    .records
                    .insert(own)
                    .map_err(|_| PipelineError::RecordConflict { instance: self.id.clone() })?;
                list = vec![merged];
            }
        }
        Ok(list)
    }
}

/// Shared evaluation inputs for one sample.
#[derive(Debug, Clone)]
pub struct EvalEnv {
    pub ctx: SampleContext,
    pub optics: Arc<OpticalConfig>,
    pub imports: Arc<RecordSet>,
}

impl EvalEnv {
    pub fn new(ctx: SampleContext, optics: Arc<OpticalConfig>) -> Self {
        EvalEnv { ctx, optics, imports: Arc::new(RecordSet::new()) }
    }

    pub fn with_imports(mut self, imports: RecordSet) -> Self {
        self.imports = Arc::new(imports);
        self
    }
}

/// A root sequence of nodes evaluated from the empty list.
#[derive(Debug, Clone, Default)]
pub struct Pipeline {
    nodes: Vec<PipelineNode>,
}

impl Pipeline {
    pub fn new(nodes: Vec<PipelineNode>) -> Self {
        Pipeline { nodes }
    }

    pub fn nodes(&self) -> &[PipelineNode] {
        &self.nodes
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.nodes.iter().try_for_each(PipelineNode::validate)
    }

    pub fn evaluate(&self, env: &EvalEnv) -> Result<Vec<TaggedImage>, PipelineError> {
        let mut list = Vec::new();
        for node in &self.nodes {
            list = node.evaluate(list, env)?;
        }
        Ok(list)
    }
}

/// Evaluates `root` starting from an empty image list.
pub fn evaluate(root: &PipelineNode, env: &EvalEnv) -> Result<Vec<TaggedImage>, PipelineError> {
    root.evaluate(Vec::new(), env)
}
