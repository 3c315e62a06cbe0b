//! The declarative JSON pipeline grammar.
//!
//! ```json
//! {
//!   "version": "1",
//!   "optics": { "NA": 0.8, "wavelength": 0.633, "grid": [128, 128] },
//!   "nodes": [
//!     { "feature": "Duplicate", "properties": { "n": 5 }, "children": [
//!       { "feature": "Ellipse", "name": "cell",
//!         "properties": { "x": { "uniform": [20, 108] }, "y": { "uniform": [20, 108] },
//!                         "a": 6, "b": { "expr": "a / 2" } } } ] },
//!     { "feature": "Fluorescence" },
//!     { "feature": "Poisson", "properties": { "snr": 20 } }
//!   ],
//!   "label": [ { "feature": "DiskMask", "properties": { "radius": 3 } } ],
//!   "export": { "format": "npy" }
//! }
//! ```
//!
//! A node's children run first, in order, on the incoming list; the node's
//! own operation then applies to the result. Root nodes run in sequence from
//! the empty list. Node paths (`nodes/0/children/1`) identify nodes in
//! diagnostics and are also the feature instance ids.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::registry::{FeatureSchema, Registry, Stage, ValueType};
use crate::optics::OpticalConfig;
use crate::pipeline::{
    Distribution, PipelineError, Pipeline, PipelineNode, PropertyKind, PropertySpec, Reference, SampleGenerator, Value,
};

pub const CONFIG_VERSION: &str = "1";

/// Largest accepted `Duplicate` count.
pub const MAX_DUPLICATE: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub feature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub properties: BTreeMap<String, Json>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<NodeConfig>,
}

impl NodeConfig {
    pub fn new(feature: &str) -> Self {
        NodeConfig { feature: feature.to_string(), name: None, properties: BTreeMap::new(), children: Vec::new() }
    }

    pub fn prop(mut self, name: &str, value: Json) -> Self {
        self.properties.insert(name.to_string(), value);
        self
    }

    pub fn child(mut self, child: NodeConfig) -> Self {
        self.children.push(child);
        self
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    #[default]
    Npy,
    Png,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportConfig {
    #[serde(default)]
    pub format: ExportFormat,
    /// Record failing samples in their manifests instead of aborting.
    #[serde(default)]
    pub lenient: bool,
    /// Declared intensity range mapped onto 0..=65535 for png export;
    /// `null` selects per-image min–max scaling.
    #[serde(default)]
    pub range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_version")]
    pub version: String,
    #[serde(default)]
    pub optics: OpticalConfig,
    pub nodes: Vec<NodeConfig>,
    #[serde(default)]
    pub label: Vec<NodeConfig>,
    #[serde(default)]
    pub export: ExportConfig,
}

fn default_version() -> String {
    CONFIG_VERSION.to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

/// One diagnostic, anchored to a node path or a top-level section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub property: Option<String>,
    pub rule: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = if self.path.is_empty() { "<root>" } else { &self.path };
        write!(f, "{path}")?;
        if let Some(p) = &self.property {
            write!(f, ".{p}")?;
        }
        write!(f, ": [{}] {}", self.rule, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    /// No error-severity findings.
    pub fn is_valid(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Warning)
    }

    fn error(&mut self, path: &str, property: Option<&str>, rule: &str, message: impl Into<String>) {
        self.push(Severity::Error, path, property, rule, message);
    }

    fn warn(&mut self, path: &str, property: Option<&str>, rule: &str, message: impl Into<String>) {
        self.push(Severity::Warning, path, property, rule, message);
    }

    fn push(&mut self, severity: Severity, path: &str, property: Option<&str>, rule: &str, message: impl Into<String>) {
        self.findings.push(Finding {
            severity,
            path: path.to_string(),
            property: property.map(str::to_string),
            rule: rule.to_string(),
            message: message.into(),
            line: None,
            column: None,
        });
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid config: {}", .0.errors().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(ValidationReport),
}

impl ConfigError {
    /// The error as a report (a parse error becomes a single finding).
    pub fn report(&self) -> ValidationReport {
        match self {
            ConfigError::Parse { line, column, message } => ValidationReport {
                findings: vec![Finding {
                    severity: Severity::Error,
                    path: String::new(),
                    property: None,
                    rule: "parse".to_string(),
                    message: message.clone(),
                    line: Some(*line),
                    column: Some(*column),
                }],
            },
            ConfigError::Invalid(r) => r.clone(),
        }
    }
}

/// Parses, canonicalises and validates `text` against the standard registry.
pub fn load_config(text: &str) -> Result<PipelineConfig, ConfigError> {
    load_config_with(text, &Registry::standard()).map(|(c, _)| c)
}

/// As [`load_config`], also returning the warnings of a valid config.
pub fn load_config_with(text: &str, registry: &Registry) -> Result<(PipelineConfig, ValidationReport), ConfigError> {
    let mut config = parse_config(text)?;
    let report = config.canonicalize(registry);
    if report.is_valid() {
        Ok((config, report))
    } else {
        Err(ConfigError::Invalid(report))
    }
}

/// Syntax-level parse only; no defaults are filled and nothing is validated.
pub fn parse_config(text: &str) -> Result<PipelineConfig, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

impl PipelineConfig {
    /// A config with default optics, no labels and npy export.
    pub fn new(nodes: Vec<NodeConfig>) -> Self {
        PipelineConfig {
            version: default_version(),
            optics: OpticalConfig::default(),
            nodes,
            label: Vec::new(),
            export: ExportConfig::default(),
        }
    }

    /// Canonical text: property descriptors normalised and defaults filled.
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("configs are always representable");
        s.push('\n');
        s
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json_string().as_bytes()))
    }

    /// Normalises property descriptors, fills defaults and checks every rule.
    pub fn canonicalize(&mut self, registry: &Registry) -> ValidationReport {
        let mut report = ValidationReport::default();
        if self.version != CONFIG_VERSION {
            report.error("version", None, "version", format!("unsupported version {:?} (expected {CONFIG_VERSION:?})", self.version));
        }
        if let Err(e) = self.optics.validate() {
            report.error("optics", None, "optics", e.to_string());
        }
        if let Some(w) = self.optics.sampling_warning() {
            report.warn("optics", None, "sampling", w);
        }
        if let Some([lo, hi]) = self.export.range {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                report.error("export", Some("range"), "export-range", format!("range [{lo}, {hi}] must be finite and increasing"));
            }
        }

        let mut names = BTreeSet::new();
        let mut features = BTreeSet::new();
        collect_names(&self.nodes, &mut names, &mut features);
        let image_names = names.clone();
        let image_features = features.clone();
        collect_names(&self.label, &mut names, &mut features);

        for (section, stage) in [("nodes", Stage::Image), ("label", Stage::Label)] {
            let nodes = if stage == Stage::Image { &mut self.nodes } else { &mut self.label };
            let before = report.errors().count();
            let mut checker = Checker {
                registry,
                report: &mut report,
                stage,
                names: &names,
                image_names: &image_names,
                image_features: &image_features,
            };
            for (i, node) in nodes.iter_mut().enumerate() {
                checker.node(node, &format!("{section}/{i}"));
            }
            if report.errors().count() > before || (stage == Stage::Label && nodes.is_empty()) {
                continue;
            }
            let mut len = 0;
            for (i, node) in nodes.iter().enumerate() {
                match list_length(node, &format!("{section}/{i}"), registry, len) {
                    Ok(l) => len = l,
                    Err((path, message)) => {
                        report.error(&path, None, "empty-input", message);
                        break;
                    }
                }
            }
            if report.errors().count() == before && len != 1 {
                report.error(section, None, "output-arity", format!("{section} must produce exactly one image, produces {len}"));
            }
        }
        report
    }

    /// Builds the evaluable generator. The config must be canonical and valid.
    pub fn build(&self, registry: &Registry) -> Result<SampleGenerator, ConfigError> {
        let mut report = ValidationReport::default();
        let image = build_section(&self.nodes, "nodes", registry, &mut report);
        let label = build_section(&self.label, "label", registry, &mut report);
        if !report.is_valid() {
            return Err(ConfigError::Invalid(report));
        }
        Ok(SampleGenerator::new(image, label, self.optics.clone()))
    }
}

fn collect_names(nodes: &[NodeConfig], names: &mut BTreeSet<String>, features: &mut BTreeSet<String>) {
    for n in nodes {
        if let Some(name) = &n.name {
            names.insert(name.clone());
        }
        features.insert(n.feature.clone());
        collect_names(&n.children, names, features);
    }
}

struct Checker<'a> {
    registry: &'a Registry,
    report: &'a mut ValidationReport,
    stage: Stage,
    /// Names declared anywhere in the config.
    names: &'a BTreeSet<String>,
    image_names: &'a BTreeSet<String>,
    image_features: &'a BTreeSet<String>,
}

impl Checker<'_> {
    fn node(&mut self, node: &mut NodeConfig, path: &str) {
        for (i, c) in node.children.iter_mut().enumerate() {
            self.node(c, &format!("{path}/children/{i}"));
        }
        let Some(schema) = self.registry.get(&node.feature) else {
            self.report.error(path, None, "unknown-feature", format!("feature {:?} is not registered", node.feature));
            return;
        };
        if schema.stage != Stage::Any && schema.stage != self.stage {
            let section = if self.stage == Stage::Image { "the image pipeline" } else { "the label pipeline" };
            self.report.error(path, None, "stage", format!("{} cannot appear in {section}", schema.name));
        }
        let specs = self.properties(node, schema, path);
        if schema.is_structural() {
            self.duplicate(node, path);
            return;
        }
        if let Some(specs) = specs {
            let probe = schema.instantiate().expect("non-structural feature");
            if let Err(e) = PipelineNode::feature(path, probe).with_properties(specs).validate() {
                let (rule, prop) = pipeline_rule(&e);
                self.report.error(path, prop.as_deref(), rule, e.to_string());
            }
        }
    }

    fn duplicate(&mut self, node: &NodeConfig, path: &str) {
        if let Some(raw) = node.properties.get("n") {
            if duplicate_count(raw).is_none() {
                self.report.error(
                    path,
                    Some("n"),
                    "duplicate-count",
                    format!("n must be an integer constant in 1..={MAX_DUPLICATE}"),
                );
            }
        }
        if node.name.is_some() {
            self.report.warn(path, None, "unused-name", "Duplicate nodes carry no record; the name is ignored");
        }
        if node.children.len() != 1 {
            self.report.error(
                path,
                None,
                "duplicate-arity",
                format!("Duplicate needs exactly one child, has {}", node.children.len()),
            );
        }
    }

    /// Parsed property specs with defaults filled, or `None` after an error.
    fn properties(&mut self, node: &mut NodeConfig, schema: &FeatureSchema, path: &str) -> Option<Vec<PropertySpec>> {
        let mut ok = true;
        let mut specs = Vec::new();
        for (name, raw) in node.properties.iter_mut() {
            let kind = match PropertyKind::from_json(raw) {
                Ok(k) => k,
                Err(msg) => {
                    self.report.error(path, Some(name), "property-syntax", msg);
                    ok = false;
                    continue;
                }
            };
            *raw = kind.to_json();
            match schema.property(name) {
                Some(p) => {
                    if let Err(msg) = type_check(&kind, p.value_type) {
                        self.report.error(path, Some(name), "property-type", msg);
                        ok = false;
                    }
                }
                None => self.report.warn(
                    path,
                    Some(name),
                    "unknown-property",
                    format!("{} does not read {name:?}; it is kept in the record only", schema.name),
                ),
            }
            if let PropertyKind::Dependent(expr) = &kind {
                for r in expr.references() {
                    if let Reference::Import { source, .. } = &r {
                        if !self.names.contains(source) && !is_node_path(source) {
                            self.report.error(path, Some(name), "unknown-source", format!("no node is named {source:?}"));
                            ok = false;
                        }
                    }
                }
            }
            specs.push(PropertySpec { name: name.clone(), kind });
        }
        for p in &schema.properties {
            if node.properties.contains_key(p.name) {
                continue;
            }
            if let Some(d) = &p.default {
                node.properties.insert(p.name.to_string(), d.clone());
                let kind = PropertyKind::from_json(d).expect("registry defaults are constants");
                specs.push(PropertySpec { name: p.name.to_string(), kind });
            } else if p.required {
                self.report.error(path, Some(p.name), "missing-property", format!("{} requires {:?}", schema.name, p.name));
                ok = false;
            }
        }
        if !schema.one_of.is_empty() && !schema.one_of.iter().any(|k| node.properties.contains_key(*k)) {
            self.report.error(
                path,
                None,
                "missing-property",
                format!("{} requires one of {:?}", schema.name, schema.one_of),
            );
            ok = false;
        }
        if self.stage == Stage::Label {
            if let Some(Json::String(src)) = node.properties.get("source") {
                if !self.image_names.contains(src) && !self.image_features.contains(src) {
                    self.report.error(
                        path,
                        Some("source"),
                        "unknown-source",
                        format!("no image-pipeline node is named or has feature {src:?}"),
                    );
                    ok = false;
                }
            }
        }
        ok.then_some(specs)
    }
}

fn duplicate_count(raw: &Json) -> Option<usize> {
    let n = raw.as_f64()?;
    (n.fract() == 0.0 && (1.0..=MAX_DUPLICATE as f64).contains(&n)).then_some(n as usize)
}

/// Image-list length after `node` runs on a list of `len` images, for a
/// node tree that passed the per-node checks.
fn list_length(node: &NodeConfig, path: &str, registry: &Registry, len: usize) -> Result<usize, (String, String)> {
    let schema = registry.get(&node.feature).expect("checked feature");
    if schema.is_structural() {
        let n = node.properties.get("n").and_then(duplicate_count).unwrap_or(1);
        let child_path = format!("{path}/children/0");
        let child = &node.children[0];
        let l1 = list_length(child, &child_path, registry, len)?;
        if n == 1 {
            return Ok(l1);
        }
        // A subtree's length map is either l ↦ l + c or constant, so two
        // applications determine all n.
        let l2 = list_length(child, &child_path, registry, l1)?;
        return Ok(if l2 == l1 { l1 } else { len + n * (l1 - len) });
    }
    let mut l = len;
    for (i, c) in node.children.iter().enumerate() {
        l = list_length(c, &format!("{path}/children/{i}"), registry, l)?;
    }
    let required = schema.instantiate().expect("non-structural feature").min_inputs();
    if l < required {
        return Err((
            path.to_string(),
            format!("{} needs at least {required} input image(s), {l} available here", schema.name),
        ));
    }
    Ok(match schema.kind {
        "append" => l + 1,
        "merge" => 1,
        _ => l,
    })
}

fn is_node_path(s: &str) -> bool {
    s.starts_with("nodes/") || s.starts_with("label/")
}

fn type_check(kind: &PropertyKind, want: ValueType) -> Result<(), String> {
    let check = |v: &Value| -> Result<(), String> {
        let fine = match (want, v) {
            (ValueType::Number, Value::Number(_)) => true,
            (ValueType::Flag, Value::Bool(_) | Value::Number(_)) => true,
            (ValueType::Text, Value::Text(_)) => true,
            _ => false,
        };
        if fine {
            Ok(())
        } else {
            Err(format!("expected a {} value, found a {}", type_label(want), v.type_name()))
        }
    };
    match kind {
        PropertyKind::Constant(v) => check(v),
        PropertyKind::Sampler(Distribution::Choice(items)) => items.iter().try_for_each(check),
        PropertyKind::Sampler(_) | PropertyKind::Dependent(_) => check(&Value::Number(0.0)),
    }
}

fn type_label(t: ValueType) -> &'static str {
    match t {
        ValueType::Number => "number",
        ValueType::Flag => "flag",
        ValueType::Text => "text",
    }
}

fn pipeline_rule(e: &PipelineError) -> (&'static str, Option<String>) {
    match e {
        PipelineError::Cycle { .. } => ("cycle", None),
        PipelineError::UnknownReference { property, .. } => ("unknown-reference", Some(property.clone())),
        PipelineError::AmbiguousReference { property, .. } => ("ambiguous-reference", Some(property.clone())),
        PipelineError::InvalidValue { property, .. } => ("property-value", Some(property.clone())),
        _ => ("pipeline", None),
    }
}

fn build_section(nodes: &[NodeConfig], section: &str, registry: &Registry, report: &mut ValidationReport) -> Pipeline {
    Pipeline::new(
        nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| build_node(n, &format!("{section}/{i}"), registry, report))
            .collect(),
    )
}

fn build_node(node: &NodeConfig, path: &str, registry: &Registry, report: &mut ValidationReport) -> Option<PipelineNode> {
    let Some(schema) = registry.get(&node.feature) else {
        report.error(path, None, "unknown-feature", format!("feature {:?} is not registered", node.feature));
        return None;
    };
    let children: Vec<PipelineNode> = node
        .children
        .iter()
        .enumerate()
        .filter_map(|(i, c)| build_node(c, &format!("{path}/children/{i}"), registry, report))
        .collect();
    if children.len() != node.children.len() {
        return None;
    }
    if schema.is_structural() {
        let n = node.properties.get("n").and_then(duplicate_count).unwrap_or(0);
        let mut children = children.into_iter();
        let node = PipelineNode::duplicate(path, n, children.next()?);
        return children.next().is_none().then_some(node);
    }
    let mut built = PipelineNode::feature(path, schema.instantiate().expect("non-structural feature"));
    if let Some(name) = &node.name {
        built = built.named(name);
    }
    for (name, raw) in &node.properties {
        match PropertyKind::from_json(raw) {
            Ok(kind) => built = built.with_property(PropertySpec { name: name.clone(), kind }),
            Err(msg) => report.error(path, Some(name), "property-syntax", msg),
        }
    }
    Some(children.into_iter().fold(built, PipelineNode::with_child))
}
