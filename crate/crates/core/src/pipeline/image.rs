use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, ArrayD, IxDyn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::value::Value;

/// Unique id of a feature instance within a pipeline.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstanceId(Arc<str>);

impl InstanceId {
    pub fn new(id: impl AsRef<str>) -> Self {
        InstanceId(Arc::from(id.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Id of the `index`-th clone made by a duplicate node.
    pub fn clone_of(&self, index: usize) -> Self {
        InstanceId::new(format!("{}#{index}", self.0))
    }
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Resolved property values of one feature instance for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyRecord {
    instance: InstanceId,
    feature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    values: BTreeMap<String, Value>,
}

impl PropertyRecord {
    pub fn new(
        instance: InstanceId,
        feature: impl Into<String>,
        name: Option<String>,
        values: BTreeMap<String, Value>,
    ) -> Self {
        PropertyRecord { instance, feature: feature.into(), name, values }
    }

    pub fn instance(&self) -> &InstanceId {
        &self.instance
    }

    /// Registered feature type that produced the record.
    pub fn feature(&self) -> &str {
        &self.feature
    }

    /// The export name of the node, if any.
    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn values(&self) -> &BTreeMap<String, Value> {
        &self.values
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key)
    }

    pub fn number(&self, key: &str) -> Option<f64> {
        self.values.get(key).and_then(Value::as_f64)
    }

    pub(crate) fn with_extra(mut self, extra: BTreeMap<String, Value>) -> Self {
        self.values.extend(extra);
        self
    }
}

/// Ordered, duplicate-free (by instance id) list of records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordSet(Vec<Arc<PropertyRecord>>);

impl RecordSet {
    pub fn new() -> Self {
        RecordSet(Vec::new())
    }

    /// Inserts `record` unless a record with the same instance id is present.
    /// Returns `Err` with the existing record if the two disagree.
    pub fn insert(&mut self, record: Arc<PropertyRecord>) -> Result<(), Arc<PropertyRecord>> {
        if let Some(existing) = self.0.iter().find(|r| r.instance == record.instance) {
            if **existing != *record {
                return Err(existing.clone());
            }
            return Ok(());
        }
        self.0.push(record);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<PropertyRecord>> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, instance: &InstanceId) -> Option<&Arc<PropertyRecord>> {
        self.0.iter().find(|r| &r.instance == instance)
    }

    /// Records whose export name is `name`.
    pub fn named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Arc<PropertyRecord>> + 'a {
        self.0.iter().filter(move |r| r.name() == Some(name))
    }

    pub fn to_vec(&self) -> Vec<PropertyRecord> {
        self.0.iter().map(|r| (**r).clone()).collect()
    }
}

impl FromIterator<PropertyRecord> for RecordSet {
    fn from_iter<T: IntoIterator<Item = PropertyRecord>>(iter: T) -> Self {
        let mut set = RecordSet::new();
        for r in iter {
            let _ = set.insert(Arc::new(r));
        }
        set
    }
}

/// Which representation an array holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Plane {
    /// Samples on the spatial grid.
    #[default]
    Spatial,
    /// Samples on the unshifted FFT frequency grid of the simulation plane.
    Frequency,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImageData {
    Real(ArrayD<f64>),
    Complex(ArrayD<Complex64>),
}

impl ImageData {
    pub fn shape(&self) -> &[usize] {
        match self {
            ImageData::Real(a) => a.shape(),
            ImageData::Complex(a) => a.shape(),
        }
    }

    pub fn dtype(&self) -> &'static str {
        match self {
            ImageData::Real(_) => "float64",
            ImageData::Complex(_) => "complex128",
        }
    }

    pub fn real2(a: Array2<f64>) -> Self {
        ImageData::Real(a.into_dyn())
    }

    pub fn complex2(a: Array2<Complex64>) -> Self {
        ImageData::Complex(a.into_dyn())
    }

    pub fn as_real(&self) -> Option<&ArrayD<f64>> {
        match self {
            ImageData::Real(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_complex(&self) -> Option<&ArrayD<Complex64>> {
        match self {
            ImageData::Complex(a) => Some(a),
            _ => None,
        }
    }

    /// Borrow as a 2-D real array, if it is one.
    pub fn real_2d(&self) -> Option<ndarray::ArrayView2<'_, f64>> {
        self.as_real().and_then(|a| a.view().into_dimensionality().ok())
    }

    pub fn complex_2d(&self) -> Option<ndarray::ArrayView2<'_, Complex64>> {
        self.as_complex().and_then(|a| a.view().into_dimensionality().ok())
    }

    /// Complex view of the data, promoting a real array.
    pub fn to_complex(&self) -> ArrayD<Complex64> {
        match self {
            ImageData::Real(a) => a.mapv(|v| Complex64::new(v, 0.0)),
            ImageData::Complex(a) => a.clone(),
        }
    }

    pub fn empty() -> Self {
        ImageData::Real(ArrayD::zeros(IxDyn(&[0])))
    }
}

/// An array together with the records of every feature that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedImage {
    pub data: ImageData,
    pub plane: Plane,
    pub records: RecordSet,
}

impl TaggedImage {
    pub fn new(data: ImageData) -> Self {
        TaggedImage { data, plane: Plane::Spatial, records: RecordSet::new() }
    }

    pub fn with_plane(mut self, plane: Plane) -> Self {
        self.plane = plane;
        self
    }

    pub fn shape(&self) -> &[usize] {
        self.data.shape()
    }

    /// Records produced by the feature type `feature`.
    pub fn records_of<'a>(&'a self, feature: &'a str) -> impl Iterator<Item = &'a Arc<PropertyRecord>> + 'a {
        self.records.iter().filter(move |r| r.feature() == feature)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, v: f64) -> PropertyRecord {
        PropertyRecord::new(InstanceId::new(id), "X", None, BTreeMap::from([("v".to_string(), Value::Number(v))]))
    }

    #[test]
    fn record_set_dedupes_by_instance() {
        let mut set = RecordSet::new();
        set.insert(Arc::new(rec("a", 1.0))).unwrap();
        set.insert(Arc::new(rec("a", 1.0))).unwrap();
        set.insert(Arc::new(rec("b", 1.0))).unwrap();
        assert_eq!(set.len(), 2);
        assert!(set.insert(Arc::new(rec("a", 2.0))).is_err());
        assert_eq!(set.len(), 2);
    }

    #[test]
    fn clone_ids_nest() {
        let id = InstanceId::new("p/0");
        assert_eq!(id.clone_of(2).clone_of(1).as_str(), "p/0#2#1");
    }
}
