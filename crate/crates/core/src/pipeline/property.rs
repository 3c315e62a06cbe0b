use rand::Rng;
use rand_distr::{Distribution as _, Normal};

use super::expr::Expr;
use super::value::Value;

/// Distribution descriptors for sampled properties.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    /// Continuous uniform on `[lo, hi)`.
    Uniform { lo: f64, hi: f64 },
    /// Integer uniform on `[lo, hi]`.
    UniformInt { lo: i64, hi: i64 },
    Normal { mean: f64, std: f64 },
    /// Uniform choice among the listed values.
    Choice(Vec<Value>),
}

impl Distribution {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Distribution::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo <= hi) => {
                Err(format!("uniform bounds must satisfy lo <= hi, got [{lo}, {hi}]"))
            }
            Distribution::UniformInt { lo, hi } if lo > hi => {
                Err(format!("uniform_int bounds must satisfy lo <= hi, got [{lo}, {hi}]"))
            }
            Distribution::Normal { mean, std } if !(mean.is_finite() && std.is_finite() && *std >= 0.0) => {
                Err(format!("normal requires finite mean and std >= 0, got ({mean}, {std})"))
            }
            Distribution::Choice(items) if items.is_empty() => Err("choice requires at least one option".into()),
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Value {
        match self {
            Distribution::Uniform { lo, hi } => {
                if lo == hi {
                    Value::Number(*lo)
                } else {
                    Value::Number(rng.random_range(*lo..*hi))
                }
            }
            Distribution::UniformInt { lo, hi } => Value::Number(rng.random_range(*lo..=*hi) as f64),
            Distribution::Normal { mean, std } => {
                let n = Normal::new(*mean, *std).expect("validated normal parameters");
                Value::Number(n.sample(rng))
            }
            Distribution::Choice(items) => items[rng.random_range(0..items.len())].clone(),
        }
    }

    pub(crate) fn to_json(&self) -> serde_json::Value {
        use serde_json::json;
        match self {
            Distribution::Uniform { lo, hi } => json!({ "uniform": [lo, hi] }),
            Distribution::UniformInt { lo, hi } => json!({ "uniform_int": [lo, hi] }),
            Distribution::Normal { mean, std } => json!({ "normal": { "mean": mean, "std": std } }),
            Distribution::Choice(items) => {
                json!({ "choice": items.iter().map(Value::to_json).collect::<Vec<_>>() })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PropertyKind {
    Constant(Value),
    Sampler(Distribution),
    Dependent(Expr),
}

impl PropertyKind {
    /// Parses the JSON form used in configs: a bare scalar or numeric array
    /// is a constant; tagged objects select a distribution or an expression.
    pub fn from_json(v: &serde_json::Value) -> Result<PropertyKind, String> {
        if let Some(c) = Value::from_json(v) {
            return Ok(PropertyKind::Constant(c));
        }
        let obj = v.as_object().ok_or_else(|| format!("unsupported property value {v}"))?;
        if obj.len() != 1 {
            return Err(format!(
                "property descriptor must have exactly one key (uniform, uniform_int, normal, choice, expr), got {}",
                obj.len()
            ));
        }
        let (tag, body) = obj.iter().next().expect("one entry");
        let pair = |body: &serde_json::Value| -> Result<(f64, f64), String> {
            match body.as_array().map(|a| a.as_slice()) {
                Some([a, b]) => match (a.as_f64(), b.as_f64()) {
                    (Some(a), Some(b)) => Ok((a, b)),
                    _ => Err(format!("{tag} bounds must be numbers")),
                },
                _ => Err(format!("{tag} expects [lo, hi]")),
            }
        };
        let dist = match tag.as_str() {
            "uniform" => {
                let (lo, hi) = pair(body)?;
                Distribution::Uniform { lo, hi }
            }
            "uniform_int" => {
                let (lo, hi) = pair(body)?;
                if lo.fract() != 0.0 || hi.fract() != 0.0 {
                    return Err("uniform_int bounds must be integers".into());
                }
                Distribution::UniformInt { lo: lo as i64, hi: hi as i64 }
            }
            "normal" => {
                let get = |k: &str| {
                    body.get(k)
                        .and_then(|x| x.as_f64())
                        .ok_or_else(|| format!("normal requires numeric {k:?}"))
                };
                Distribution::Normal { mean: get("mean")?, std: get("std")? }
            }
            "choice" => {
                let items = body.as_array().ok_or("choice expects an array")?;
                let values = items
                    .iter()
                    .map(|x| Value::from_json(x).ok_or_else(|| format!("unsupported choice option {x}")))
                    .collect::<Result<Vec<_>, _>>()?;
                Distribution::Choice(values)
            }
            "expr" => {
                let src = body.as_str().ok_or("expr expects a string")?;
                let expr = Expr::parse(src).map_err(|e| format!("invalid expression {src:?}: {e}"))?;
                return Ok(PropertyKind::Dependent(expr));
            }
            other => return Err(format!("unknown property descriptor {other:?}")),
        };
        dist.validate()?;
        Ok(PropertyKind::Sampler(dist))
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            PropertyKind::Constant(v) => v.to_json(),
            PropertyKind::Sampler(d) => d.to_json(),
            PropertyKind::Dependent(e) => serde_json::json!({ "expr": e.source() }),
        }
    }
}

/// A named property of a feature.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertySpec {
    pub name: String,
    pub kind: PropertyKind,
}

impl PropertySpec {
    pub fn constant(name: impl Into<String>, value: impl Into<Value>) -> Self {
        PropertySpec { name: name.into(), kind: PropertyKind::Constant(value.into()) }
    }

    pub fn sampled(name: impl Into<String>, dist: Distribution) -> Self {
        PropertySpec { name: name.into(), kind: PropertyKind::Sampler(dist) }
    }

    pub fn uniform(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        Self::sampled(name, Distribution::Uniform { lo, hi })
    }

    /// Panics if `expr` does not parse; use [`PropertyKind::from_json`] for untrusted text.
    pub fn dependent(name: impl Into<String>, expr: &str) -> Self {
        let expr = Expr::parse(expr).unwrap_or_else(|e| panic!("invalid expression {expr:?}: {e}"));
        PropertySpec { name: name.into(), kind: PropertyKind::Dependent(expr) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn json_forms_round_trip() {
        for v in [
            json!(2.5),
            json!("inline"),
            json!(true),
            json!([1.0, 2.0]),
            json!({"uniform": [1.0, 3.0]}),
            json!({"uniform_int": [0.0, 10.0]}),
            json!({"normal": {"mean": 0.0, "std": 1.0}}),
            json!({"choice": [1.0, "a"]}),
            json!({"expr": "pi * radius"}),
        ] {
            let kind = PropertyKind::from_json(&v).unwrap();
            let back = PropertyKind::from_json(&kind.to_json()).unwrap();
            assert_eq!(kind, back);
        }
    }

    #[test]
    fn malformed_descriptors_are_rejected() {
        assert!(PropertyKind::from_json(&json!({"uniform": [3.0, 1.0]})).is_err());
        assert!(PropertyKind::from_json(&json!({"uniform": [1.0]})).is_err());
        assert!(PropertyKind::from_json(&json!({"normal": {"mean": 0.0, "std": -1.0}})).is_err());
        assert!(PropertyKind::from_json(&json!({"choice": []})).is_err());
        assert!(PropertyKind::from_json(&json!({"gamma": [1.0, 2.0]})).is_err());
        assert!(PropertyKind::from_json(&json!({"expr": "1 +"})).is_err());
        assert!(PropertyKind::from_json(&json!(null)).is_err());
    }
}
