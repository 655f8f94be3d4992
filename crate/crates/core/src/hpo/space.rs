use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// A single hyperparameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            ParamValue::Int(i) => Some(i as f64),
            ParamValue::Float(f) => Some(f),
            ParamValue::Text(_) => None,
        }
    }

    /// Parses the persisted form written by `Display`: integers first, then
    /// reals, anything else is text.
    pub fn parse(token: &str) -> ParamValue {
        if let Ok(i) = token.parse::<i64>() {
            ParamValue::Int(i)
        } else if let Ok(f) = token.parse::<f64>() {
            ParamValue::Float(f)
        } else {
            ParamValue::Text(token.to_owned())
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(i) => write!(f, "{i}"),
            // `{:?}` keeps a decimal point or exponent, so the value re-parses as a float
            ParamValue::Float(x) => write!(f, "{x:?}"),
            ParamValue::Text(s) => f.write_str(s),
        }
    }
}

/// Name -> value assignment drawn from a [`SearchSpace`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Hyperparameters(pub BTreeMap<String, ParamValue>);

impl Hyperparameters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: ParamValue) -> Self {
        self.0.insert(key.to_owned(), value);
        self
    }

    pub fn get(&self, key: &str) -> Option<&ParamValue> {
        self.0.get(key)
    }

    pub fn f64(&self, key: &str) -> Option<f64> {
        self.0.get(key).and_then(ParamValue::as_f64)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    /// Flat `key=value` rendering, keys in sorted order, separated by `sep`.
    pub fn to_flat(&self, sep: &str) -> String {
        self.0
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(sep)
    }
}

/// Distribution of one hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "kebab-case")]
pub enum Dimension {
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
    /// Integers in `[lo, hi]`, both ends included.
    DiscreteUniform { lo: i64, hi: i64 },
    Choice { options: Vec<ChoiceArm> },
}

/// One option of a [`Dimension::Choice`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChoiceArm {
    /// A fixed value.
    Value(ParamValue),
    /// The value is drawn from a nested distribution (e.g. "0 or log-uniform").
    Dist(Box<Dimension>),
    /// The value is `value` and the arm brings its own sub-dimensions.
    Branch {
        value: ParamValue,
        space: BTreeMap<String, Dimension>,
    },
}

impl Dimension {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Dimension::Uniform { lo, hi } if !(lo < hi) => Err(format!("uniform bounds {lo} >= {hi}")),
            Dimension::LogUniform { lo, hi } if !(lo < hi) || *lo <= 0.0 => {
                Err(format!("log-uniform bounds must satisfy 0 < {lo} < {hi}"))
            }
            Dimension::DiscreteUniform { lo, hi } if lo > hi => {
                Err(format!("discrete bounds {lo} > {hi}"))
            }
            Dimension::Choice { options } if options.is_empty() => Err("empty choice".into()),
            Dimension::Choice { options } => options.iter().try_for_each(|arm| match arm {
                ChoiceArm::Value(_) => Ok(()),
                ChoiceArm::Dist(d) => d.validate(),
                ChoiceArm::Branch { space, .. } => space.values().try_for_each(Dimension::validate),
            }),
            _ => Ok(()),
        }
    }

    /// Maps `u` in `[0, 1]` through the inverse CDF of a continuous dimension.
    /// Discrete and choice dimensions return `None`.
    pub fn from_unit(&self, u: f64) -> Option<f64> {
        match *self {
            Dimension::Uniform { lo, hi } => Some((lo + u * (hi - lo)).clamp(lo, hi)),
            Dimension::LogUniform { lo, hi } => {
                let (a, b) = (lo.ln(), hi.ln());
                Some((a + u * (b - a)).exp().clamp(lo, hi))
            }
            _ => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, key: &str, out: &mut Hyperparameters) {
        match self {
            Dimension::Uniform { .. } | Dimension::LogUniform { .. } => {
                let u: f64 = rng.random();
                let v = self.from_unit(u).expect("continuous");
                out.0.insert(key.to_owned(), ParamValue::Float(v));
            }
            Dimension::DiscreteUniform { lo, hi } => {
                out.0.insert(key.to_owned(), ParamValue::Int(rng.random_range(*lo..=*hi)));
            }
            Dimension::Choice { options } => {
                let arm = &options[rng.random_range(0..options.len())];
                arm.sample(rng, key, out);
            }
        }
    }

    pub fn contains(&self, value: &ParamValue) -> bool {
        match (self, value) {
            (Dimension::Uniform { lo, hi } | Dimension::LogUniform { lo, hi }, v) => {
                v.as_f64().is_some_and(|x| *lo <= x && x <= *hi)
            }
            (Dimension::DiscreteUniform { lo, hi }, ParamValue::Int(i)) => lo <= i && i <= hi,
            (Dimension::Choice { options }, v) => options.iter().any(|a| a.matches(v)),
            _ => false,
        }
    }

    /// Index of the choice arm that produced `value`; fixed values win over
    /// nested distributions.
    pub fn arm_of(&self, value: &ParamValue) -> Option<usize> {
        let Dimension::Choice { options } = self else {
            return None;
        };
        options
            .iter()
            .position(|a| matches!(a, ChoiceArm::Value(v) | ChoiceArm::Branch { value: v, .. } if v == value))
            .or_else(|| options.iter().position(|a| a.matches(value)))
    }
}

impl ChoiceArm {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, key: &str, out: &mut Hyperparameters) {
        match self {
            ChoiceArm::Value(v) => {
                out.0.insert(key.to_owned(), v.clone());
            }
            ChoiceArm::Dist(d) => d.sample(rng, key, out),
            ChoiceArm::Branch { value, space } => {
                out.0.insert(key.to_owned(), value.clone());
                for (k, d) in space {
                    d.sample(rng, k, out);
                }
            }
        }
    }

    fn matches(&self, v: &ParamValue) -> bool {
        match self {
            ChoiceArm::Value(x) | ChoiceArm::Branch { value: x, .. } => {
                x == v || matches!((x.as_f64(), v.as_f64()), (Some(a), Some(b)) if a == b)
            }
            ChoiceArm::Dist(d) => d.contains(v),
        }
    }
}

/// Named, ordered hyperparameter dimensions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchSpace {
    pub dims: Vec<(String, Dimension)>,
}

impl SearchSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dim(mut self, key: &str, d: Dimension) -> Self {
        self.dims.push((key.to_owned(), d));
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        for (k, d) in &self.dims {
            d.validate().map_err(|e| format!("{k}: {e}"))?;
        }
        Ok(())
    }

    /// Draws one configuration from the prior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Hyperparameters {
        let mut out = Hyperparameters::new();
        for (k, d) in &self.dims {
            d.sample(rng, k, &mut out);
        }
        out
    }

    /// True when every top-level dimension (and every active branch
    /// sub-dimension) is assigned a value inside its support.
    pub fn contains(&self, hp: &Hyperparameters) -> bool {
        self.dims.iter().all(|(k, d)| {
            let Some(v) = hp.get(k) else { return false };
            if !d.contains(v) {
                return false;
            }
            match d.arm_of(v).map(|i| match d {
                Dimension::Choice { options } => &options[i],
                _ => unreachable!(),
            }) {
                Some(ChoiceArm::Branch { space, .. }) => space
                    .iter()
                    .all(|(sk, sd)| hp.get(sk).is_some_and(|sv| sd.contains(sv))),
                _ => true,
            }
        })
    }

    /// Every key the space can assign, including branch sub-dimensions.
    pub fn all_keys(&self) -> Vec<String> {
        fn walk(key: &str, d: &Dimension, out: &mut Vec<String>) {
            out.push(key.to_owned());
            if let Dimension::Choice { options } = d {
                for arm in options {
                    if let ChoiceArm::Branch { space, .. } = arm {
                        for (k, sd) in space {
                            walk(k, sd, out);
                        }
                    }
                }
            }
        }
        let mut out = Vec::new();
        for (k, d) in &self.dims {
            walk(k, d, &mut out);
        }
        out.sort();
        out.dedup();
        out
    }
}

impl From<BTreeMap<String, Dimension>> for SearchSpace {
    fn from(map: BTreeMap<String, Dimension>) -> Self {
        SearchSpace {
            dims: map.into_iter().collect(),
        }
    }
}
