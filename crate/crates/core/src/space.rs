//! Hyperparameter search spaces and concrete configurations.
//!
//! A space is an ordered list of named dimensions (real, log-real, integer,
//! categorical), each carrying its bounds and a default. Configurations are
//! name -> value maps with a canonical JSON form, so they hash and compare
//! stably across runs.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("dimension `{0}`: bounds are empty or inverted")]
    BadBounds(String),
    #[error("dimension `{0}`: log-scaled bounds must be positive")]
    NonPositiveLogBounds(String),
    #[error("dimension `{0}`: default lies outside the bounds")]
    DefaultOutOfBounds(String),
    #[error("configuration is missing dimension `{0}`")]
    MissingDimension(String),
    #[error("configuration value for `{0}` has the wrong kind or is out of bounds")]
    InvalidValue(String),
}

/// One search dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dimension {
    Real { lo: f64, hi: f64, default: f64 },
    /// Real-valued, searched on a logarithmic scale.
    LogReal { lo: f64, hi: f64, default: f64 },
    Int { lo: i64, hi: i64, default: i64 },
    Cat { choices: Vec<String>, default: usize },
}

/// A concrete hyperparameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    // Untagged deserialization tries the variants in order, so integers must
    // precede reals or a JSON `5` would round-trip into `Real(5.0)`.
    Int(i64),
    Real(f64),
    Cat(String),
}

impl ParamValue {
    pub fn as_real(&self) -> Option<f64> {
        match self {
            ParamValue::Real(v) => Some(*v),
            ParamValue::Int(v) => Some(*v as f64),
            ParamValue::Cat(_) => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            ParamValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Cat(v) => Some(v),
            _ => None,
        }
    }
}

/// Name -> value map in canonical (sorted) order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HyperparamConfig(pub BTreeMap<String, ParamValue>);

impl HyperparamConfig {
    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.0.get(name)
    }

    pub fn set(&mut self, name: &str, value: ParamValue) {
        self.0.insert(name.to_string(), value);
    }

    /// Canonical JSON used for hashing and model file names.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Ordered collection of named dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparamSpace {
    dims: Vec<(String, Dimension)>,
}

impl HyperparamSpace {
    pub fn new(dims: Vec<(String, Dimension)>) -> Result<Self, SpaceError> {
        for (name, dim) in &dims {
            match dim {
                Dimension::Real { lo, hi, default } => {
                    if !(lo < hi) {
                        return Err(SpaceError::BadBounds(name.clone()));
                    }
                    if !(default >= lo && default <= hi) {
                        return Err(SpaceError::DefaultOutOfBounds(name.clone()));
                    }
                }
                Dimension::LogReal { lo, hi, default } => {
                    if !(lo < hi) {
                        return Err(SpaceError::BadBounds(name.clone()));
                    }
                    if *lo <= 0.0 {
                        return Err(SpaceError::NonPositiveLogBounds(name.clone()));
                    }
                    if !(default >= lo && default <= hi) {
                        return Err(SpaceError::DefaultOutOfBounds(name.clone()));
                    }
                }
                Dimension::Int { lo, hi, default } => {
                    if lo > hi {
                        return Err(SpaceError::BadBounds(name.clone()));
                    }
                    if default < lo || default > hi {
                        return Err(SpaceError::DefaultOutOfBounds(name.clone()));
                    }
                }
                Dimension::Cat { choices, default } => {
                    if choices.is_empty() {
                        return Err(SpaceError::BadBounds(name.clone()));
                    }
                    if *default >= choices.len() {
                        return Err(SpaceError::DefaultOutOfBounds(name.clone()));
                    }
                }
            }
        }
        Ok(HyperparamSpace { dims })
    }

    pub fn dims(&self) -> &[(String, Dimension)] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    /// Extend with an extra dimension (used when a sampling width is searched
    /// jointly with the model hyperparameters).
    pub fn with_dimension(&self, name: &str, dim: Dimension) -> Result<Self, SpaceError> {
        let mut dims = self.dims.clone();
        dims.push((name.to_string(), dim));
        HyperparamSpace::new(dims)
    }

    /// The all-defaults configuration.
    pub fn default_config(&self) -> HyperparamConfig {
        let mut cfg = HyperparamConfig::default();
        for (name, dim) in &self.dims {
            let v = match dim {
                Dimension::Real { default, .. } | Dimension::LogReal { default, .. } => {
                    ParamValue::Real(*default)
                }
                Dimension::Int { default, .. } => ParamValue::Int(*default),
                Dimension::Cat { choices, default } => ParamValue::Cat(choices[*default].clone()),
            };
            cfg.set(name, v);
        }
        cfg
    }

    /// Uniform draw: linear for real and integer dimensions, log-uniform for
    /// log-scaled ones, uniform over choices for categorical ones.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> HyperparamConfig {
        let mut cfg = HyperparamConfig::default();
        for (name, dim) in &self.dims {
            let v = match dim {
                Dimension::Real { lo, hi, .. } => ParamValue::Real(rng.gen_range(*lo..=*hi)),
                Dimension::LogReal { lo, hi, .. } => {
                    let ln = rng.gen_range(lo.ln()..=hi.ln());
                    ParamValue::Real(ln.exp().clamp(*lo, *hi))
                }
                Dimension::Int { lo, hi, .. } => ParamValue::Int(rng.gen_range(*lo..=*hi)),
                Dimension::Cat { choices, .. } => {
                    ParamValue::Cat(choices[rng.gen_range(0..choices.len())].clone())
                }
            };
            cfg.set(name, v);
        }
        cfg
    }

    /// Check that a configuration covers every dimension with an in-bounds
    /// value of the right kind. Extra keys are tolerated.
    pub fn validate(&self, cfg: &HyperparamConfig) -> Result<(), SpaceError> {
        for (name, dim) in &self.dims {
            let v = cfg
                .get(name)
                .ok_or_else(|| SpaceError::MissingDimension(name.clone()))?;
            let ok = match (dim, v) {
                (Dimension::Real { lo, hi, .. }, ParamValue::Real(x))
                | (Dimension::LogReal { lo, hi, .. }, ParamValue::Real(x)) => {
                    x.is_finite() && *x >= *lo && *x <= *hi
                }
                // Whole-number JSON literals parse as integers; accept them
                // for real dimensions rather than forcing users to write
                // `1.0`.
                (Dimension::Real { lo, hi, .. }, ParamValue::Int(x))
                | (Dimension::LogReal { lo, hi, .. }, ParamValue::Int(x)) => {
                    (*x as f64) >= *lo && (*x as f64) <= *hi
                }
                (Dimension::Int { lo, hi, .. }, ParamValue::Int(x)) => x >= lo && x <= hi,
                (Dimension::Cat { choices, .. }, ParamValue::Cat(x)) => choices.contains(x),
                _ => false,
            };
            if !ok {
                return Err(SpaceError::InvalidValue(name.clone()));
            }
        }
        Ok(())
    }

    /// Clamp real and integer entries into bounds and snap categorical values
    /// onto valid choices. Used after mutation.
    pub fn clamp(&self, cfg: &mut HyperparamConfig) {
        for (name, dim) in &self.dims {
            if let Some(v) = cfg.0.get_mut(name) {
                match (dim, v) {
                    (Dimension::Real { lo, hi, .. }, ParamValue::Real(x))
                    | (Dimension::LogReal { lo, hi, .. }, ParamValue::Real(x)) => {
                        *x = x.clamp(*lo, *hi);
                    }
                    (Dimension::Real { lo, hi, .. }, v @ ParamValue::Int(_))
                    | (Dimension::LogReal { lo, hi, .. }, v @ ParamValue::Int(_)) => {
                        let x = v.as_real().expect("integer coerces to real");
                        *v = ParamValue::Real(x.clamp(*lo, *hi));
                    }
                    (Dimension::Int { lo, hi, .. }, ParamValue::Int(x)) => {
                        *x = (*x).clamp(*lo, *hi);
                    }
                    _ => {}
                }
            }
        }
    }
}
