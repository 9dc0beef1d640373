//! Trial generators for hyperparameter search.
//!
//! Two generators cooperate in the nested search: a tree-of-Parzen-estimators
//! sampler over the single sampling-width dimension ([`tpe`]), optionally
//! seeded with a log-normal prior distilled from earlier runs ([`prior`]),
//! and an island-model evolutionary algorithm over point-forecaster
//! configurations ([`ea`]). A plateau detector ([`stop`]) ends inner loops
//! once the best scores stop moving.
//!
//! All generators are deterministic given their seed: random state is derived
//! per call from the seed and a monotone call counter, so a state serialized
//! mid-run resumes bit-identically.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::HyperparamConfig;

pub mod ea;
pub mod prior;
pub mod stop;
pub mod tpe;

pub use ea::{EaConfig, EaState};
pub use prior::{prior_stats, PriorStats, SigmaPrior};
pub use stop::early_stop;
pub use tpe::{TpeConfig, TpeState};

/// Errors raised by the trial generators.
#[derive(Debug, Error)]
pub enum HpoError {
    /// An operation that needs at least one evaluated individual got none.
    #[error("no evaluated individuals available")]
    EmptyPopulation,
    /// Search bounds are unusable (empty, inverted, or non-positive where a
    /// logarithm is taken).
    #[error("bad search bounds: {0}")]
    BadBounds(String),
}

/// One completed trial: the configuration that was evaluated, its validation
/// score, and bookkeeping for tie-breaks and cost accounting.
///
/// `score` is serialized through a sentinel so that failed trials (recorded
/// with an infinite score, which plain JSON cannot carry) survive a
/// round-trip through the checkpoint files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// The evaluated configuration (point-forecaster parameters, and for the
    /// joint mode also the sampling width).
    pub config: HyperparamConfig,
    /// Validation score (lower is better). Infinite for failed trials.
    #[serde(with = "score_serde")]
    pub score: f64,
    /// Best inner sampling width found while evaluating this configuration,
    /// when the trial ran an inner search.
    pub sigma_star: Option<f64>,
    /// Wall-clock (or simulated) seconds spent evaluating the trial.
    pub wall_seconds: f64,
    /// Completion time in seconds since the start of the run.
    pub timestamp: f64,
    /// Identifier of the worker that ran the trial.
    pub worker: usize,
}

pub(crate) mod score_serde {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(D::Error::custom(format!("unknown score sentinel {other:?}"))),
            },
        }
    }
}

/// Serialize trial records as line-delimited JSON, one record per line.
pub fn records_to_jsonl(records: &[TrialRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("trial record serializes"));
        out.push('\n');
    }
    out
}

/// Parse line-delimited JSON back into trial records. Blank lines are
/// ignored so a trailing newline or manual edits do not break parsing.
pub fn records_from_jsonl(text: &str) -> Result<Vec<TrialRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::ParamValue;

    fn record(score: f64, timestamp: f64) -> TrialRecord {
        let mut config = HyperparamConfig::default();
        config.set("alpha", ParamValue::Real(0.5));
        config.set("kind", ParamValue::Cat("a".into()));
        TrialRecord {
            config,
            score,
            sigma_star: Some(0.3),
            wall_seconds: 1.5,
            timestamp,
            worker: 2,
        }
    }

    #[test]
    fn jsonl_round_trip_preserves_records_and_order() {
        let records = vec![record(0.25, 1.0), record(0.125, 2.0), record(0.5, 3.0)];
        let text = records_to_jsonl(&records);
        assert_eq!(text.lines().count(), 3);
        let back = records_from_jsonl(&text).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn infinite_scores_survive_serialization() {
        let mut failed = record(f64::INFINITY, 4.0);
        failed.sigma_star = None;
        let text = records_to_jsonl(&[failed.clone()]);
        assert!(text.contains("\"inf\""));
        let back = records_from_jsonl(&text).unwrap();
        assert_eq!(back.len(), 1);
        assert!(back[0].score.is_infinite() && back[0].score > 0.0);
        assert_eq!(back[0].config, failed.config);
        assert_eq!(back[0].sigma_star, None);
    }

    #[test]
    fn blank_lines_are_ignored() {
        let text = format!("\n{}\n\n", records_to_jsonl(&[record(0.1, 1.0)]));
        let back = records_from_jsonl(&text).unwrap();
        assert_eq!(back.len(), 1);
    }

    #[test]
    fn unknown_sentinel_is_rejected() {
        let line = r#"{"config":{},"score":"huge","sigma_star":null,"wall_seconds":0.0,"timestamp":0.0,"worker":0}"#;
        assert!(records_from_jsonl(line).is_err());
    }
}
