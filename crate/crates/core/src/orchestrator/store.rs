//! Persistent result store for model-selection runs.
//!
//! The store is the single source of truth for a run: per-method
//! optimization state (including every completed trial), the pruning
//! history, and — while a round is interrupted — the exact point to resume
//! from. It round-trips through a checkpoint directory:
//!
//! ```text
//! <dir>/store.json          # the full store
//! <dir>/trials/<method>.jsonl   # trial log export, one record per line
//! <dir>/models/<method>-<hash>.json  # best-model card per method
//! ```
//!
//! `store.json` alone is sufficient to resume; the trial logs and model
//! cards are convenience exports for analysis tools. A model card carries
//! the winning configuration, sampling width, and seed rather than fitted
//! weights — every point model here retrains deterministically from those
//! three ingredients in seconds.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::backend::TrialBackend;
use super::joint::{JointMode, MethodRun};
use super::OrchestratorError;
use crate::hpo::{records_to_jsonl, EaConfig, TrialRecord};
use crate::space::HyperparamConfig;

/// Version written into every checkpoint; bumped on breaking layout changes.
pub const STORE_VERSION: u32 = 1;

/// One method's slot in the store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEntry {
    pub name: String,
    /// Pruned methods stay in the store (inactive) with their full state.
    pub active: bool,
    pub run: MethodRun,
    /// Champion trial, kept in sync after every optimization slice.
    pub best: Option<TrialRecord>,
}

/// Bookkeeping for a pruning round that was interrupted part-way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundProgress {
    pub round: usize,
    /// Budget each active method receives this round, fixed at round start.
    pub budget_per_method: f64,
    /// Methods whose slice of this round already completed.
    pub done_methods: Vec<String>,
}

/// Checkpointable state of a whole selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultStore {
    pub version: u32,
    pub seed: u64,
    /// Registration order; pruning only flips `active` flags.
    pub methods: Vec<MethodEntry>,
    pub rounds: Vec<super::PruningRound>,
    pub round_in_progress: Option<RoundProgress>,
}

/// Best-model card exported next to the store; enough to refit the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCard {
    pub method: String,
    pub config: HyperparamConfig,
    pub sigma_star: Option<f64>,
    pub score: f64,
    pub seed: u64,
}

impl ResultStore {
    /// Fresh store over the backend's registered methods.
    pub fn new(
        backend: &dyn TrialBackend,
        seed: u64,
        ea: EaConfig,
        mode: JointMode,
    ) -> Result<Self, OrchestratorError> {
        let names = backend.methods();
        if names.is_empty() {
            return Err(OrchestratorError::EmptyMethods);
        }
        let mut methods = Vec::with_capacity(names.len());
        for name in names {
            let space = backend.space(&name)?;
            let run = match mode {
                JointMode::Nested => MethodRun::new(&name, space, ea, seed)?,
                JointMode::JointSigma => MethodRun::new_ablation(&name, space, ea, seed)?,
            };
            methods.push(MethodEntry { name, active: true, run, best: None });
        }
        Ok(ResultStore {
            version: STORE_VERSION,
            seed,
            methods,
            rounds: Vec::new(),
            round_in_progress: None,
        })
    }

    pub fn entry(&self, method: &str) -> Result<&MethodEntry, OrchestratorError> {
        self.methods
            .iter()
            .find(|e| e.name == method)
            .ok_or_else(|| OrchestratorError::UnknownMethod(method.to_string()))
    }

    pub fn active_names(&self) -> Vec<String> {
        self.methods
            .iter()
            .filter(|e| e.active)
            .map(|e| e.name.clone())
            .collect()
    }

    /// Refresh a method's champion from its trial population.
    pub(crate) fn refresh_best(&mut self, index: usize) {
        let entry = &mut self.methods[index];
        entry.best = entry
            .run
            .ea
            .population_best(1)
            .ok()
            .map(|b| b[0].clone());
    }

    /// Champion consistency: every stored best must equal the minimum of its
    /// method's trial log.
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        for entry in &self.methods {
            let log_best = entry.run.ea.population_best(1).ok().map(|b| b[0].clone());
            if entry.best != log_best {
                return Err(OrchestratorError::Checkpoint(format!(
                    "stored best for {} disagrees with its trial log",
                    entry.name
                )));
            }
        }
        Ok(())
    }

    /// Write the checkpoint directory (`store.json`, trial logs, model cards).
    pub fn save_dir(&self, dir: &Path) -> Result<(), OrchestratorError> {
        fs::create_dir_all(dir.join("trials"))?;
        fs::create_dir_all(dir.join("models"))?;
        fs::write(
            dir.join("store.json"),
            serde_json::to_string_pretty(self).map_err(checkpoint_err)?,
        )?;
        for entry in &self.methods {
            fs::write(
                dir.join("trials").join(format!("{}.jsonl", entry.name)),
                records_to_jsonl(entry.run.ea.records()),
            )?;
            if let Some(best) = &entry.best {
                let card = ModelCard {
                    method: entry.name.clone(),
                    config: best.config.clone(),
                    sigma_star: best.sigma_star,
                    score: best.score,
                    seed: self.seed,
                };
                let body = serde_json::to_string_pretty(&card).map_err(checkpoint_err)?;
                let name = format!("{}-{}.json", entry.name, short_hash(&body));
                fs::write(dir.join("models").join(name), body)?;
            }
        }
        Ok(())
    }

    /// Load a checkpoint directory, rejecting other layout versions.
    pub fn load_dir(dir: &Path) -> Result<Self, OrchestratorError> {
        let path = dir.join("store.json");
        let text = fs::read_to_string(&path).map_err(|e| {
            OrchestratorError::Checkpoint(format!("cannot read {}: {e}", path.display()))
        })?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
            OrchestratorError::Checkpoint(format!("{} is not valid JSON: {e}", path.display()))
        })?;
        let found = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| {
                OrchestratorError::Checkpoint(format!(
                    "{} has no version field",
                    path.display()
                ))
            })?;
        if found != u64::from(STORE_VERSION) {
            return Err(OrchestratorError::CheckpointVersion {
                found: found.try_into().unwrap_or(u32::MAX),
                expected: STORE_VERSION,
            });
        }
        serde_json::from_value(value).map_err(|e| {
            OrchestratorError::Checkpoint(format!("malformed store.json: {e}"))
        })
    }
}

fn checkpoint_err(e: serde_json::Error) -> OrchestratorError {
    OrchestratorError::Checkpoint(e.to_string())
}

/// First 16 hex characters of the SHA-256 of `body`.
fn short_hash(body: &str) -> String {
    let digest = Sha256::digest(body.as_bytes());
    let mut hex = String::with_capacity(16);
    for byte in &digest[..8] {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hpo::EaConfig;
    use crate::orchestrator::backend::{unit_space, Landscape, LandscapeBackend};
    use crate::orchestrator::joint::{joint_optimize, RunOptions};
    use crate::orchestrator::Budget;

    fn two_method_backend() -> LandscapeBackend {
        let objective = |target: f64| {
            move |cfg: &HyperparamConfig, sigma: f64| {
                let x = cfg.get("x").and_then(|v| v.as_real()).unwrap();
                (x - target).powi(2) + (sigma.ln() - 0.5f64.ln()).powi(2)
            }
        };
        LandscapeBackend::new()
            .with_method("alpha", Landscape::new(unit_space(), objective(0.3)))
            .with_method("beta", Landscape::new(unit_space(), objective(0.7)))
    }

    fn optimized_store(seed: u64) -> ResultStore {
        let backend = two_method_backend();
        let mut store =
            ResultStore::new(&backend, seed, EaConfig::default(), JointMode::Nested).unwrap();
        let budget = Budget::new(8.0, 15).unwrap();
        for i in 0..store.methods.len() {
            joint_optimize(
                &backend,
                &mut store.methods[i].run,
                &budget,
                &RunOptions::simulated(seed),
            )
            .unwrap();
            store.refresh_best(i);
        }
        store
    }

    #[test]
    fn directory_round_trip_is_lossless() {
        let store = optimized_store(11);
        let dir = tempfile::tempdir().unwrap();
        store.save_dir(dir.path()).unwrap();
        let loaded = ResultStore::load_dir(dir.path()).unwrap();
        assert_eq!(
            serde_json::to_string(&store).unwrap(),
            serde_json::to_string(&loaded).unwrap()
        );
        loaded.validate().unwrap();
    }

    #[test]
    fn checkpoint_layout_matches_the_contract() {
        let store = optimized_store(3);
        let dir = tempfile::tempdir().unwrap();
        store.save_dir(dir.path()).unwrap();

        assert!(dir.path().join("store.json").is_file());
        for name in ["alpha", "beta"] {
            let log_path = dir.path().join("trials").join(format!("{name}.jsonl"));
            let log = fs::read_to_string(&log_path).unwrap();
            assert_eq!(log, records_to_jsonl(store.entry(name).unwrap().run.ea.records()));
        }
        let models: Vec<String> = fs::read_dir(dir.path().join("models"))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(models.len(), 2);
        for file in &models {
            let stem = file.strip_suffix(".json").unwrap();
            let (method, hash) = stem.rsplit_once('-').unwrap();
            assert!(["alpha", "beta"].contains(&method));
            assert_eq!(hash.len(), 16);
            assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
            let card: ModelCard =
                serde_json::from_str(&fs::read_to_string(dir.path().join("models").join(file)).unwrap())
                    .unwrap();
            assert_eq!(card.method, method);
            assert_eq!(card.seed, 3);
            let best = store.entry(method).unwrap().best.as_ref().unwrap();
            assert_eq!(card.score, best.score);
            assert_eq!(card.config, best.config);
        }
    }

    #[test]
    fn model_card_names_are_deterministic() {
        let store = optimized_store(5);
        let list = |dir: &Path| -> Vec<String> {
            let mut names: Vec<String> = fs::read_dir(dir.join("models"))
                .unwrap()
                .map(|e| e.unwrap().file_name().into_string().unwrap())
                .collect();
            names.sort();
            names
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        store.save_dir(a.path()).unwrap();
        store.save_dir(b.path()).unwrap();
        assert_eq!(list(a.path()), list(b.path()));
    }

    #[test]
    fn version_mismatch_is_rejected_with_both_versions() {
        let store = optimized_store(7);
        let dir = tempfile::tempdir().unwrap();
        store.save_dir(dir.path()).unwrap();
        let path = dir.path().join("store.json");
        let mut value: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        value["version"] = serde_json::json!(99);
        fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();
        match ResultStore::load_dir(dir.path()) {
            Err(OrchestratorError::CheckpointVersion { found: 99, expected: 1 }) => {}
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn missing_and_empty_checkpoints_are_checkpoint_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            ResultStore::load_dir(dir.path()),
            Err(OrchestratorError::Checkpoint(_))
        ));
        fs::write(dir.path().join("store.json"), "").unwrap();
        assert!(matches!(
            ResultStore::load_dir(dir.path()),
            Err(OrchestratorError::Checkpoint(_))
        ));
        fs::write(dir.path().join("store.json"), "{}").unwrap();
        assert!(matches!(
            ResultStore::load_dir(dir.path()),
            Err(OrchestratorError::Checkpoint(_))
        ));
    }

    #[test]
    fn validate_catches_a_stale_champion() {
        let mut store = optimized_store(9);
        store.validate().unwrap();
        if let Some(best) = &mut store.methods[0].best {
            best.score += 1.0;
        }
        assert!(matches!(
            store.validate(),
            Err(OrchestratorError::Checkpoint(_))
        ));
    }

    #[test]
    fn duplicate_or_empty_method_sets_are_rejected() {
        let backend = LandscapeBackend::new();
        assert!(matches!(
            ResultStore::new(&backend, 0, EaConfig::default(), JointMode::Nested),
            Err(OrchestratorError::EmptyMethods)
        ));
    }
}
