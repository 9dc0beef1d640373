//! The two fitting commands: the default pipeline (one fit per method, width
//! search only) and the advanced pipeline (joint search with successive
//! halving), plus the shared data → flow → search → assessment plumbing and
//! artifact writers.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use autoquant_core::cinn::{init_cinn, train_cinn, CinnModel, TrainOptions};
use autoquant_core::data::{
    build_windows, load_csv, split_dataset, Split, SupervisedWindowSet,
};
use autoquant_core::forecast::QuantileForecast;
use autoquant_core::hpo::EaConfig;
use autoquant_core::metrics::{pi_coverage_width, postprocess_nonnegative, DatasetScore};
use autoquant_core::orchestrator::{
    autopq_default, evaluate_config, run_halving, Budget, CashOutcome, HalvingOptions,
    HalvingProgress, Interrupt, PipelineBackend, ResultStore,
};
use autoquant_core::resources::{ResourceLedger, DEFAULT_PHASE_CLASS};
use autoquant_core::synthetic::fractional_split;
use serde_json::json;

use crate::config::{RunConfig, RunMode};
use crate::errors::CliError;

/// File the trained flow is serialized into, next to `store.json`.
const FLOW_FILE: &str = "cinn.json";

/// Windows for the three chronological splits plus phase timing.
pub struct PreparedData {
    pub train: SupervisedWindowSet<f64>,
    pub val: SupervisedWindowSet<f64>,
    pub test: SupervisedWindowSet<f64>,
    pub data_seconds: f64,
}

/// Load, split, and window the configured dataset.
pub fn prepare_data(config: &RunConfig) -> Result<PreparedData, CliError> {
    let started = Instant::now();
    let ds = load_csv::<f64>(&config.dataset.path, &config.dataset.schema)?;
    let (cut1, cut2) = match &config.dataset.split {
        Some(s) => (s.train_end, s.val_end),
        None => {
            let bounds = fractional_split(ds.len());
            (bounds.train_end, bounds.val_end)
        }
    };
    let ds = split_dataset(ds, cut1, cut2)?;
    let windows = build_windows(
        &ds,
        config.geometry.history,
        config.geometry.horizon,
        &config.features,
    )?;
    let train = windows.subset(Split::Train);
    let val = windows.subset(Split::Val);
    let test = windows.subset(Split::Test);
    for (name, set) in [("training", &train), ("validation", &val), ("test", &test)] {
        if set.is_empty() {
            return Err(CliError::Data(format!(
                "the split leaves no {name} windows; widen the range or shrink history/horizon"
            )));
        }
    }
    Ok(PreparedData {
        train,
        val,
        test,
        data_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Initialize the flow and, unless `flow.epochs` is zero, train it on the
/// training windows. Returns the model and the wall seconds spent.
pub fn build_flow(
    config: &RunConfig,
    train: &SupervisedWindowSet<f64>,
) -> Result<(CinnModel<f64>, f64), CliError> {
    let started = Instant::now();
    let f = &config.flow;
    let model = init_cinn::<f64>(
        config.geometry.horizon,
        train.condition_dim(),
        f.condition_dim,
        f.blocks,
        f.hidden_width,
        f.alpha,
        config.seed,
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    let model = if f.epochs > 0 {
        let opts = TrainOptions {
            epochs: f.epochs,
            batch: f.batch,
            lr: f.learning_rate,
            seed: config.seed,
        };
        let (trained, _trace) =
            train_cinn(model, train, &opts).map_err(|e| CliError::Runtime(e.to_string()))?;
        trained
    } else {
        model
    };
    Ok((model, started.elapsed().as_secs_f64()))
}

/// Read the flow stored in a checkpoint directory.
pub fn load_flow(dir: &Path) -> Result<CinnModel<f64>, CliError> {
    let path = dir.join(FLOW_FILE);
    let text = fs::read_to_string(&path).map_err(|e| {
        CliError::Checkpoint(format!("cannot read {}: {e}", path.display()))
    })?;
    CinnModel::from_json(&text)
        .map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))
}

fn checkpoint_dir(config: &RunConfig) -> PathBuf {
    config.output_dir.join("checkpoint")
}

fn save_checkpoint(
    config: &RunConfig,
    store: &ResultStore,
    flow: &CinnModel<f64>,
) -> Result<PathBuf, CliError> {
    let dir = checkpoint_dir(config);
    store.save_dir(&dir)?;
    fs::write(dir.join(FLOW_FILE), flow.to_json())?;
    Ok(dir)
}

/// Everything measured on the way to the final artifacts.
struct Phases {
    data_seconds: f64,
    flow_seconds: f64,
    search_seconds: f64,
    assessment_seconds: f64,
}

/// Default pipeline: fixed default configurations, width search only.
pub fn cmd_fit_default(config_path: &Path, deterministic: bool) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    if config.mode != RunMode::Default {
        return Err(CliError::Config(format!(
            "config mode `{}` does not match fit-default",
            config.mode.as_str()
        )));
    }
    let ids = config.method_ids()?;
    let data = prepare_data(&config)?;
    let (flow, flow_seconds) = build_flow(&config, &data.train)?;
    let flow = Arc::new(flow);
    let backend = PipelineBackend::new(
        &ids,
        data.train.clone(),
        data.val.clone(),
        flow.clone(),
        config.sampling.m,
        config.sampling.levels.clone(),
    )?;

    let started = Instant::now();
    let (mut outcome, store) =
        autopq_default(&backend, config.budget.inner_evals, config.seed, config.workers)?;
    let search_seconds = started.elapsed().as_secs_f64();

    let phases = Phases {
        data_seconds: data.data_seconds,
        flow_seconds,
        search_seconds,
        assessment_seconds: 0.0,
    };
    finish_run(&config, &data, &flow, store, &mut outcome, phases, deterministic)
}

/// Advanced pipeline: joint search with successive halving, optionally
/// warm-started from a default run or resumed from an interruption.
pub fn cmd_fit_advanced(
    config_path: &Path,
    warm_start: Option<&Path>,
    resume: Option<&Path>,
    stop_after: Option<&str>,
    deterministic: bool,
) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    if config.mode == RunMode::Default {
        return Err(CliError::Config(
            "config mode `default` does not match fit-advanced; use mode `advanced` or `ablation`"
                .into(),
        ));
    }
    let budget = Budget::new(config.budget.total_seconds, config.budget.inner_evals)?;
    let interrupt = stop_after.map(parse_stop_after).transpose()?;
    let data = prepare_data(&config)?;

    // A continued run must score trials through the exact flow it started
    // with, so checkpoints take precedence over retraining.
    let (mut store, flow, flow_seconds) = match resume.or(warm_start) {
        Some(dir) => {
            let store = ResultStore::load_dir(dir)?;
            let flow = load_flow(dir)?;
            check_method_roster(&config, &store)?;
            (store, flow, 0.0)
        }
        None => {
            let (flow, secs) = build_flow(&config, &data.train)?;
            (
                ResultStore::new(
                    &pipeline_backend(&config, &data, &Arc::new(flow.clone()))?,
                    config.seed,
                    EaConfig::default(),
                    config.mode.joint_mode(),
                )?,
                flow,
                secs,
            )
        }
    };
    let flow = Arc::new(flow);
    let backend = pipeline_backend(&config, &data, &flow)?;
    let opts = HalvingOptions {
        workers: config.workers,
        time: config.time,
        use_prior: config.use_prior,
        total_budget_mode: config.total_budget_mode,
    };

    let started = Instant::now();
    let progress = run_halving(&backend, &mut store, &budget, &opts, interrupt)?;
    let search_seconds = started.elapsed().as_secs_f64();

    match progress {
        HalvingProgress::Interrupted => {
            let dir = save_checkpoint(&config, &store, &flow)?;
            println!("run interrupted mid-round; resume with --resume {}", dir.display());
            Ok(())
        }
        HalvingProgress::Finished(mut outcome) => {
            let phases = Phases {
                data_seconds: data.data_seconds,
                flow_seconds,
                search_seconds,
                assessment_seconds: 0.0,
            };
            finish_run(&config, &data, &flow, store, &mut outcome, phases, deterministic)
        }
    }
}

fn pipeline_backend(
    config: &RunConfig,
    data: &PreparedData,
    flow: &Arc<CinnModel<f64>>,
) -> Result<PipelineBackend, CliError> {
    Ok(PipelineBackend::new(
        &config.method_ids()?,
        data.train.clone(),
        data.val.clone(),
        flow.clone(),
        config.sampling.m,
        config.sampling.levels.clone(),
    )?)
}

/// `--stop-after R:M:C` — halt after C completions of active method M
/// (0-based) in round R, leaving a resumable checkpoint.
fn parse_stop_after(raw: &str) -> Result<Interrupt, CliError> {
    let parts: Vec<&str> = raw.split(':').collect();
    let parse = |s: &str, what: &str| {
        s.trim().parse::<usize>().map_err(|_| {
            CliError::Config(format!("--stop-after {what} must be an integer, got `{s}`"))
        })
    };
    match parts.as_slice() {
        [round, method, completions] => Ok(Interrupt {
            round: parse(round, "round")?,
            method_index: parse(method, "method index")?,
            completions: parse(completions, "completion count")?,
        }),
        _ => Err(CliError::Config(format!(
            "--stop-after expects ROUND:METHOD_INDEX:COMPLETIONS, got `{raw}`"
        ))),
    }
}

/// The checkpointed roster must match the manifest's, or scores would be
/// silently incomparable.
fn check_method_roster(config: &RunConfig, store: &ResultStore) -> Result<(), CliError> {
    let mut configured: Vec<&str> = config.methods.iter().map(String::as_str).collect();
    let mut stored: Vec<&str> = store.methods.iter().map(|m| m.name.as_str()).collect();
    configured.sort_unstable();
    stored.sort_unstable();
    if configured != stored {
        return Err(CliError::Config(format!(
            "config methods {configured:?} do not match the checkpoint's {stored:?}"
        )));
    }
    Ok(())
}

/// Test-set assessment and artifact emission shared by both fit commands.
fn finish_run(
    config: &RunConfig,
    data: &PreparedData,
    flow: &CinnModel<f64>,
    store: ResultStore,
    outcome: &mut CashOutcome,
    mut phases: Phases,
    deterministic: bool,
) -> Result<(), CliError> {
    let started = Instant::now();
    let (qf, test_score) = assess_on_test(config, data, flow, outcome)?;
    phases.assessment_seconds = started.elapsed().as_secs_f64();
    outcome.test_score = Some(test_score.value);

    fs::create_dir_all(&config.output_dir)?;
    let checkpoint = save_checkpoint(config, &store, flow)?;
    let quantiles_path = config.output_dir.join("quantiles.csv");
    write_quantiles_csv(&quantiles_path, &qf)?;
    let metrics_path = config.output_dir.join("metrics.json");
    let test_truths = data.test.target_matrix();
    write_metrics_json(
        &metrics_path,
        config,
        &store,
        outcome,
        coverage_block(&qf, &test_truths),
        &test_score,
        deterministic,
    )?;
    let resources_path = config.output_dir.join("resources.json");
    write_resources_json(&resources_path, config, &phases)?;
    fs::write(
        config.output_dir.join("resolved_config.json"),
        serde_json::to_string_pretty(config)? + "\n",
    )?;

    println!(
        "winner: {} (validation CRPS {:.6}, test CRPS {:.6})",
        outcome.winner, outcome.validation_score, test_score.value
    );
    println!(
        "artifacts: {} {} {} {}",
        checkpoint.display(),
        quantiles_path.display(),
        metrics_path.display(),
        resources_path.display()
    );
    Ok(())
}

/// Refit the winner on the training windows and score it on the test split.
fn assess_on_test(
    config: &RunConfig,
    data: &PreparedData,
    flow: &CinnModel<f64>,
    outcome: &CashOutcome,
) -> Result<(QuantileForecast<f64>, DatasetScore), CliError> {
    let (qf, score) = evaluate_config(
        &outcome.winner,
        &outcome.config,
        outcome.sigma,
        &data.train,
        &data.test,
        flow,
        config.sampling.m,
        &config.sampling.levels,
        config.seed,
    )?;
    if config.nonnegative {
        let qf = postprocess_nonnegative(qf);
        let score = autoquant_core::metrics::crps_dataset(&qf, &data.test.target_matrix())
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        return Ok((qf, score));
    }
    Ok((qf, score))
}

/// Long-format quantile rows: one line per (origin, step, level).
pub fn write_quantiles_csv(path: &Path, qf: &QuantileForecast<f64>) -> Result<(), CliError> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "origin_timestamp,h,level,value")?;
    let timestamps = qf.origin_timestamps();
    for o in 0..qf.n_origins() {
        let ts = timestamps[o].format("%Y-%m-%dT%H:%M:%S");
        for h in 0..qf.horizon() {
            for (l, level) in qf.levels().iter().enumerate() {
                writeln!(out, "{ts},{},{level},{}", h + 1, qf.value(o, h, l))?;
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn write_metrics_json(
    path: &Path,
    config: &RunConfig,
    store: &ResultStore,
    outcome: &CashOutcome,
    coverage: Option<serde_json::Value>,
    test_score: &DatasetScore,
    deterministic: bool,
) -> Result<(), CliError> {
    let methods: Vec<serde_json::Value> = store
        .methods
        .iter()
        .map(|entry| {
            json!({
                "name": entry.name,
                "active": entry.active,
                "best_validation": entry.best.as_ref().map(|b| b.score),
                "best_sigma": entry.best.as_ref().and_then(|b| b.sigma_star),
                "trials": entry.run.ea.records().len(),
                "consumed_seconds": entry.run.consumed_seconds,
            })
        })
        .collect();

    let mut doc = json!({
        "mode": config.mode.as_str(),
        "time": config.time,
        "seed": store.seed,
        "winner": {
            "method": outcome.winner,
            "config": outcome.config,
            "sigma": outcome.sigma,
        },
        "validation_crps": outcome.validation_score,
        "test": {
            "crps": test_score.value,
            "n": test_score.n,
            "coverage_10_90": coverage,
        },
        "methods": methods,
        "rounds": outcome.rounds.len(),
    });
    if !deterministic {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        doc["generated_at_unix"] = json!(now);
    }
    fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}

fn write_resources_json(
    path: &Path,
    config: &RunConfig,
    phases: &Phases,
) -> Result<(), CliError> {
    let mut ledger = ResourceLedger::new();
    ledger.set_power(DEFAULT_PHASE_CLASS, config.resources.cpu_watts);
    if let Some(price) = &config.resources.price {
        ledger.set_price(price.clone());
    }
    let entries = [
        ("data", phases.data_seconds),
        ("flow_training", phases.flow_seconds),
        ("search", phases.search_seconds),
        ("assessment", phases.assessment_seconds),
    ];
    for (name, seconds) in entries {
        ledger
            .record_phase(name, seconds)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let report = ledger.report().map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(path, serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(())
}

/// Coverage of the central 10–90 band on the test split, when both levels
/// are part of the emitted grid.
pub fn coverage_block(
    qf: &QuantileForecast<f64>,
    truths: &[f64],
) -> Option<serde_json::Value> {
    if qf.level_index(0.1).is_none() || qf.level_index(0.9).is_none() {
        return None;
    }
    let cw = pi_coverage_width(qf, truths, 0.1, 0.9).ok()?;
    Some(json!({
        "lo": 0.1,
        "hi": 0.9,
        "coverage": cw.coverage,
        "mean_width": cw.mean_width,
        "n": cw.n,
    }))
}
