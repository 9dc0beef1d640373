//! Plot-ready exports from a checkpoint: per-trial convergence traces,
//! per-round pruning decisions, and a derived search-cost ledger. Data only —
//! rendering is left to whatever draws the figures.

use std::fs;
use std::path::{Path, PathBuf};

use autoquant_core::hpo::TrialRecord;
use autoquant_core::orchestrator::ResultStore;
use autoquant_core::resources::{ResourceLedger, DEFAULT_PHASE_CLASS};

use crate::errors::CliError;

/// Write the report bundle into `<dir>/report/` and return its path.
pub fn write_report(dir: &Path) -> Result<PathBuf, CliError> {
    let store = ResultStore::load_dir(dir)?;
    let report_dir = dir.join("report");
    fs::create_dir_all(&report_dir)?;
    write_convergence_csv(&report_dir.join("convergence.csv"), &store)?;
    write_pruning_csv(&report_dir.join("pruning.csv"), &store)?;
    write_resources_json(&report_dir.join("resources.json"), &store)?;
    Ok(report_dir)
}

pub fn cmd_report(dir: &Path) -> Result<(), CliError> {
    let report_dir = write_report(dir)?;
    println!(
        "report written: {} {} {}",
        report_dir.join("convergence.csv").display(),
        report_dir.join("pruning.csv").display(),
        report_dir.join("resources.json").display()
    );
    Ok(())
}

/// One row per completed trial: the validation score and the method's
/// cumulative spend at that point, in completion order.
fn write_convergence_csv(path: &Path, store: &ResultStore) -> Result<(), CliError> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "method,trial,timestamp,cumulative_seconds,score,best_so_far")?;
    for entry in &store.methods {
        let mut records: Vec<&TrialRecord> = entry.run.ea.records().iter().collect();
        records.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        let mut cumulative = 0.0;
        let mut best = f64::INFINITY;
        for (i, record) in records.iter().enumerate() {
            cumulative += record.wall_seconds;
            if record.score < best {
                best = record.score;
            }
            writeln!(
                out,
                "{},{},{},{},{},{}",
                entry.name,
                i + 1,
                record.timestamp,
                cumulative,
                record.score,
                best
            )?;
        }
    }
    Ok(())
}

/// One row per pruning round: who was in, how they scored, who survived.
fn write_pruning_csv(path: &Path, store: &ResultStore) -> Result<(), CliError> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "round,budget_per_method,active,bests,kept")?;
    for round in &store.rounds {
        let bests: Vec<String> = round
            .bests
            .iter()
            .map(|b| format!("{}={}", b.method, b.score))
            .collect();
        writeln!(
            out,
            "{},{},{},{},{}",
            round.round,
            round.budget_per_method,
            round.active.join(";"),
            bests.join(";"),
            round.kept.join(";")
        )?;
    }
    Ok(())
}

/// Search spend per method, derived from the trial records themselves so the
/// report stands alone on any checkpoint.
fn write_resources_json(path: &Path, store: &ResultStore) -> Result<(), CliError> {
    let mut ledger = ResourceLedger::new();
    for entry in &store.methods {
        ledger
            .record_phase_class(
                &format!("search:{}", entry.name),
                DEFAULT_PHASE_CLASS,
                entry.run.consumed_seconds,
            )
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let report = ledger.report().map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(path, serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(())
}
