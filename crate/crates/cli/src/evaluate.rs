//! Standalone scoring: a long-format quantile CSV against cell-aligned
//! truths, emitting exactly the requested metrics as JSON.
//!
//! The forecast file carries one row per (origin, step, level); the truth
//! file one row per (origin, step). Both are validated into a dense grid
//! before any metric runs, so shape problems surface as data errors with the
//! offending cell named, not as skewed scores.

use std::collections::HashMap;
use std::path::Path;

use autoquant_core::forecast::QuantileForecast;
use autoquant_core::metrics::{crps_dataset, pi_coverage_width, pinball_dataset, MetricsError};
use chrono::NaiveDateTime;
use serde_json::json;

use crate::errors::CliError;

const TS_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricRequest {
    Crps,
    Pinball(f64),
    Coverage(f64, f64),
}

/// Parse a comma-separated request list: `crps`, `pinball@L`,
/// `coverage@LO:HI`.
pub fn parse_metrics(spec: &str) -> Result<Vec<(String, MetricRequest)>, CliError> {
    let mut out = Vec::new();
    for raw in spec.split(',') {
        let name = raw.trim();
        if name.is_empty() {
            continue;
        }
        let request = if name == "crps" {
            MetricRequest::Crps
        } else if let Some(level) = name.strip_prefix("pinball@") {
            MetricRequest::Pinball(parse_level(level, name)?)
        } else if let Some(pair) = name.strip_prefix("coverage@") {
            let (lo, hi) = pair.split_once(':').ok_or_else(|| {
                CliError::Config(format!("`{name}` must look like coverage@LO:HI"))
            })?;
            let (lo, hi) = (parse_level(lo, name)?, parse_level(hi, name)?);
            if lo >= hi {
                return Err(CliError::Config(format!(
                    "`{name}`: lower level must be below the upper level"
                )));
            }
            MetricRequest::Coverage(lo, hi)
        } else {
            return Err(CliError::Config(format!(
                "unknown metric `{name}`; expected crps, pinball@L, or coverage@LO:HI"
            )));
        };
        out.push((name.to_string(), request));
    }
    if out.is_empty() {
        return Err(CliError::Config("no metrics requested".into()));
    }
    Ok(out)
}

fn parse_level(raw: &str, context: &str) -> Result<f64, CliError> {
    let level: f64 = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("`{context}`: `{raw}` is not a number")))?;
    if !(0.0 < level && level < 1.0) {
        return Err(CliError::Config(format!(
            "`{context}`: level {level} must lie strictly inside (0, 1)"
        )));
    }
    Ok(level)
}

struct CsvTable {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<CsvTable, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record
            .map_err(|e| CliError::Data(format!("{} row {}: {e}", path.display(), i + 2)))?;
        rows.push(record.iter().map(|f| f.trim().to_string()).collect());
    }
    Ok(CsvTable { headers, rows })
}

fn column(table: &CsvTable, name: &str, path: &Path) -> Result<usize, CliError> {
    table.headers.iter().position(|h| h == name).ok_or_else(|| {
        CliError::Data(format!("{} is missing the `{name}` column", path.display()))
    })
}

fn parse_cell<T: std::str::FromStr>(
    raw: &str,
    what: &str,
    row: usize,
    path: &Path,
) -> Result<T, CliError> {
    raw.parse().map_err(|_| {
        CliError::Data(format!(
            "{} row {row}: cannot parse {what} from `{raw}`",
            path.display()
        ))
    })
}

/// Read a long-format quantile CSV into a dense forecast grid.
pub fn read_quantile_csv(path: &Path) -> Result<QuantileForecast<f64>, CliError> {
    let table = read_table(path)?;
    let (c_ts, c_h, c_level, c_value) = (
        column(&table, "origin_timestamp", path)?,
        column(&table, "h", path)?,
        column(&table, "level", path)?,
        column(&table, "value", path)?,
    );

    let mut origins: Vec<NaiveDateTime> = Vec::new();
    let mut origin_index: HashMap<NaiveDateTime, usize> = HashMap::new();
    let mut levels: Vec<f64> = Vec::new();
    let mut horizon = 0usize;
    let mut cells: HashMap<(usize, usize, u64), f64> = HashMap::new();

    for (i, row) in table.rows.iter().enumerate() {
        let line = i + 2;
        let ts = NaiveDateTime::parse_from_str(&row[c_ts], TS_FORMAT).map_err(|_| {
            CliError::Data(format!(
                "{} row {line}: cannot parse timestamp `{}`",
                path.display(),
                row[c_ts]
            ))
        })?;
        let h: usize = parse_cell(&row[c_h], "step h", line, path)?;
        let level: f64 = parse_cell(&row[c_level], "level", line, path)?;
        let value: f64 = parse_cell(&row[c_value], "value", line, path)?;
        if h == 0 {
            return Err(CliError::Data(format!(
                "{} row {line}: steps are 1-based, got h=0",
                path.display()
            )));
        }
        let o = *origin_index.entry(ts).or_insert_with(|| {
            origins.push(ts);
            origins.len() - 1
        });
        if !levels.contains(&level) {
            levels.push(level);
        }
        horizon = horizon.max(h);
        if cells.insert((o, h, level.to_bits()), value).is_some() {
            return Err(CliError::Data(format!(
                "{} row {line}: duplicate cell ({}, h={h}, level={level})",
                path.display(),
                row[c_ts]
            )));
        }
    }
    if origins.is_empty() {
        return Err(CliError::Data(format!("{} has no forecast rows", path.display())));
    }
    levels.sort_by(f64::total_cmp);

    let mut values = Vec::with_capacity(origins.len() * horizon * levels.len());
    for (o, ts) in origins.iter().enumerate() {
        for h in 1..=horizon {
            for level in &levels {
                match cells.get(&(o, h, level.to_bits())) {
                    Some(v) => values.push(*v),
                    None => {
                        return Err(CliError::Data(format!(
                            "{}: no value for origin {}, h={h}, level={level}",
                            path.display(),
                            ts.format(TS_FORMAT)
                        )))
                    }
                }
            }
        }
    }
    QuantileForecast::new(
        (0..origins.len()).collect(),
        origins,
        horizon,
        levels,
        values,
        None,
    )
    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Read truths aligned to a forecast grid, row-major `origins x horizon`.
pub fn read_truth_csv(path: &Path, qf: &QuantileForecast<f64>) -> Result<Vec<f64>, CliError> {
    let table = read_table(path)?;
    let (c_ts, c_h, c_value) = (
        column(&table, "origin_timestamp", path)?,
        column(&table, "h", path)?,
        column(&table, "value", path)?,
    );
    let origin_index: HashMap<NaiveDateTime, usize> = qf
        .origin_timestamps()
        .iter()
        .enumerate()
        .map(|(i, ts)| (*ts, i))
        .collect();

    let horizon = qf.horizon();
    let mut truths: Vec<Option<f64>> = vec![None; qf.n_origins() * horizon];
    for (i, row) in table.rows.iter().enumerate() {
        let line = i + 2;
        let ts = NaiveDateTime::parse_from_str(&row[c_ts], TS_FORMAT).map_err(|_| {
            CliError::Data(format!(
                "{} row {line}: cannot parse timestamp `{}`",
                path.display(),
                row[c_ts]
            ))
        })?;
        let h: usize = parse_cell(&row[c_h], "step h", line, path)?;
        let value: f64 = parse_cell(&row[c_value], "value", line, path)?;
        let o = *origin_index.get(&ts).ok_or_else(|| {
            CliError::Data(format!(
                "{} row {line}: truth origin {} has no matching forecast cell",
                path.display(),
                ts.format(TS_FORMAT)
            ))
        })?;
        if !(1..=horizon).contains(&h) {
            return Err(CliError::Data(format!(
                "{} row {line}: step h={h} outside the forecast horizon 1..={horizon}",
                path.display()
            )));
        }
        let slot = &mut truths[o * horizon + (h - 1)];
        if slot.is_some() {
            return Err(CliError::Data(format!(
                "{} row {line}: duplicate truth for origin {}, h={h}",
                path.display(),
                ts.format(TS_FORMAT)
            )));
        }
        *slot = Some(value);
    }
    truths
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            v.ok_or_else(|| {
                let (o, h) = (i / horizon, i % horizon + 1);
                CliError::Data(format!(
                    "{}: no truth for origin {}, h={h}",
                    path.display(),
                    qf.origin_timestamps()[o].format(TS_FORMAT)
                ))
            })
        })
        .collect()
}

fn metrics_to_data(e: MetricsError) -> CliError {
    CliError::Data(e.to_string())
}

/// Score `forecast` against `truth` and emit the requested metrics as a JSON
/// object (stdout, plus `output` when given).
pub fn cmd_evaluate(
    forecast: &Path,
    truth: &Path,
    metrics: &str,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let requests = parse_metrics(metrics)?;
    let qf = read_quantile_csv(forecast)?;
    let truths = read_truth_csv(truth, &qf)?;

    let mut doc = serde_json::Map::new();
    for (name, request) in requests {
        let value = match request {
            MetricRequest::Crps => {
                let s = crps_dataset(&qf, &truths).map_err(metrics_to_data)?;
                json!({"value": s.value, "n": s.n})
            }
            MetricRequest::Pinball(level) => {
                let s = pinball_dataset(&qf, &truths, level).map_err(metrics_to_data)?;
                json!({"value": s.value, "n": s.n})
            }
            MetricRequest::Coverage(lo, hi) => {
                let cw = pi_coverage_width(&qf, &truths, lo, hi).map_err(metrics_to_data)?;
                json!({"coverage": cw.coverage, "mean_width": cw.mean_width, "n": cw.n})
            }
        };
        doc.insert(name, value);
    }
    let text = serde_json::to_string_pretty(&serde_json::Value::Object(doc))? + "\n";
    print!("{text}");
    if let Some(path) = output {
        std::fs::write(path, text)?;
    }
    Ok(())
}
