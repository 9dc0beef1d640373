//! Dataset loading, chronological splitting, normalization, calendar
//! features, and supervised window construction for day-ahead forecasting.
//!
//! The on-disk format is a CSV with an ISO-8601 timestamp column, one target
//! column, and any number of exogenous columns. Timestamps must be strictly
//! increasing on a constant step. Splits are contiguous
//! train / validation / test ranges; normalization statistics always come
//! from the training range only.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error in `{path}`: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: cannot parse `{value}` in column `{col}`")]
    UnparsableValue {
        row: usize,
        col: String,
        value: String,
    },
    #[error("row {row}: timestamps must be strictly increasing")]
    NonMonotonicTimestamps { row: usize },
    #[error("row {row}: timestamp spacing differs from the first step")]
    IrregularSpacing { row: usize },
    #[error("dataset is empty or has fewer than two rows")]
    TooShort,
    #[error("invalid split bounds ({0}, {1}): need 0 < cut1 < cut2 < len - 1")]
    InvalidBounds(usize, usize),
    #[error("column `{0}` has zero variance on the training range")]
    ZeroVariance(String),
    #[error("dataset too short for history {history} + horizon {horizon} windows")]
    DatasetTooShort { history: usize, horizon: usize },
    #[error("dataset has no split; split it before this operation")]
    MissingSplit,
}

/// Names of the timestamp/target/exogenous columns in a dataset CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub timestamp: String,
    pub target: String,
    /// `None` means: every remaining column is exogenous, in file order.
    pub exogenous: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            timestamp: "timestamp".into(),
            target: "target".into(),
            exogenous: None,
        }
    }
}

/// Inclusive end indices of the train and validation ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBounds {
    pub train_end: usize,
    pub val_end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// A regular univariate series with exogenous channels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeSeriesDataset<S> {
    pub timestamps: Vec<NaiveDateTime>,
    pub target: Vec<S>,
    pub exo_names: Vec<String>,
    /// One vector per exogenous column, aligned with `timestamps`.
    pub exogenous: Vec<Vec<S>>,
    pub split: Option<SplitBounds>,
}

impl<S: Scalar> TimeSeriesDataset<S> {
    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    /// Row range of a split; requires the dataset to be split.
    pub fn split_range(&self, split: Split) -> Result<std::ops::Range<usize>, DataError> {
        let b = self.split.ok_or(DataError::MissingSplit)?;
        Ok(match split {
            Split::Train => 0..b.train_end + 1,
            Split::Val => b.train_end + 1..b.val_end + 1,
            Split::Test => b.val_end + 1..self.len(),
        })
    }

    fn split_of_range(&self, first: usize, last: usize) -> Option<Split> {
        let b = self.split?;
        let contains = |lo: usize, hi: usize| first >= lo && last <= hi;
        if contains(0, b.train_end) {
            Some(Split::Train)
        } else if contains(b.train_end + 1, b.val_end) {
            Some(Split::Val)
        } else if contains(b.val_end + 1, self.len() - 1) {
            Some(Split::Test)
        } else {
            None
        }
    }
}

/// Load a dataset CSV, validating column presence, value parseability, and
/// the strictly-increasing constant-step timestamp grid.
pub fn load_csv<S: Scalar>(
    path: impl AsRef<Path>,
    schema: &CsvSchema,
) -> Result<TimeSeriesDataset<S>, DataError> {
    let path_str = path.as_ref().display().to_string();
    let mut reader = csv::Reader::from_path(path.as_ref()).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => {
            if let csv::ErrorKind::Io(io) = e.into_kind() {
                DataError::Io {
                    path: path_str.clone(),
                    source: io,
                }
            } else {
                unreachable!()
            }
        }
        _ => DataError::Csv {
            path: path_str.clone(),
            source: e,
        },
    })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| DataError::Csv {
            path: path_str.clone(),
            source: e,
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let col_index = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let ts_idx = col_index(&schema.timestamp)?;
    let target_idx = col_index(&schema.target)?;
    let exo_names: Vec<String> = match &schema.exogenous {
        Some(names) => {
            for n in names {
                col_index(n)?;
            }
            names.clone()
        }
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != ts_idx && *i != target_idx)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    let exo_idx: Vec<usize> = exo_names
        .iter()
        .map(|n| col_index(n))
        .collect::<Result<_, _>>()?;

    let mut timestamps = Vec::new();
    let mut target = Vec::new();
    let mut exogenous: Vec<Vec<S>> = vec![Vec::new(); exo_idx.len()];

    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::Csv {
            path: path_str.clone(),
            source: e,
        })?;
        let raw_ts = record.get(ts_idx).unwrap_or("").trim();
        let ts = NaiveDateTime::parse_from_str(raw_ts, "%Y-%m-%dT%H:%M:%S").map_err(|_| {
            DataError::UnparsableValue {
                row: row_no,
                col: schema.timestamp.clone(),
                value: raw_ts.to_string(),
            }
        })?;
        timestamps.push(ts);

        let parse_value = |idx: usize, col: &str| -> Result<S, DataError> {
            let raw = record.get(idx).unwrap_or("").trim();
            let v: f64 = raw.parse().map_err(|_| DataError::UnparsableValue {
                row: row_no,
                col: col.to_string(),
                value: raw.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DataError::UnparsableValue {
                    row: row_no,
                    col: col.to_string(),
                    value: raw.to_string(),
                });
            }
            Ok(S::cast_from(v))
        };
        target.push(parse_value(target_idx, &schema.target)?);
        for (slot, (idx, name)) in exogenous.iter_mut().zip(exo_idx.iter().zip(&exo_names)) {
            slot.push(parse_value(*idx, name)?);
        }
    }

    if timestamps.len() < 2 {
        return Err(DataError::TooShort);
    }
    let step = timestamps[1] - timestamps[0];
    for (i, pair) in timestamps.windows(2).enumerate() {
        let d = pair[1] - pair[0];
        if d <= chrono::Duration::zero() {
            return Err(DataError::NonMonotonicTimestamps { row: i + 1 });
        }
        if d != step {
            return Err(DataError::IrregularSpacing { row: i + 1 });
        }
    }

    Ok(TimeSeriesDataset {
        timestamps,
        target,
        exo_names,
        exogenous,
        split: None,
    })
}

/// Attach contiguous train/val/test ranges: `[0, cut1]`, `(cut1, cut2]`,
/// `(cut2, len - 1]`. All three ranges must be non-empty.
pub fn split_dataset<S: Scalar>(
    mut ds: TimeSeriesDataset<S>,
    cut1: usize,
    cut2: usize,
) -> Result<TimeSeriesDataset<S>, DataError> {
    if !(cut1 > 0 && cut1 < cut2 && cut2 < ds.len().saturating_sub(1)) {
        return Err(DataError::InvalidBounds(cut1, cut2));
    }
    ds.split = Some(SplitBounds {
        train_end: cut1,
        val_end: cut2,
    });
    Ok(ds)
}

/// Per-column z-score statistics fitted on the training range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Normalizer<S> {
    pub columns: Vec<ColumnStats<S>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnStats<S> {
    pub name: String,
    pub mean: S,
    /// Population standard deviation over the training range.
    pub std: S,
}

fn population_stats<S: Scalar>(values: &[S]) -> (S, S) {
    let n = S::cast_from(values.len() as f64);
    let mean = values.iter().copied().sum::<S>() / n;
    let var = values
        .iter()
        .map(|v| (*v - mean) * (*v - mean))
        .sum::<S>()
        / n;
    (mean, var.sqrt())
}

/// Fit z-score statistics for the target and every exogenous column on the
/// training range (the whole series when the dataset is unsplit).
pub fn fit_normalizer<S: Scalar>(ds: &TimeSeriesDataset<S>) -> Result<Normalizer<S>, DataError> {
    let range = match ds.split {
        Some(b) => 0..b.train_end + 1,
        None => 0..ds.len(),
    };
    if range.is_empty() {
        return Err(DataError::TooShort);
    }
    let mut columns = Vec::with_capacity(1 + ds.exo_names.len());
    let (mean, std) = population_stats(&ds.target[range.clone()]);
    if std == S::zero() {
        return Err(DataError::ZeroVariance("target".into()));
    }
    columns.push(ColumnStats {
        name: "target".into(),
        mean,
        std,
    });
    for (name, col) in ds.exo_names.iter().zip(&ds.exogenous) {
        let (mean, std) = population_stats(&col[range.clone()]);
        if std == S::zero() {
            return Err(DataError::ZeroVariance(name.clone()));
        }
        columns.push(ColumnStats {
            name: name.clone(),
            mean,
            std,
        });
    }
    Ok(Normalizer { columns })
}

impl<S: Scalar> Normalizer<S> {
    fn stats(&self, name: &str) -> Option<&ColumnStats<S>> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Z-score every column of a dataset with the fitted statistics.
    pub fn apply(&self, ds: &TimeSeriesDataset<S>) -> TimeSeriesDataset<S> {
        let mut out = ds.clone();
        if let Some(st) = self.stats("target") {
            for v in &mut out.target {
                *v = (*v - st.mean) / st.std;
            }
        }
        for (name, col) in out.exo_names.clone().iter().zip(&mut out.exogenous) {
            if let Some(st) = self.stats(name) {
                for v in col.iter_mut() {
                    *v = (*v - st.mean) / st.std;
                }
            }
        }
        out
    }

    /// Invert the target transform.
    pub fn invert_target(&self, values: &[S]) -> Vec<S> {
        match self.stats("target") {
            Some(st) => values.iter().map(|v| *v * st.std + st.mean).collect(),
            None => values.to_vec(),
        }
    }

    /// Scale of the target transform (used to convert scores between raw and
    /// normalized units).
    pub fn target_std(&self) -> S {
        self.stats("target").map(|s| s.std).unwrap_or_else(S::one)
    }
}

/// Lagged copy of a series; entries before `lag` are unavailable.
pub fn lag_feature<S: Scalar>(series: &[S], lag: usize) -> Vec<Option<S>> {
    (0..series.len())
        .map(|k| k.checked_sub(lag).map(|j| series[j]))
        .collect()
}

/// Yearly and daily sine/cosine pairs: `sin/cos(2 pi month / 12)` and
/// `sin/cos(2 pi hour / 24)`.
pub fn seasonal_features<S: Scalar>(timestamps: &[NaiveDateTime]) -> [Vec<S>; 4] {
    let tau = std::f64::consts::TAU;
    let mut s12 = Vec::with_capacity(timestamps.len());
    let mut c12 = Vec::with_capacity(timestamps.len());
    let mut s24 = Vec::with_capacity(timestamps.len());
    let mut c24 = Vec::with_capacity(timestamps.len());
    for ts in timestamps {
        let m = ts.month() as f64;
        let h = ts.hour() as f64;
        s12.push(S::cast_from((tau * m / 12.0).sin()));
        c12.push(S::cast_from((tau * m / 12.0).cos()));
        s24.push(S::cast_from((tau * h / 24.0).sin()));
        c24.push(S::cast_from((tau * h / 24.0).cos()));
    }
    [s12, c12, s24, c24]
}

/// 1.0 on Monday-Friday dates not listed as holidays, else 0.0.
pub fn workday_feature<S: Scalar>(
    timestamps: &[NaiveDateTime],
    holidays: &BTreeSet<NaiveDate>,
) -> Vec<S> {
    timestamps
        .iter()
        .map(|ts| {
            let wd = ts.weekday().number_from_monday();
            let workday = wd <= 5 && !holidays.contains(&ts.date());
            if workday {
                S::one()
            } else {
                S::zero()
            }
        })
        .collect()
}

/// Which origin-time features to attach to each window.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSpec {
    /// Extra target lags beyond the history window.
    pub lags: Vec<usize>,
    pub seasonal: bool,
    pub workday: bool,
    pub holidays: Vec<NaiveDate>,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            lags: Vec::new(),
            seasonal: true,
            workday: true,
            holidays: Vec::new(),
        }
    }
}

/// One supervised sample anchored at origin `k`: the model sees the history
/// window `y[k - h1 ..= k]`, origin-time features, and the exogenous future
/// window, and predicts `y[k + 1 ..= k + h]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowSample<S> {
    pub origin: usize,
    pub origin_timestamp: NaiveDateTime,
    pub history: Vec<S>,
    pub features: Vec<S>,
    /// Exogenous future values, grouped per column: `[col][step]` flattened.
    pub exo_future: Vec<S>,
    /// Conditioning vector for the flow: seasonal (4) + workday (1) +
    /// exogenous future window. Fixed layout regardless of `FeatureSpec`.
    pub condition: Vec<S>,
    pub target: Vec<S>,
    pub split: Option<Split>,
}

/// Windows plus the shared geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupervisedWindowSet<S> {
    samples: Vec<WindowSample<S>>,
    horizon: usize,
    history_len: usize,
    feature_names: Vec<String>,
    n_exo: usize,
}

impl<S: Scalar> SupervisedWindowSet<S> {
    /// Assemble a window set directly; used by synthetic benchmarks and
    /// tests that need full control over the geometry.
    pub fn from_parts(
        samples: Vec<WindowSample<S>>,
        horizon: usize,
        history_len: usize,
        feature_names: Vec<String>,
        n_exo: usize,
    ) -> Self {
        SupervisedWindowSet {
            samples,
            horizon,
            history_len,
            feature_names,
            n_exo,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn history_len(&self) -> usize {
        self.history_len
    }

    pub fn n_exo(&self) -> usize {
        self.n_exo
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn samples(&self) -> &[WindowSample<S>] {
        &self.samples
    }

    /// Samples whose target window lies in the given split.
    pub fn subset(&self, split: Split) -> SupervisedWindowSet<S> {
        SupervisedWindowSet {
            samples: self
                .samples
                .iter()
                .filter(|s| s.split == Some(split))
                .cloned()
                .collect(),
            horizon: self.horizon,
            history_len: self.history_len,
            feature_names: self.feature_names.clone(),
            n_exo: self.n_exo,
        }
    }

    /// Width of the stacked model input `history + features + exo_future`.
    pub fn input_dim(&self) -> usize {
        self.history_len + 1 + self.feature_names.len() + self.n_exo * self.horizon
    }

    /// Stacked input row for one sample.
    pub fn input_row(&self, i: usize) -> Vec<S> {
        let s = &self.samples[i];
        let mut row = Vec::with_capacity(self.input_dim());
        row.extend_from_slice(&s.history);
        row.extend_from_slice(&s.features);
        row.extend_from_slice(&s.exo_future);
        row
    }

    /// Targets flattened row-major `samples x horizon`.
    pub fn target_matrix(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.len() * self.horizon);
        for s in &self.samples {
            out.extend_from_slice(&s.target);
        }
        out
    }

    pub fn origins(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.origin).collect()
    }

    pub fn origin_timestamps(&self) -> Vec<NaiveDateTime> {
        self.samples.iter().map(|s| s.origin_timestamp).collect()
    }

    /// Raw conditioning vectors, one per sample.
    pub fn conditions(&self) -> Vec<Vec<S>> {
        self.samples.iter().map(|s| s.condition.clone()).collect()
    }

    /// Dimension of the raw conditioning vector.
    pub fn condition_dim(&self) -> usize {
        5 + self.n_exo * self.horizon
    }
}

/// Build day-ahead windows: origins start at `max(h1, max lag)` and step by
/// `h`; a sample is kept only when its target window fits the series, every
/// requested lag is available, and (for split datasets) the target window
/// lies fully inside one split.
pub fn build_windows<S: Scalar>(
    ds: &TimeSeriesDataset<S>,
    h1: usize,
    h: usize,
    spec: &FeatureSpec,
) -> Result<SupervisedWindowSet<S>, DataError> {
    assert!(h >= 1, "horizon must be at least 1");
    if ds.len() < h1 + h + 1 {
        return Err(DataError::DatasetTooShort {
            history: h1,
            horizon: h,
        });
    }
    let max_lag = spec.lags.iter().copied().max().unwrap_or(0);
    let k0 = h1.max(max_lag);

    let seasonal = seasonal_features::<S>(&ds.timestamps);
    let holidays: BTreeSet<NaiveDate> = spec.holidays.iter().copied().collect();
    let workday = workday_feature::<S>(&ds.timestamps, &holidays);

    let mut feature_names = Vec::new();
    for lag in &spec.lags {
        feature_names.push(format!("lag_{lag}"));
    }
    if spec.seasonal {
        for n in ["s12", "c12", "s24", "c24"] {
            feature_names.push(n.to_string());
        }
    }
    if spec.workday {
        feature_names.push("workday".to_string());
    }

    let mut samples = Vec::new();
    let mut k = k0;
    while k + h <= ds.len() - 1 {
        let split = ds.split_of_range(k + 1, k + h);
        if ds.split.is_some() && split.is_none() {
            // Target window straddles a split boundary; skip it.
            k += h;
            continue;
        }
        let mut features = Vec::with_capacity(feature_names.len());
        for lag in &spec.lags {
            features.push(ds.target[k - lag]);
        }
        if spec.seasonal {
            for col in &seasonal {
                features.push(col[k]);
            }
        }
        if spec.workday {
            features.push(workday[k]);
        }

        let mut exo_future = Vec::with_capacity(ds.exo_names.len() * h);
        for col in &ds.exogenous {
            exo_future.extend_from_slice(&col[k + 1..k + h + 1]);
        }

        let mut condition = Vec::with_capacity(5 + exo_future.len());
        for col in &seasonal {
            condition.push(col[k]);
        }
        condition.push(workday[k]);
        condition.extend_from_slice(&exo_future);

        samples.push(WindowSample {
            origin: k,
            origin_timestamp: ds.timestamps[k],
            history: ds.target[k - h1..k + 1].to_vec(),
            features,
            exo_future,
            condition,
            target: ds.target[k + 1..k + h + 1].to_vec(),
            split,
        });
        k += h;
    }

    Ok(SupervisedWindowSet {
        samples,
        horizon: h,
        history_len: h1,
        feature_names,
        n_exo: ds.exo_names.len(),
    })
}
