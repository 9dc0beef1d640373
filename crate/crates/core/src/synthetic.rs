//! Synthetic benchmark series with exact conditional distributions.
//!
//! Each generator produces a regular hourly dataset plus an oracle handle
//! that knows the true conditional distribution of every forecast cell, so
//! pipelines can be scored against the best achievable CRPS. The oracle
//! value is estimated by Monte-Carlo draws from the true conditional (with a
//! batch standard error); a Gaussian closed form is available for
//! cross-checks.

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use thiserror::Error;

use crate::data::{split_dataset, SplitBounds, TimeSeriesDataset};
use crate::metrics::crps_from_samples;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("series of length {0} is too short for the requested windows")]
    TooShort(usize),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("split bounds do not fit the series: {0}")]
    BadSplit(String),
}

/// Generator family and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    /// AR(1) with a daily heteroscedastic noise profile:
    /// `y[t+1] = phi * y[t] + (base + amp * |sin(2 pi t / 24)|) * eps`,
    /// plus an exogenous `sin(2 pi t / 24)` channel.
    HeteroAr1 { phi: f64, base: f64, amp: f64 },
    /// Deterministic daily sinusoid plus a weekly exogenous driver with
    /// i.i.d. Gaussian noise:
    /// `y[t] = a * sin(2 pi t / 24) + b * e[t] + noise * eps`,
    /// `e[t] = cos(2 pi t / 168)`.
    SinusoidExo { a: f64, b: f64, noise: f64 },
    /// I.i.d. Gaussian observations.
    IidGaussian { mu: f64, sigma: f64 },
}

/// Full description of a synthetic benchmark series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub generator: GeneratorKind,
    pub length: usize,
    pub seed: u64,
    /// Day-ahead geometry used when deriving oracle forecast cells.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_horizon")]
    pub history: usize,
    /// Optional chronological split (inclusive train and validation ends).
    #[serde(default)]
    pub split: Option<(usize, usize)>,
}

fn default_horizon() -> usize {
    24
}

impl SyntheticSpec {
    pub fn hetero_ar1(length: usize, seed: u64) -> Self {
        SyntheticSpec {
            generator: GeneratorKind::HeteroAr1 {
                phi: 0.8,
                base: 0.2,
                amp: 0.3,
            },
            length,
            seed,
            horizon: 24,
            history: 24,
            split: None,
        }
    }

    pub fn iid_gaussian(length: usize, seed: u64, mu: f64, sigma: f64) -> Self {
        SyntheticSpec {
            generator: GeneratorKind::IidGaussian { mu, sigma },
            length,
            seed,
            horizon: 24,
            history: 24,
            split: None,
        }
    }

    pub fn sinusoid_exo(length: usize, seed: u64) -> Self {
        SyntheticSpec {
            generator: GeneratorKind::SinusoidExo {
                a: 2.0,
                b: 1.0,
                noise: 0.5,
            },
            length,
            seed,
            horizon: 24,
            history: 24,
            split: None,
        }
    }

    pub fn with_split(mut self, cut1: usize, cut2: usize) -> Self {
        self.split = Some((cut1, cut2));
        self
    }

    pub fn with_geometry(mut self, history: usize, horizon: usize) -> Self {
        self.history = history;
        self.horizon = horizon;
        self
    }
}

fn daily_noise_scale(base: f64, amp: f64, t: usize) -> f64 {
    base + amp * (std::f64::consts::TAU * t as f64 / 24.0).sin().abs()
}

/// Generate the series described by `spec` together with its oracle.
pub fn generate<S: Scalar>(
    spec: &SyntheticSpec,
) -> Result<(TimeSeriesDataset<S>, OracleHandle), SyntheticError> {
    if spec.length < spec.history + spec.horizon + 1 {
        return Err(SyntheticError::TooShort(spec.length));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let n = spec.length;
    let mut series = vec![0.0f64; n];
    let mut exo_names = Vec::new();
    let mut exogenous: Vec<Vec<f64>> = Vec::new();
    match &spec.generator {
        GeneratorKind::HeteroAr1 { phi, base, amp } => {
            if !(phi.abs() < 1.0) {
                return Err(SyntheticError::BadParameter(format!(
                    "phi {phi} must satisfy |phi| < 1"
                )));
            }
            if *base <= 0.0 || *amp < 0.0 {
                return Err(SyntheticError::BadParameter(
                    "noise profile must be positive".into(),
                ));
            }
            for t in 0..n - 1 {
                let eps: f64 = f64::std_normal(&mut rng);
                series[t + 1] = phi * series[t] + daily_noise_scale(*base, *amp, t) * eps;
            }
            exo_names.push("daily_phase".to_string());
            exogenous.push(
                (0..n)
                    .map(|t| (std::f64::consts::TAU * t as f64 / 24.0).sin())
                    .collect(),
            );
        }
        GeneratorKind::SinusoidExo { a, b, noise } => {
            if *noise <= 0.0 {
                return Err(SyntheticError::BadParameter("noise must be positive".into()));
            }
            let exo: Vec<f64> = (0..n)
                .map(|t| (std::f64::consts::TAU * t as f64 / 168.0).cos())
                .collect();
            for t in 0..n {
                let eps: f64 = f64::std_normal(&mut rng);
                series[t] = a * (std::f64::consts::TAU * t as f64 / 24.0).sin()
                    + b * exo[t]
                    + noise * eps;
            }
            exo_names.push("weekly_driver".to_string());
            exogenous.push(exo);
        }
        GeneratorKind::IidGaussian { mu, sigma } => {
            if *sigma <= 0.0 {
                return Err(SyntheticError::BadParameter("sigma must be positive".into()));
            }
            for y in series.iter_mut() {
                let eps: f64 = f64::std_normal(&mut rng);
                *y = mu + sigma * eps;
            }
        }
    }

    let start = NaiveDate::from_ymd_opt(2021, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    let mut ds = TimeSeriesDataset {
        timestamps: (0..n)
            .map(|i| start + chrono::Duration::hours(i as i64))
            .collect(),
        target: series.iter().map(|v| S::cast_from(*v)).collect(),
        exo_names,
        exogenous: exogenous
            .iter()
            .map(|col| col.iter().map(|v| S::cast_from(*v)).collect())
            .collect(),
        split: None,
    };
    if let Some((cut1, cut2)) = spec.split {
        ds = split_dataset(ds, cut1, cut2)
            .map_err(|e| SyntheticError::BadSplit(e.to_string()))?;
    }
    let handle = OracleHandle {
        spec: spec.clone(),
        series,
    };
    Ok((ds, handle))
}

/// Monte-Carlo oracle CRPS with its batch standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleCrps {
    pub value: f64,
    pub std_error: f64,
    pub cells: usize,
}

/// Exact knowledge of the generating process, bound to one realized series.
#[derive(Debug, Clone)]
pub struct OracleHandle {
    spec: SyntheticSpec,
    series: Vec<f64>,
}

impl OracleHandle {
    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    pub fn series(&self) -> &[f64] {
        &self.series
    }

    /// True conditional distribution (mean, std) of `y[origin + step]` given
    /// the realized series up to `origin`; `step` is 1-based.
    pub fn conditional(&self, origin: usize, step: usize) -> (f64, f64) {
        assert!(step >= 1, "horizon steps are 1-based");
        match &self.spec.generator {
            GeneratorKind::HeteroAr1 { phi, base, amp } => {
                let mean = phi.powi(step as i32) * self.series[origin];
                let mut var = 0.0;
                for j in 1..=step {
                    var = phi * phi * var
                        + daily_noise_scale(*base, *amp, origin + j - 1).powi(2);
                }
                (mean, var.sqrt())
            }
            GeneratorKind::SinusoidExo { a, b, noise } => {
                let t = (origin + step) as f64;
                let mean = a * (std::f64::consts::TAU * t / 24.0).sin()
                    + b * (std::f64::consts::TAU * t / 168.0).cos();
                (mean, *noise)
            }
            GeneratorKind::IidGaussian { mu, sigma } => (*mu, *sigma),
        }
    }

    /// Forecast origins for the day-ahead geometry in the spec, restricted to
    /// origins whose target window lies inside the given index range.
    pub fn origins_in(&self, range: std::ops::Range<usize>) -> Vec<usize> {
        let (h1, h) = (self.spec.history, self.spec.horizon);
        let n = self.series.len();
        let mut out = Vec::new();
        let mut k = h1;
        while k + h <= n - 1 {
            // target window [k+1, k+h] must lie inside [range.start, range.end)
            if k + 1 >= range.start && k + h < range.end {
                out.push(k);
            }
            k += h;
        }
        out
    }

    /// Monte-Carlo estimate of the mean CRPS an ideal forecaster (the true
    /// conditional distribution) achieves against the realized values over
    /// the given origins. `draws` samples per cell, 10 batches for the
    /// standard error.
    pub fn oracle_crps(&self, origins: &[usize], draws: usize, seed: u64) -> OracleCrps {
        assert!(!origins.is_empty(), "no forecast origins");
        assert!(draws >= 20, "too few draws for a batch standard error");
        let h = self.spec.horizon;
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x6f72_6163);
        let n_batches = 10;
        let per_batch = draws / n_batches;
        let mut batch_totals = vec![0.0f64; n_batches];
        let mut full_total = 0.0;
        let mut cells = 0usize;
        let mut samples = vec![0.0f64; per_batch * n_batches];
        for &k in origins {
            for step in 1..=h {
                let (mean, std) = self.conditional(k, step);
                let y = self.series[k + step];
                for s in samples.iter_mut() {
                    let eps: f64 = f64::std_normal(&mut rng);
                    *s = mean + std * eps;
                }
                full_total += crps_from_samples(&samples, y).expect("enough draws");
                for (b, chunk) in samples.chunks_exact(per_batch).enumerate() {
                    batch_totals[b] += crps_from_samples(chunk, y).expect("enough draws");
                }
                cells += 1;
            }
        }
        let value = full_total / cells as f64;
        let batch_means: Vec<f64> = batch_totals.iter().map(|t| t / cells as f64).collect();
        let bm = batch_means.iter().sum::<f64>() / n_batches as f64;
        let bvar = batch_means.iter().map(|v| (v - bm).powi(2)).sum::<f64>()
            / (n_batches as f64 - 1.0);
        OracleCrps {
            value,
            std_error: (bvar / n_batches as f64).sqrt(),
            cells,
        }
    }

    /// Closed-form CRPS of the true Gaussian conditional against the realized
    /// value of one cell: `sigma * (z (2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi))`.
    pub fn crps_closed_form_cell(&self, origin: usize, step: usize) -> f64 {
        let (mean, std) = self.conditional(origin, step);
        let y = self.series[origin + step];
        let normal = Normal::new(0.0, 1.0).unwrap();
        let z = (y - mean) / std;
        std * (z * (2.0 * normal.cdf(z) - 1.0) + 2.0 * normal.pdf(z)
            - 1.0 / std::f64::consts::PI.sqrt())
    }
}

/// Write a dataset in the load_csv format.
pub fn write_csv<S: Scalar>(
    ds: &TimeSeriesDataset<S>,
    path: impl AsRef<std::path::Path>,
) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "timestamp,target")?;
    for name in &ds.exo_names {
        write!(f, ",{name}")?;
    }
    writeln!(f)?;
    for i in 0..ds.len() {
        write!(
            f,
            "{},{}",
            ds.timestamps[i].format("%Y-%m-%dT%H:%M:%S"),
            ds.target[i]
        )?;
        for col in &ds.exogenous {
            write!(f, ",{}", col[i])?;
        }
        writeln!(f)?;
    }
    Ok(())
}

/// Convenience: split bounds at fixed fractions (60% / 20% / 20%).
pub fn fractional_split(length: usize) -> SplitBounds {
    SplitBounds {
        train_end: length * 6 / 10,
        val_end: length * 8 / 10,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_per_seed() {
        let spec = SyntheticSpec::hetero_ar1(200, 9);
        let (a, _) = generate::<f64>(&spec).unwrap();
        let (b, _) = generate::<f64>(&spec).unwrap();
        assert_eq!(a.target, b.target);
        let (c, _) = generate::<f64>(&SyntheticSpec::hetero_ar1(200, 10)).unwrap();
        assert_ne!(a.target, c.target);
    }

    #[test]
    fn ar1_conditional_matches_a_brute_force_recursion() {
        let spec = SyntheticSpec::hetero_ar1(300, 4);
        let (_, oracle) = generate::<f64>(&spec).unwrap();
        // One-step: mean = phi * y[k], std = s(k).
        let (m1, s1) = oracle.conditional(100, 1);
        assert!((m1 - 0.8 * oracle.series()[100]).abs() < 1e-12);
        assert!((s1 - daily_noise_scale(0.2, 0.3, 100)).abs() < 1e-12);
        // Two-step variance: phi^2 s(k)^2 + s(k+1)^2.
        let (_, s2) = oracle.conditional(100, 2);
        let expect = (0.64 * daily_noise_scale(0.2, 0.3, 100).powi(2)
            + daily_noise_scale(0.2, 0.3, 101).powi(2))
        .sqrt();
        assert!((s2 - expect).abs() < 1e-12);
    }

    #[test]
    fn iid_oracle_crps_matches_the_analytic_constant() {
        // For an ideal N(mu, sigma^2) forecaster scored against fresh draws
        // from the same distribution, the expected CRPS is sigma / sqrt(pi).
        let spec = SyntheticSpec::iid_gaussian(3000, 11, 0.0, 1.0);
        let (_, oracle) = generate::<f64>(&spec).unwrap();
        let origins = oracle.origins_in(24..3000);
        let est = oracle.oracle_crps(&origins, 2000, 1);
        let expect = 1.0 / std::f64::consts::PI.sqrt();
        assert!(
            (est.value - expect).abs() < 0.02,
            "estimate {} vs analytic {}",
            est.value,
            expect
        );
        assert!(est.std_error < 0.02 * est.value, "std error too large");
    }

    #[test]
    fn oracle_crps_scales_linearly_in_sigma() {
        let one = {
            let (_, o) = generate::<f64>(&SyntheticSpec::iid_gaussian(2000, 3, 0.0, 1.0)).unwrap();
            let origins = o.origins_in(24..2000);
            o.oracle_crps(&origins, 1000, 5).value
        };
        let two = {
            let (_, o) = generate::<f64>(&SyntheticSpec::iid_gaussian(2000, 3, 0.0, 2.0)).unwrap();
            let origins = o.origins_in(24..2000);
            o.oracle_crps(&origins, 1000, 5).value
        };
        assert!(
            (two - 2.0 * one).abs() < 0.05 * two,
            "sigma=2 oracle {two} vs doubled sigma=1 oracle {}",
            2.0 * one
        );
    }

    #[test]
    fn monte_carlo_oracle_agrees_with_the_gaussian_closed_form() {
        let spec = SyntheticSpec::hetero_ar1(600, 21);
        let (_, oracle) = generate::<f64>(&spec).unwrap();
        let origins = oracle.origins_in(24..600);
        let mc = oracle.oracle_crps(&origins, 10_000, 2);
        let mut cf = 0.0;
        let mut cells = 0;
        for &k in &origins {
            for step in 1..=24 {
                cf += oracle.crps_closed_form_cell(k, step);
                cells += 1;
            }
        }
        cf /= cells as f64;
        assert!(
            (mc.value - cf).abs() < 0.02 * cf,
            "MC {} vs closed form {}",
            mc.value,
            cf
        );
    }

    #[test]
    fn oracle_lower_bounds_a_miscalibrated_forecaster() {
        // Score deliberately overdispersed and shifted Gaussian forecasts on
        // the same cells: both must be worse than the oracle.
        let spec = SyntheticSpec::iid_gaussian(1500, 8, 1.0, 1.0);
        let (_, oracle) = generate::<f64>(&spec).unwrap();
        let origins = oracle.origins_in(24..1500);
        let ideal = oracle.oracle_crps(&origins, 4000, 3);

        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let mut score = |mean_shift: f64, scale: f64| {
            let mut total = 0.0;
            let mut cells = 0;
            let mut samples = vec![0.0f64; 400];
            for &k in &origins {
                for step in 1..=24 {
                    let (m, s) = oracle.conditional(k, step);
                    for v in samples.iter_mut() {
                        let eps: f64 = f64::std_normal(&mut rng);
                        *v = m + mean_shift + scale * s * eps;
                    }
                    total +=
                        crps_from_samples(&samples, oracle.series()[k + step]).unwrap();
                    cells += 1;
                }
            }
            total / cells as f64
        };
        assert!(score(0.8, 1.0) > ideal.value + 3.0 * ideal.std_error);
        assert!(score(0.0, 2.5) > ideal.value + 3.0 * ideal.std_error);
    }

    #[test]
    fn csv_round_trip_preserves_the_series() {
        let spec = SyntheticSpec::sinusoid_exo(120, 5);
        let (ds, _) = generate::<f64>(&spec).unwrap();
        let tmp = tempfile::NamedTempFile::new().unwrap();
        write_csv(&ds, tmp.path()).unwrap();
        let back: TimeSeriesDataset<f64> =
            crate::data::load_csv(tmp.path(), &crate::data::CsvSchema::default()).unwrap();
        assert_eq!(back.len(), ds.len());
        for (a, b) in back.target.iter().zip(&ds.target) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(back.exo_names, ds.exo_names);
    }
}
