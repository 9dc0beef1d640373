//! Scoring rules and statistical tests for probabilistic forecasts.
//!
//! CRPS is computed in closed form as the integral of the squared difference
//! between the empirical step CDF and the truth indicator. For quantile-only
//! input (no retained samples) it falls back to twice the mean pinball loss
//! over the level grid, which converges to CRPS as the grid densifies.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

use crate::forecast::QuantileForecast;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("need at least {need} support points, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("quantile level {0} outside (0, 1)")]
    BadLevel(f64),
    #[error("level {0} not present in the forecast")]
    LevelMissing(f64),
    #[error("empty input")]
    Empty,
}

/// CRPS of an empirical sample distribution against a scalar truth, by exact
/// integration of `(F(x) - 1{y <= x})^2` over the step CDF.
///
/// Requires at least two support points; the samples need not be sorted.
pub fn crps_from_samples<S: Scalar>(samples: &[S], y: S) -> Result<S, MetricsError> {
    if samples.len() < 2 {
        return Err(MetricsError::TooFewSamples {
            need: 2,
            got: samples.len(),
        });
    }
    let mut xs: Vec<S> = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    Ok(crps_sorted(&xs, y))
}

/// CRPS over samples already sorted ascending.
pub(crate) fn crps_sorted<S: Scalar>(xs: &[S], y: S) -> S {
    let m = xs.len();
    let mf = S::cast_from(m as f64);
    let one = S::one();
    let mut total = S::zero();
    // Below the support: F = 0, indicator 1 on [y, xs[0]).
    if y < xs[0] {
        total += xs[0] - y;
    }
    for i in 0..m - 1 {
        let (a, b) = (xs[i], xs[i + 1]);
        let f = S::cast_from((i + 1) as f64) / mf;
        if y <= a {
            total += (f - one) * (f - one) * (b - a);
        } else if y >= b {
            total += f * f * (b - a);
        } else {
            total += f * f * (y - a) + (f - one) * (f - one) * (b - y);
        }
    }
    // Above the support: F = 1, indicator 0 on (xs[m-1], y].
    if y > xs[m - 1] {
        total += y - xs[m - 1];
    }
    total
}

/// Pinball (quantile) loss of predicting quantile `q` at `level` when the
/// outcome is `y`.
pub fn pinball<S: Scalar>(q: S, level: f64, y: S) -> Result<S, MetricsError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricsError::BadLevel(level));
    }
    let tau = S::cast_from(level);
    Ok(if y >= q {
        tau * (y - q)
    } else {
        (S::one() - tau) * (q - y)
    })
}

/// CRPS approximation from a bare quantile grid: twice the mean pinball loss
/// across the levels.
pub fn crps_from_quantiles<S: Scalar>(
    levels: &[f64],
    values: &[S],
    y: S,
) -> Result<S, MetricsError> {
    if levels.is_empty() {
        return Err(MetricsError::Empty);
    }
    if levels.len() != values.len() {
        return Err(MetricsError::Shape(format!(
            "{} levels but {} values",
            levels.len(),
            values.len()
        )));
    }
    let mut acc = S::zero();
    for (l, q) in levels.iter().zip(values) {
        acc += pinball(*q, *l, y)?;
    }
    let two = S::cast_from(2.0);
    Ok(two * acc / S::cast_from(levels.len() as f64))
}

/// Aggregate score over a forecast grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetScore {
    pub value: f64,
    pub n: usize,
}

/// Mean CRPS of a quantile forecast against truths given row-major as
/// `origins x horizon`. Uses the retained samples when present, otherwise the
/// pinball-grid approximation.
pub fn crps_dataset<S: Scalar>(
    qf: &QuantileForecast<S>,
    y_true: &[S],
) -> Result<DatasetScore, MetricsError> {
    let cells = qf.n_origins() * qf.horizon();
    if cells == 0 {
        return Err(MetricsError::Empty);
    }
    if y_true.len() != cells {
        return Err(MetricsError::Shape(format!(
            "{} truths for {} forecast cells",
            y_true.len(),
            cells
        )));
    }
    let mut acc = 0.0;
    for o in 0..qf.n_origins() {
        for h in 0..qf.horizon() {
            let y = y_true[o * qf.horizon() + h];
            let v = match qf.cell_samples(o, h) {
                Some(xs) => crps_sorted(xs, y),
                None => crps_from_quantiles(qf.levels(), qf.cell(o, h), y)?,
            };
            acc += v.cast_into();
        }
    }
    Ok(DatasetScore {
        value: acc / cells as f64,
        n: cells,
    })
}

/// Mean pinball loss at one level over a forecast grid.
pub fn pinball_dataset<S: Scalar>(
    qf: &QuantileForecast<S>,
    y_true: &[S],
    level: f64,
) -> Result<DatasetScore, MetricsError> {
    let idx = qf
        .level_index(level)
        .ok_or(MetricsError::LevelMissing(level))?;
    let cells = qf.n_origins() * qf.horizon();
    if y_true.len() != cells {
        return Err(MetricsError::Shape(format!(
            "{} truths for {} forecast cells",
            y_true.len(),
            cells
        )));
    }
    let mut acc = 0.0;
    for o in 0..qf.n_origins() {
        for h in 0..qf.horizon() {
            let y = y_true[o * qf.horizon() + h];
            acc += pinball(qf.value(o, h, idx), level, y)?.cast_into();
        }
    }
    Ok(DatasetScore {
        value: acc / cells as f64,
        n: cells,
    })
}

/// Empirical coverage and mean width of the interval between two levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageWidth {
    /// Fraction of cells with `lo <= y <= hi`.
    pub coverage: f64,
    pub mean_width: f64,
    pub n: usize,
}

pub fn pi_coverage_width<S: Scalar>(
    qf: &QuantileForecast<S>,
    y_true: &[S],
    lo_level: f64,
    hi_level: f64,
) -> Result<CoverageWidth, MetricsError> {
    let lo = qf
        .level_index(lo_level)
        .ok_or(MetricsError::LevelMissing(lo_level))?;
    let hi = qf
        .level_index(hi_level)
        .ok_or(MetricsError::LevelMissing(hi_level))?;
    let cells = qf.n_origins() * qf.horizon();
    if cells == 0 {
        return Err(MetricsError::Empty);
    }
    if y_true.len() != cells {
        return Err(MetricsError::Shape(format!(
            "{} truths for {} forecast cells",
            y_true.len(),
            cells
        )));
    }
    let mut inside = 0usize;
    let mut width = 0.0;
    for o in 0..qf.n_origins() {
        for h in 0..qf.horizon() {
            let y = y_true[o * qf.horizon() + h];
            let (l, u) = (qf.value(o, h, lo), qf.value(o, h, hi));
            if y >= l && y <= u {
                inside += 1;
            }
            width += (u - l).cast_into();
        }
    }
    Ok(CoverageWidth {
        coverage: inside as f64 / cells as f64,
        mean_width: width / cells as f64,
        n: cells,
    })
}

/// Clamp a forecast's quantiles (and retained samples) at zero, for targets
/// that are physically non-negative. When the truth is non-negative this
/// never increases CRPS: moving mass from below zero onto zero only shrinks
/// the CDF mismatch on the negative axis.
pub fn postprocess_nonnegative<S: Scalar>(mut qf: QuantileForecast<S>) -> QuantileForecast<S> {
    qf.clamp_below(S::zero());
    qf
}

/// Result of a one-tailed paired t-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestOutcome {
    pub t: f64,
    pub df: f64,
    /// P-value for the alternative `mean(a - b) > 0`.
    pub p: f64,
}

/// One-tailed paired t-test of the alternative `mean(a - b) > 0`.
///
/// Degenerate all-equal differences have zero variance; by convention the
/// p-value is then 0.5 for zero mean difference, 0 for positive and 1 for
/// negative mean difference.
pub fn one_tailed_paired_ttest<S: Scalar>(a: &[S], b: &[S]) -> Result<TTestOutcome, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::Shape(format!(
            "paired inputs of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(MetricsError::TooFewSamples {
            need: 2,
            got: a.len(),
        });
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x.cast_into() - y.cast_into())
        .collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let df = n - 1.0;
    if var == 0.0 {
        let p = if mean > 0.0 {
            0.0
        } else if mean < 0.0 {
            1.0
        } else {
            0.5
        };
        return Ok(TTestOutcome {
            t: if mean == 0.0 {
                0.0
            } else {
                mean.signum() * f64::INFINITY
            },
            df,
            p,
        });
    }
    let t = mean / (var.sqrt() / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    Ok(TTestOutcome {
        t,
        df,
        p: 1.0 - dist.cdf(t),
    })
}

/// One-sample Kolmogorov-Smirnov statistic against the standard normal.
pub fn ks_statistic_standard_normal(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "KS of empty sample");
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in s.iter().enumerate() {
        let cdf = normal.cdf(*x);
        d = d.max((((i + 1) as f64) / n - cdf).abs());
        d = d.max((cdf - (i as f64) / n).abs());
    }
    d
}

/// Two-sided quantile of the standard normal (exposed for interval
/// construction elsewhere in the crate).
pub(crate) fn std_normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::quantile_of_sorted;
    use chrono::{Duration, NaiveDate};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent CRPS oracle: the energy form
    /// `E|X - y| - 0.5 E|X - X'|` over all ordered sample pairs.
    fn crps_energy(xs: &[f64], y: f64) -> f64 {
        let m = xs.len() as f64;
        let t1 = xs.iter().map(|x| (x - y).abs()).sum::<f64>() / m;
        let mut t2 = 0.0;
        for a in xs {
            for b in xs {
                t2 += (a - b).abs();
            }
        }
        t1 - 0.5 * t2 / (m * m)
    }

    /// Independent Student-t tail oracle: Simpson quadrature of the density.
    fn t_tail_quadrature(t: f64, df: f64) -> f64 {
        // Integrate the density from t to a far cutoff.
        let gamma_ratio = |df: f64| {
            // Gamma((df+1)/2) / (sqrt(df*pi) * Gamma(df/2)) via ln-gamma series.
            fn ln_gamma(x: f64) -> f64 {
                // Lanczos, g = 7.
                const C: [f64; 9] = [
                    0.999_999_999_999_809_93,
                    676.520_368_121_885_1,
                    -1_259.139_216_722_402_8,
                    771.323_428_777_653_13,
                    -176.615_029_162_140_6,
                    12.507_343_278_686_905,
                    -0.138_571_095_265_720_12,
                    9.984_369_578_019_572e-6,
                    1.505_632_735_149_311_6e-7,
                ];
                if x < 0.5 {
                    let pi = std::f64::consts::PI;
                    return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
                }
                let x = x - 1.0;
                let mut a = C[0];
                let t = x + 7.5;
                for (i, c) in C.iter().enumerate().skip(1) {
                    a += c / (x + i as f64);
                }
                0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
            }
            (ln_gamma((df + 1.0) / 2.0)
                - 0.5 * (df * std::f64::consts::PI).ln()
                - ln_gamma(df / 2.0))
            .exp()
        };
        let c = gamma_ratio(df);
        let pdf = |x: f64| c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
        let (a, b) = (t, t + 2000.0);
        let n = 200_000;
        let h = (b - a) / n as f64;
        let mut acc = pdf(a) + pdf(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            acc += if i % 2 ==  1 { 4.0 } else { 2.0 } * pdf(x);
        }
        acc * h / 3.0
    }

    fn qf_one_cell(levels: Vec<f64>, values: Vec<f64>, samples: Option<Vec<f64>>) -> QuantileForecast<f64> {
        let ts = vec![NaiveDate::from_ymd_opt(2021, 6, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap()];
        let s = samples.map(|v| (v.len(), v));
        QuantileForecast::new(vec![0], ts, 1, levels, values, s).unwrap()
    }

    #[test]
    fn two_point_forecast_scores_exactly_a_quarter_at_the_midpoint() {
        let v = crps_from_samples(&[0.0, 1.0], 0.5).unwrap();
        assert_eq!(v, 0.25);
    }

    #[test]
    fn truth_outside_the_support_adds_the_tail_distance() {
        let v = crps_from_samples(&[0.0, 1.0], 2.0).unwrap();
        assert_eq!(v, 1.25);
    }

    #[test]
    fn step_integral_matches_the_energy_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..300 {
            let m = rng.gen_range(2..=10);
            let xs: Vec<f64> = (0..m).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let y = rng.gen_range(-7.0..7.0);
            let a = crps_from_samples(&xs, y).unwrap();
            let b = crps_energy(&xs, y);
            assert!(
                (a - b).abs() < 1e-10,
                "integral {a} vs energy {b} on {xs:?}, y={y}"
            );
        }
    }

    #[test]
    fn degenerate_equal_samples_reduce_to_absolute_error() {
        let v = crps_from_samples::<f64>(&[3.0, 3.0, 3.0], 1.0).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn crps_is_scale_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let xs: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y = rng.gen_range(-3.0..3.0);
            let s = rng.gen_range(0.1..4.0);
            let base = crps_from_samples(&xs, y).unwrap();
            let scaled: Vec<f64> = xs.iter().map(|x| x * s).collect();
            let v = crps_from_samples(&scaled, y * s).unwrap();
            assert!((v - s * base).abs() < 1e-10);
        }
    }

    #[test]
    fn pinball_weights_misses_by_level() {
        assert_eq!(pinball::<f64>(0.0, 0.9, 1.0).unwrap(), 0.9);
        assert!((pinball::<f64>(0.0, 0.9, -1.0).unwrap() - 0.1).abs() < 1e-15);
        assert!(pinball::<f64>(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn dense_pinball_grid_approximates_crps_within_one_percent() {
        // `2 * mean pinball` over K levels is a K-point quadrature of the
        // pinball integral identity; levels at (i - 0.5) / K make it the
        // midpoint rule, so the quadrature error is O(1/K^2). The remaining
        // gap to the step-CDF CRPS is quantile-interpolation error, which
        // needs a sample resolution comparable to the level grid.
        let levels: Vec<f64> = (0..99).map(|i| (i as f64 + 0.5) / 99.0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..60 {
            let m = rng.gen_range(48..=160);
            let mut xs: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let y = rng.gen_range(xs[0]..*xs.last().unwrap());
            let qs: Vec<f64> = levels.iter().map(|l| quantile_of_sorted(&xs, *l)).collect();
            let approx = crps_from_quantiles(&levels, &qs, y).unwrap();
            let exact = crps_from_samples(&xs, y).unwrap();
            assert!(
                (approx - exact).abs() < 0.01 * exact,
                "approx {approx} vs exact {exact} (m={m}, y={y})"
            );
        }
    }

    #[test]
    fn paired_ttest_matches_quadrature_oracle() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [0.0; 5];
        let out = one_tailed_paired_ttest(&a, &b).unwrap();
        assert!((out.t - 4.242_640_687_119_285).abs() < 1e-9);
        assert_eq!(out.df, 4.0);
        let oracle = t_tail_quadrature(out.t, 4.0);
        assert!(
            (out.p - oracle).abs() < 1e-7,
            "p {} vs quadrature {}",
            out.p,
            oracle
        );
        assert!((out.p - 0.0066).abs() < 2e-4);
    }

    #[test]
    fn constant_zero_differences_give_half() {
        let a = [1.0, 1.0, 1.0];
        let out = one_tailed_paired_ttest(&a, &a).unwrap();
        assert_eq!(out.p, 0.5);
        assert_eq!(out.t, 0.0);
    }

    #[test]
    fn constant_positive_differences_saturate_the_test() {
        let a = [2.0, 3.0, 4.0];
        let b = [1.0, 2.0, 3.0];
        let out = one_tailed_paired_ttest(&a, &b).unwrap();
        assert!(out.p < 1e-12);
    }

    #[test]
    fn coverage_counts_boundary_hits_as_inside() {
        let qf = qf_one_cell(vec![0.1, 0.9], vec![-1.0, 1.0], None);
        let c = pi_coverage_width(&qf, &[1.0], 0.1, 0.9).unwrap();
        assert_eq!(c.coverage, 1.0);
        assert_eq!(c.mean_width, 2.0);
        assert!(pi_coverage_width(&qf, &[1.0], 0.2, 0.9).is_err());
    }

    #[test]
    fn clamping_never_hurts_crps_for_nonnegative_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let m = 40;
            let mut xs: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..3.0)).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let y = rng.gen_range(0.0..3.0);
            let levels = vec![0.1, 0.5, 0.9];
            let qs: Vec<f64> = levels.iter().map(|l| quantile_of_sorted(&xs, *l)).collect();
            let qf = qf_one_cell(levels, qs, Some(xs));
            let before = crps_dataset(&qf, &[y]).unwrap().value;
            let after = crps_dataset(&postprocess_nonnegative(qf), &[y]).unwrap().value;
            assert!(
                after <= before + 1e-12,
                "clamping increased CRPS: {before} -> {after}"
            );
        }
    }

    #[test]
    fn ks_statistic_separates_normal_from_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normals: Vec<f64> = (0..2000).map(|_| {
            let u: f64 = rng.gen();
            std_normal_quantile(u.clamp(1e-9, 1.0 - 1e-9))
        }).collect();
        assert!(ks_statistic_standard_normal(&normals) < 0.05);
        let uniforms: Vec<f64> = (0..2000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert!(ks_statistic_standard_normal(&uniforms) > 0.1);
    }

    #[test]
    fn standard_normal_quantile_matches_reference_values() {
        assert!((std_normal_quantile(0.975) - 1.959_963_985).abs() < 1e-6);
        assert!((std_normal_quantile(0.841_344_746) - 1.0).abs() < 1e-6);
        assert!(std_normal_quantile(0.5).abs() < 1e-12);
    }

    #[test]
    fn dataset_crps_averages_cells_and_checks_shape() {
        let ts: Vec<_> = (0..2)
            .map(|i| {
                NaiveDate::from_ymd_opt(2021, 6, 1)
                    .unwrap()
                    .and_hms_opt(0, 0, 0)
                    .unwrap()
                    + Duration::hours(i)
            })
            .collect();
        let samples = vec![0.0, 1.0, 0.0, 1.0];
        let qf = QuantileForecast::new(
            vec![0, 1],
            ts,
            1,
            vec![0.25, 0.75],
            vec![0.0, 1.0, 0.0, 1.0],
            Some((2, samples)),
        )
        .unwrap();
        let s = crps_dataset(&qf, &[0.5, 2.0]).unwrap();
        assert_eq!(s.n, 2);
        assert!((s.value - (0.25 + 1.25) / 2.0).abs() < 1e-12);
        assert!(crps_dataset(&qf, &[0.5]).is_err());
    }
}
