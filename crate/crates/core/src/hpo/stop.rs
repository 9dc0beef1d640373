//! Plateau detection for inner search loops.
//!
//! A search is stopped once the population standard deviation of its five
//! best scores stays below `5e-4` for five consecutive trial completions.
//! The spread uses the population (n) denominator: it measures the
//! dispersion of a fixed, complete set of five values rather than estimating
//! a distribution parameter.

/// Spread threshold under which the best scores count as a plateau.
pub const PLATEAU_STD_THRESHOLD: f64 = 5e-4;
/// Number of best scores whose spread is inspected.
pub const PLATEAU_BEST: usize = 5;
/// Number of consecutive completions the plateau must persist.
pub const PLATEAU_PATIENCE: usize = 5;

/// Population standard deviation of the five lowest scores, or `None` when
/// fewer than five scores exist.
pub fn best_five_std(scores: &[f64]) -> Option<f64> {
    if scores.len() < PLATEAU_BEST {
        return None;
    }
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let best = &sorted[..PLATEAU_BEST];
    let mean = best.iter().sum::<f64>() / PLATEAU_BEST as f64;
    let var = best.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / PLATEAU_BEST as f64;
    Some(var.sqrt())
}

/// Whether the search should stop, given the scores of all completed trials
/// in completion order.
///
/// Returns `true` iff the plateau condition (spread of the five best scores
/// below the threshold) held after each of the last five completions. With
/// fewer than nine completions the patience window cannot be filled and the
/// result is `false`.
pub fn early_stop(history: &[f64]) -> bool {
    let n = history.len();
    if n < PLATEAU_BEST + PLATEAU_PATIENCE - 1 {
        return false;
    }
    (n - PLATEAU_PATIENCE + 1..=n).all(|j| {
        best_five_std(&history[..j]).is_some_and(|s| s < PLATEAU_STD_THRESHOLD)
    })
}
