//! Caching-density optimizers.

pub mod asymptotic;
pub mod exact;
pub mod unbiased;

use crate::error::{Error, Result};

/// Grid `{0, step, 2·step, …}` over `[0, total]`, with `total` appended when
/// the last step falls short of it.
pub fn sweep_grid(total: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::domain(format!("search step must be > 0, got {step}")));
    }
    if !(total >= 0.0 && total.is_finite()) {
        return Err(Error::domain(format!("search interval end must be >= 0, got {total}")));
    }
    let n = (total / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|k| (k as f64 * step).min(total)).collect();
    if total - grid[n] > 1e-12 * total.max(1e-300) {
        grid.push(total);
    }
    Ok(grid)
}

/// Index of the first maximal value, so ties resolve toward the earliest grid point.
pub(crate) fn first_argmax(values: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ if v.is_nan() => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Fills `total` into the boxes `[0, caps]` following `order`.
pub(crate) fn greedy_fill(order: &[usize], caps: &[f64], total: f64) -> Vec<f64> {
    let mut c = vec![0.0; caps.len()];
    let mut left = total;
    for &k in order {
        let take = left.min(caps[k]).max(0.0);
        c[k] = take;
        left -= take;
    }
    c
}
