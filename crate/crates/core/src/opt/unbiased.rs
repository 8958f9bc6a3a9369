//! Optimal caching when every group carries the same trust bias.
//!
//! With equal biases the success probability depends on `c` only through the
//! total `x = Σc_m` and a separable concave sum, so the optimum spreads `x`
//! as evenly as the per-group caps allow and a 1-D search over `x` finishes
//! the job.

use super::{first_argmax, sweep_grid};
use crate::error::{Error, Result};
use crate::model::{active_ratio_at, kernel, kernel_d1, kernel_d2, CachingStrategy, GroupProfile, SystemParams};
use rayon::prelude::*;

/// Biases closer than this are treated as equal.
pub const BIAS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct UnbiasedSolution {
    pub c_star: CachingStrategy,
    pub x_star: f64,
    pub gain: f64,
    /// `(x, gain at x)` over the whole sweep.
    pub trace: Vec<(f64, f64)>,
}

/// Default search step, `λ_0/1000`.
pub fn default_step_x(groups: &GroupProfile) -> f64 {
    let total = groups.total_lambda();
    if total > 0.0 {
        total / 1000.0
    } else {
        1.0
    }
}

/// Spreads `x_bar` across groups as evenly as the caps `λ_m` allow.
pub fn inner_allocate(groups: &GroupProfile, x_bar: f64) -> Result<CachingStrategy> {
    let lambda = groups.lambda();
    let total = groups.total_lambda();
    if !(x_bar >= 0.0 && x_bar <= total * (1.0 + 1e-12)) {
        return Err(Error::domain(format!(
            "total caching density must lie in [0, {total}], got {x_bar}"
        )));
    }
    let x_bar = x_bar.min(total);
    let mut order: Vec<usize> = (0..lambda.len()).collect();
    order.sort_by(|&a, &b| lambda[a].total_cmp(&lambda[b]));

    let m = lambda.len();
    let mut saturated = 0.0;
    let mut level = x_bar / m as f64;
    for (n, &k) in order.iter().enumerate() {
        level = (x_bar - saturated) / (m - n) as f64;
        if level <= lambda[k] {
            break;
        }
        saturated += lambda[k];
    }
    let mut c: Vec<f64> = lambda.iter().map(|&l| level.min(l)).collect();
    // Put the rounding residue on an uncapped group so Σc = x̄ holds exactly.
    if let Some(k) = order.iter().rev().copied().find(|&k| c[k] < lambda[k]) {
        let others: f64 = c.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, v)| v).sum();
        c[k] = (x_bar - others).clamp(0.0, lambda[k]);
    }
    CachingStrategy::clamped(groups, c)
}

/// Common active ratio of all groups at total density `x_bar`.
///
/// With equal biases `𝒫_m = c_m E(x̄)/x̄` where `E(x̄) = 1 − exp(−πR²x̄)`,
/// so `c_m/𝒫_m = x̄/E(x̄)` no longer depends on the group.
pub fn unbiased_active_ratio(params: &SystemParams, total_lambda: f64, x_bar: f64) -> f64 {
    if x_bar <= 0.0 {
        return 0.0;
    }
    let area = params.disk_area();
    let e = -(-area * x_bar).exp_m1();
    active_ratio_at(area, (total_lambda - x_bar).max(0.0), x_bar / e)
}

fn interference(params: &SystemParams, x_bar: f64, rho: f64, c_m: f64) -> f64 {
    params.disk_area() * (x_bar + params.bs_load() + c_m * rho * params.theta_i())
}

/// `Σ c_m f(φ_m)` at fixed total and active ratio.
pub fn inner_objective(params: &SystemParams, c: &[f64], x_bar: f64, rho: f64) -> f64 {
    c.iter().map(|&cm| cm * kernel(interference(params, x_bar, rho, cm))).sum()
}

/// Marginal value `f(φ_m) + θ_IρπR² c_m f'(φ_m)` of group `m`'s density.
pub fn marginal_value(params: &SystemParams, x_bar: f64, rho: f64, c_m: f64) -> f64 {
    let phi = interference(params, x_bar, rho, c_m);
    kernel(phi) + params.theta_i() * rho * params.disk_area() * c_m * kernel_d1(phi)
}

/// Diagonal of the inner objective's Hessian (it has no off-diagonal terms).
pub fn hessian_diagonal(params: &SystemParams, c: &[f64], x_bar: f64, rho: f64) -> Vec<f64> {
    let s = params.theta_i() * rho * params.disk_area();
    c.iter()
        .map(|&cm| {
            let phi = interference(params, x_bar, rho, cm);
            s * (2.0 * kernel_d1(phi) + cm * s * kernel_d2(phi))
        })
        .collect()
}

/// Even allocation of `x_bar` and its offloading gain.
pub fn gain_at(params: &SystemParams, groups: &GroupProfile, x_bar: f64) -> Result<(CachingStrategy, f64)> {
    let c = inner_allocate(groups, x_bar)?;
    let total = groups.total_lambda();
    let rho = unbiased_active_ratio(params, total, x_bar);
    let gain = (total - x_bar) * params.disk_area() * inner_objective(params, c.as_slice(), x_bar, rho);
    Ok((c, gain))
}

/// Best even allocation over the grid `{0, step_x, …}` of totals.
pub fn solve_unbiased(params: &SystemParams, groups: &GroupProfile, step_x: f64) -> Result<UnbiasedSolution> {
    if !groups.has_equal_biases(BIAS_TOLERANCE) {
        return Err(Error::BiasMismatch(groups.bias().to_vec()));
    }
    let grid = sweep_grid(groups.total_lambda(), step_x)?;
    let points: Vec<(CachingStrategy, f64)> = grid
        .par_iter()
        .map(|&x| gain_at(params, groups, x))
        .collect::<Result<_>>()?;
    let best = first_argmax(points.iter().map(|p| p.1)).unwrap_or(0);
    let trace = grid.iter().zip(&points).map(|(&x, p)| (x, p.1)).collect();
    let (c_star, gain) = points[best].clone();
    Ok(UnbiasedSolution {
        c_star,
        x_star: grid[best],
        gain,
        trace,
    })
}
