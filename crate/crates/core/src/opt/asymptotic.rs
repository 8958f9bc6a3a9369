//! Low-complexity caching from the unlimited-range approximation.
//!
//! As `R → ∞` the success probability becomes a sum of linear-fractional
//! terms. Bounding each active ratio from above by its value at the smallest
//! attainable `Σv c` gives a lower bound that is a sum of ratios of affine
//! functions, solved at each total `x` by a Newton iteration on the ratio
//! multipliers around a linear subproblem.

use super::unbiased::inner_allocate;
use super::{first_argmax, greedy_fill, sweep_grid};
use crate::error::{Error, Result};
use crate::model::{offload_gain, CachingStrategy, GroupProfile, SystemParams, CELL_SHAPE};
use crate::numerics::project_capped_simplex;
use rayon::prelude::*;

/// Iteration controls of the sum-of-ratios solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SorSettings {
    /// Damping base `ζ ∈ (0, 1)`.
    pub zeta: f64,
    /// Armijo constant `ε ∈ (0, 1)`.
    pub eps: f64,
    /// Residual tolerance.
    pub tol: f64,
    pub max_iterations: usize,
    /// Initial strategy step as a fraction of `x` per unit of the largest
    /// linear coefficient.
    pub step_fraction: f64,
}

impl Default for SorSettings {
    fn default() -> Self {
        Self {
            zeta: 0.5,
            eps: 0.01,
            tol: 1e-8,
            max_iterations: 500,
            step_fraction: 0.05,
        }
    }
}

impl SorSettings {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.zeta) || !unit(self.eps) || !(self.tol > 0.0) || self.max_iterations == 0 {
            return Err(Error::domain(format!("invalid sum-of-ratios settings: {self:?}")));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction.is_finite()) {
            return Err(Error::domain(format!("step fraction must be > 0, got {}", self.step_fraction)));
        }
        Ok(())
    }
}

/// Iterate of the sum-of-ratios solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SorState {
    pub c: Vec<f64>,
    pub u: Vec<f64>,
    pub beta: Vec<f64>,
    /// Denominators `Σv_i c_i + λ_Bθ_B v_m + c_m ρ̄_m θ_I v_m`.
    pub phi: Vec<f64>,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SorOutcome {
    pub state: SorState,
    /// `Σβ_m` after each iteration, starting with the initial multipliers.
    pub trace: Vec<f64>,
    /// Damping exponent accepted at each iteration.
    pub damping: Vec<u32>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticSolution {
    pub c_star: CachingStrategy,
    pub x_star: f64,
    /// `(λ_0 − x) ℙ_s^∞` with the bounded active ratios.
    pub gain_lower: f64,
    /// `(λ_0 − x) ℙ_s^∞` with the exact unlimited-range active ratios.
    pub gain_unbounded: f64,
    /// Finite-range gain of `c_star` under the full model.
    pub gain_model: f64,
    /// `Σβ_m` trace of the solver at `x_star`.
    pub trace: Vec<f64>,
    /// `(x, bounded gain)` over the sweep.
    pub sweep: Vec<(f64, f64)>,
    pub iterations_total: usize,
}

fn weighted_sum(v: &[f64], c: &[f64]) -> f64 {
    v.iter().zip(c).map(|(a, b)| a * b).sum()
}

fn requester_ratio(v_m: f64, requesters: f64, y: f64) -> f64 {
    1.0 - (1.0 + v_m * requesters / (CELL_SHAPE * y)).powf(-CELL_SHAPE)
}

/// Unlimited-range active ratios `1 − (1 + v_m(λ_0 − x)/(3.5 Σv c))^{−3.5}`.
pub fn rho_asymptotic(groups: &GroupProfile, weights: &[f64], c: &[f64], x_bar: f64) -> Vec<f64> {
    let y = weighted_sum(weights, c);
    let requesters = (groups.total_lambda() - x_bar).max(0.0);
    weights
        .iter()
        .map(|&vm| if y > 0.0 { requester_ratio(vm, requesters, y) } else { 0.0 })
        .collect()
}

/// Smallest `Σv c` over box points with `Σc = x_bar`, with its minimizer.
pub fn y_min(groups: &GroupProfile, weights: &[f64], x_bar: f64) -> Result<(f64, Vec<f64>)> {
    let total = groups.total_lambda();
    if !(x_bar >= 0.0 && x_bar <= total * (1.0 + 1e-12)) {
        return Err(Error::domain(format!(
            "total caching density must lie in [0, {total}], got {x_bar}"
        )));
    }
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[a].total_cmp(&weights[b]));
    let c = greedy_fill(&order, groups.lambda(), x_bar.min(total));
    Ok((weighted_sum(weights, &c), c))
}

/// Upper bounds `ρ̄_m` on the unlimited-range active ratios at total `x_bar`.
pub fn rho_bound(groups: &GroupProfile, weights: &[f64], x_bar: f64) -> Result<Vec<f64>> {
    let (y, _) = y_min(groups, weights, x_bar)?;
    let requesters = (groups.total_lambda() - x_bar).max(0.0);
    Ok(weights
        .iter()
        .map(|&vm| {
            if y > 0.0 {
                requester_ratio(vm, requesters, y)
            } else if requesters > 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect())
}

fn ratio_sum(params: &SystemParams, weights: &[f64], c: &[f64], rho: &[f64]) -> f64 {
    let y = weighted_sum(weights, c);
    (0..c.len())
        .map(|m| {
            let num = c[m] * weights[m];
            if num <= 0.0 {
                return 0.0;
            }
            num / (y + params.bs_load() * weights[m] + c[m] * rho[m] * params.theta_i() * weights[m])
        })
        .sum()
}

/// Lower bound on the unlimited-range success probability.
pub fn ps_infinity_lower(params: &SystemParams, groups: &GroupProfile, c: &[f64], x_bar: f64) -> Result<f64> {
    let v = groups.weights(params.alpha());
    let rho = rho_bound(groups, &v, x_bar)?;
    Ok(ratio_sum(params, &v, c, &rho))
}

/// Unlimited-range success probability with the exact active ratios.
pub fn ps_infinity(params: &SystemParams, groups: &GroupProfile, c: &[f64], x_bar: f64) -> f64 {
    let v = groups.weights(params.alpha());
    let rho = rho_asymptotic(groups, &v, c, x_bar);
    ratio_sum(params, &v, c, &rho)
}

/// Sum-of-ratios problem at a fixed total `x`.
#[derive(Debug, Clone)]
pub struct SorProblem {
    weights: Vec<f64>,
    lambda: Vec<f64>,
    x_bar: f64,
    rho_bar: Vec<f64>,
    bs_load: f64,
    theta_i: f64,
}

impl SorProblem {
    pub fn new(params: &SystemParams, groups: &GroupProfile, x_bar: f64) -> Result<Self> {
        let weights = groups.weights(params.alpha());
        let rho_bar = rho_bound(groups, &weights, x_bar)?;
        Ok(Self {
            weights,
            lambda: groups.lambda().to_vec(),
            x_bar: x_bar.min(groups.total_lambda()),
            rho_bar,
            bs_load: params.bs_load(),
            theta_i: params.theta_i(),
        })
    }

    pub fn denominators(&self, c: &[f64]) -> Vec<f64> {
        let y = weighted_sum(&self.weights, c);
        (0..c.len())
            .map(|m| y + self.bs_load * self.weights[m] + c[m] * self.rho_bar[m] * self.theta_i * self.weights[m])
            .collect()
    }

    /// `Σ c_m v_m / φ_m(c)`.
    pub fn objective(&self, c: &[f64]) -> f64 {
        let phi = self.denominators(c);
        (0..c.len())
            .map(|m| {
                let num = c[m] * self.weights[m];
                if num > 0.0 {
                    num / phi[m]
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Coefficients of `c` in `Σ u_m (c_m v_m − β_m φ_m(c))`.
    pub fn lp_coefficients(&self, u: &[f64], beta: &[f64]) -> Vec<f64> {
        let coupling: f64 = u.iter().zip(beta).map(|(a, b)| a * b).sum();
        (0..u.len())
            .map(|k| {
                let v = self.weights[k];
                v * u[k] - v * coupling - u[k] * beta[k] * self.rho_bar[k] * self.theta_i * v
            })
            .collect()
    }

    fn residuals(&self, c: &[f64], u: &[f64], beta: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let phi = self.denominators(c);
        let chi = (0..c.len()).map(|m| u[m] * phi[m] - 1.0).collect();
        let kappa = (0..c.len()).map(|m| beta[m] * phi[m] - c[m] * self.weights[m]).collect();
        (phi, chi, kappa)
    }
}

/// Exact maximizer of the linear subproblem: fill `x` in descending
/// coefficient order, lowest index first among equal coefficients.
pub fn sor_inner_lp(problem: &SorProblem, u: &[f64], beta: &[f64]) -> Vec<f64> {
    let a = problem.lp_coefficients(u, beta);
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| a[j].total_cmp(&a[i]));
    greedy_fill(&order, &problem.lambda, problem.x_bar)
}

fn norm_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().chain(b).map(|r| r * r).sum()
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().chain(b).fold(0.0, |m, r| m.max(r.abs()))
}

/// Runs the damped Newton iteration on the ratio multipliers at total `x_bar`.
///
/// The strategy update is a projected step along the linear subproblem's
/// coefficients, whose fixed points are exactly the subproblem's maximizers.
/// Its length shrinks whenever `Σβ` would fall.
pub fn solve_sor(
    params: &SystemParams,
    groups: &GroupProfile,
    x_bar: f64,
    settings: &SorSettings,
) -> Result<SorOutcome> {
    solve_sor_from(params, groups, x_bar, None, settings)
}

/// [`solve_sor`] from a given starting strategy instead of the even split.
pub fn solve_sor_from(
    params: &SystemParams,
    groups: &GroupProfile,
    x_bar: f64,
    start: Option<Vec<f64>>,
    settings: &SorSettings,
) -> Result<SorOutcome> {
    settings.validate()?;
    let problem = SorProblem::new(params, groups, x_bar)?;
    let m = groups.len();
    let c0 = match start {
        Some(c) => c,
        None => inner_allocate(groups, problem.x_bar)?.into_vec(),
    };
    let phi0 = problem.denominators(&c0);
    if problem.x_bar <= 0.0 || phi0.iter().any(|p| !(*p > 0.0)) {
        // Nothing cached, or no interference at all: the ratios are fixed.
        let beta: Vec<f64> = (0..m)
            .map(|k| if phi0[k] > 0.0 { c0[k] * problem.weights[k] / phi0[k] } else { 0.0 })
            .collect();
        let trace = vec![beta.iter().sum()];
        return Ok(SorOutcome {
            state: SorState {
                c: c0,
                u: phi0.iter().map(|p| if *p > 0.0 { 1.0 / p } else { 0.0 }).collect(),
                beta,
                phi: phi0,
                iteration: 0,
            },
            trace,
            damping: Vec::new(),
            residual: 0.0,
        });
    }

    let mut c = c0;
    let mut u: Vec<f64> = phi0.iter().map(|p| 1.0 / p).collect();
    let mut beta: Vec<f64> = (0..m).map(|k| c[k] * problem.weights[k] / phi0[k]).collect();
    let mut trace = vec![beta.iter().sum::<f64>()];
    let mut damping = Vec::new();

    let amax = problem
        .lp_coefficients(&u, &beta)
        .iter()
        .fold(0.0f64, |a, b| a.max(b.abs()));
    let mut tau = settings.step_fraction * problem.x_bar / amax.max(1e-300);

    let step = |u: &[f64], beta: &[f64], c: &[f64], tau: f64| -> Result<Vec<f64>> {
        let a = problem.lp_coefficients(u, beta);
        let z: Vec<f64> = c.iter().zip(&a).map(|(ci, ai)| ci + tau * ai).collect();
        project_capped_simplex(&z, &problem.lambda, problem.x_bar)
    };

    let mut residual = f64::INFINITY;
    for iteration in 1..=settings.max_iterations {
        let mut shrink = 0;
        loop {
            let c_next = step(&u, &beta, &c, tau)?;
            let (phi, chi, kappa) = problem.residuals(&c_next, &u, &beta);
            residual = max_abs(&chi, &kappa);
            let moved = c_next.iter().zip(&c).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
            if residual <= settings.tol && moved <= settings.tol * problem.x_bar {
                let state = SorState {
                    c: c_next,
                    u,
                    beta,
                    phi,
                    iteration,
                };
                return Ok(SorOutcome {
                    state,
                    trace,
                    damping,
                    residual,
                });
            }

            let r0 = norm_sq(&chi, &kappa);
            let mut accepted = None;
            let mut exponent = 0;
            for i in 1..=60u32 {
                let d = settings.zeta.powi(i as i32);
                let u_t: Vec<f64> = (0..m).map(|k| u[k] - d * chi[k] / phi[k]).collect();
                let b_t: Vec<f64> = (0..m).map(|k| beta[k] - d * kappa[k] / phi[k]).collect();
                // Residuals of the trial multipliers at this iteration's strategy.
                let (_, chi_t, kappa_t) = problem.residuals(&c_next, &u_t, &b_t);
                exponent = i;
                accepted = Some((u_t, b_t));
                if norm_sq(&chi_t, &kappa_t) <= (1.0 - settings.eps * d).powi(2) * r0 {
                    break;
                }
                if i == 60 {
                    exponent = 61;
                }
            }
            let (u_t, b_t) = accepted.expect("at least one damping trial");
            let sum_t: f64 = b_t.iter().sum();
            let last = *trace.last().expect("trace starts non-empty");
            if sum_t < last - 1e-12 && shrink < 40 {
                tau *= 0.5;
                shrink += 1;
                continue;
            }
            c = c_next;
            u = u_t;
            beta = b_t;
            trace.push(sum_t);
            damping.push(exponent);
            break;
        }
    }
    Err(Error::NonConvergence {
        iterations: settings.max_iterations,
        x_bar,
        residual,
    })
}

/// One-dimensional search over `x` of the sum-of-ratios solutions.
pub fn solve_asymptotic(
    params: &SystemParams,
    groups: &GroupProfile,
    step_x: f64,
    settings: &SorSettings,
) -> Result<AsymptoticSolution> {
    let total = groups.total_lambda();
    let grid = sweep_grid(total, step_x)?;
    let runs: Vec<(SorOutcome, f64)> = grid
        .par_iter()
        .map(|&x| -> Result<(SorOutcome, f64)> {
            let out = solve_sor(params, groups, x, settings)?;
            let gain = (total - x) * ps_infinity_lower(params, groups, &out.state.c, x)?;
            Ok((out, gain))
        })
        .collect::<Result<_>>()?;
    let best = first_argmax(runs.iter().map(|r| r.1)).unwrap_or(0);
    let x_star = grid[best];
    let (outcome, gain_lower) = &runs[best];
    let c_star = CachingStrategy::clamped(groups, outcome.state.c.clone())?;
    let gain_unbounded = (total - x_star) * ps_infinity(params, groups, c_star.as_slice(), x_star);
    let gain_model = offload_gain(params, groups, &c_star, None)?.offload_gain;
    Ok(AsymptoticSolution {
        c_star,
        x_star,
        gain_lower: *gain_lower,
        gain_unbounded,
        gain_model,
        trace: outcome.trace.clone(),
        sweep: grid.iter().zip(&runs).map(|(&x, r)| (x, r.1)).collect(),
        iterations_total: runs.iter().map(|r| r.0.state.iteration).sum(),
    })
}
