//! Globally optimal caching for arbitrary biases.
//!
//! Fixing `x = Σc_m` and `y = Σv_m c_m` makes the success probability a
//! separable concave function of `c` over a polytope. A 2-D grid over
//! `(x, y)` wraps a gradient-projection solver for that inner problem.

use super::unbiased::inner_allocate;
use super::{first_argmax, greedy_fill, sweep_grid};
use crate::error::{Error, Result};
use crate::model::{active_ratio_at, kernel, kernel_d1, CachingStrategy, GroupProfile, SystemParams};
use crate::numerics::bisect_max;
use rayon::prelude::*;

/// How the `y` interval is discretized at each `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum YStep {
    /// Fixed step in density units.
    Fixed(f64),
    /// Split `[y_low, y_high]` into this many cells.
    Divisions(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub step_x: f64,
    pub step_y: YStep,
    /// Inner iterations stop once an ascent step gains no more than this.
    pub convergence: f64,
    pub max_inner_iterations: usize,
}

impl GridSpec {
    /// `δ_x = λ_0/200`, 200 `y` cells per `x`, `δ_c = 1e-9`.
    pub fn default_for(groups: &GroupProfile) -> Self {
        let total = groups.total_lambda();
        Self {
            step_x: if total > 0.0 { total / 200.0 } else { 1.0 },
            step_y: YStep::Divisions(200),
            convergence: 1e-9,
            max_inner_iterations: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok_y = match self.step_y {
            YStep::Fixed(s) => s > 0.0 && s.is_finite(),
            YStep::Divisions(n) => n >= 1,
        };
        if !(self.step_x > 0.0 && self.step_x.is_finite()) || !ok_y || !(self.convergence > 0.0) {
            return Err(Error::domain(format!("grid steps and tolerance must be positive: {self:?}")));
        }
        if self.max_inner_iterations == 0 {
            return Err(Error::domain("inner iteration cap must be positive"));
        }
        Ok(())
    }
}

/// Best inner objective found at one `(x, y)` grid point; `None` when no
/// box-feasible strategy has those totals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub x: f64,
    pub y: f64,
    pub gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub c_star: CachingStrategy,
    pub x_star: f64,
    pub y_star: f64,
    pub gain: f64,
    pub grid_trace: Vec<GridPoint>,
    pub iterations_total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerOptimum {
    pub c: Vec<f64>,
    /// `Σ c_m f(φ_m)`, without the `πR²` factor.
    pub objective: f64,
    pub iterations: usize,
}

/// Interval searched for `y` at a given `x`.
pub fn y_bounds(weights: &[f64], lambda: &[f64], x_bar: f64) -> (f64, f64) {
    let vmin = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let vmax = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cap: f64 = weights.iter().zip(lambda).map(|(v, l)| v * l).sum();
    (vmin * x_bar, (vmax * x_bar).min(cap))
}

fn order_by_weight(weights: &[f64], descending: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let o = weights[a].total_cmp(&weights[b]);
        if descending {
            o.reverse()
        } else {
            o
        }
    });
    order
}

fn weighted_sum(weights: &[f64], c: &[f64]) -> f64 {
    weights.iter().zip(c).map(|(v, c)| v * c).sum()
}

/// Some box point with `Σc = x_bar` and `Σv c = y_bar`, or `None`.
///
/// Starts from the even allocation of `x_bar` and moves along the segment
/// toward the greedy vertex that maximizes or minimizes `Σv c`.
pub fn feasible_init(groups: &GroupProfile, weights: &[f64], x_bar: f64, y_bar: f64) -> Option<Vec<f64>> {
    let lambda = groups.lambda();
    let even = inner_allocate(groups, x_bar).ok()?.into_vec();
    let y_even = weighted_sum(weights, &even);
    let tol = 1e-12 * (y_bar.abs() + x_bar.abs()).max(1e-300);
    if (y_bar - y_even).abs() <= tol {
        return Some(even);
    }
    let target = greedy_fill(&order_by_weight(weights, y_bar > y_even), lambda, x_bar);
    let y_target = weighted_sum(weights, &target);
    let t = (y_bar - y_even) / (y_target - y_even);
    if !(t.is_finite() && t <= 1.0 + 1e-9 && t >= 0.0) {
        return None;
    }
    let t = t.min(1.0);
    Some(
        even.iter()
            .zip(&target)
            .zip(lambda)
            .map(|((e, g), l)| (e + t * (g - e)).clamp(0.0, *l))
            .collect(),
    )
}

/// The separable concave problem at fixed `(x, y)`.
#[derive(Debug, Clone)]
pub struct InnerProblem {
    area: f64,
    bs_load: f64,
    theta_i: f64,
    y_bar: f64,
    weights: Vec<f64>,
    lambda: Vec<f64>,
    rho: Vec<f64>,
}

impl InnerProblem {
    pub fn new(params: &SystemParams, groups: &GroupProfile, x_bar: f64, y_bar: f64) -> Self {
        let area = params.disk_area();
        let weights = groups.weights(params.alpha());
        let requesters = (groups.total_lambda() - x_bar).max(0.0);
        // c_m/𝒫_m = y/(v_m E_m) with E_m = 1 − exp(−πR² y/v_m).
        let rho = weights
            .iter()
            .map(|&vm| {
                if vm <= 0.0 || y_bar <= 0.0 {
                    return 0.0;
                }
                let e = -(-area * y_bar / vm).exp_m1();
                active_ratio_at(area, requesters, y_bar / (vm * e))
            })
            .collect();
        Self {
            area,
            bs_load: params.bs_load(),
            theta_i: params.theta_i(),
            y_bar,
            weights,
            lambda: groups.lambda().to_vec(),
            rho,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn active_ratio(&self) -> &[f64] {
        &self.rho
    }

    fn phi(&self, m: usize, cm: f64) -> f64 {
        self.area * (self.y_bar / self.weights[m] + self.bs_load + self.rho[m] * cm * self.theta_i)
    }

    fn contributes(&self, m: usize) -> bool {
        self.weights[m] > 0.0 && self.y_bar > 0.0
    }

    /// `Σ c_m f(φ_m)`.
    pub fn objective(&self, c: &[f64]) -> f64 {
        (0..c.len())
            .filter(|&m| self.contributes(m))
            .map(|m| {
                let cm = c[m].max(0.0);
                cm * kernel(self.phi(m, cm))
            })
            .sum()
    }

    /// `∂/∂c_m = f(φ_m) + πR² ρ_m θ_I c_m f'(φ_m)`.
    pub fn gradient(&self, c: &[f64]) -> Vec<f64> {
        (0..c.len())
            .map(|m| {
                if !self.contributes(m) {
                    return 0.0;
                }
                let cm = c[m].max(0.0);
                let phi = self.phi(m, cm);
                kernel(phi) + self.area * self.rho[m] * self.theta_i * cm * kernel_d1(phi)
            })
            .collect()
    }
}

/// Multipliers of the rows `[1; v]` restricted to `free`. The weight row is
/// dropped when it is redundant there.
fn multipliers(weights: &[f64], free: &[bool], g: &[f64]) -> Result<(f64, f64)> {
    let (mut n, mut sv, mut svv, mut sg, mut svg) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..g.len() {
        if free[i] {
            n += 1.0;
            sv += weights[i];
            svv += weights[i] * weights[i];
            sg += g[i];
            svg += weights[i] * g[i];
        }
    }
    if n == 0.0 {
        return Err(Error::SingularProjection("no free coordinates".into()));
    }
    let det = n * svv - sv * sv;
    if det <= 1e-12 * n * svv {
        // Weights equal on the free set: only Σc = x is an independent row.
        return Ok((sg / n, 0.0));
    }
    Ok(((svv * sg - sv * svg) / det, (n * svg - sv * sg) / det))
}

/// `[I − Nᵀ(NNᵀ)⁻¹N] g` over the free coordinates, zero elsewhere.
pub fn projected_direction(weights: &[f64], free: &[bool], g: &[f64]) -> Result<Vec<f64>> {
    let (mu0, mu1) = multipliers(weights, free, g)?;
    Ok((0..g.len())
        .map(|i| if free[i] { g[i] - mu0 - mu1 * weights[i] } else { 0.0 })
        .collect())
}

/// Dense projection matrix onto `{d : Σd = 0, Σv d = 0}`.
pub fn projection_matrix(weights: &[f64]) -> Result<Vec<Vec<f64>>> {
    let free = vec![true; weights.len()];
    (0..weights.len())
        .map(|j| {
            let mut e = vec![0.0; weights.len()];
            e[j] = 1.0;
            projected_direction(weights, &free, &e)
        })
        .collect::<Result<Vec<_>>>()
        // Columns of a symmetric matrix.
        .map(|cols| {
            (0..weights.len())
                .map(|i| cols.iter().map(|col| col[i]).collect())
                .collect()
        })
}

/// Gradient projection with exact line search from a feasible start.
pub fn inner_maximize_from(problem: &InnerProblem, start: Vec<f64>, spec: &GridSpec) -> Result<InnerOptimum> {
    let m = start.len();
    let lambda = &problem.lambda;
    let weights = &problem.weights;
    let scale = lambda.iter().copied().fold(0.0, f64::max).max(1e-300);
    let at_bound_tol = 1e-13 * scale;

    let mut c = start;
    let mut value = problem.objective(&c);
    let mut iterations = 0;
    let mut stalled = false;

    while iterations < spec.max_inner_iterations {
        let g = problem.gradient(&c);
        let gnorm = g.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-300);
        let at_lower: Vec<bool> = c.iter().map(|&ci| ci <= at_bound_tol).collect();
        let at_upper: Vec<bool> = (0..m).map(|i| c[i] >= lambda[i] - at_bound_tol && !at_lower[i]).collect();
        let free: Vec<bool> = (0..m).map(|i| !at_lower[i] && !at_upper[i]).collect();

        let mut p = if free.iter().any(|&f| f) {
            projected_direction(weights, &free, &g)?
        } else {
            vec![0.0; m]
        };
        let pnorm = p.iter().fold(0.0f64, |a, b| a.max(b.abs()));

        if stalled || pnorm <= 1e-12 * gnorm {
            // Stationary on this face: release a bound, trying first those
            // whose reduced gradient points most strongly into the box.
            let (mu0, mu1) = if free.iter().any(|&f| f) {
                multipliers(weights, &free, &g)?
            } else {
                (0.0, 0.0)
            };
            let mut candidates: Vec<(usize, f64)> = (0..m)
                .filter(|&i| !free[i])
                .map(|i| {
                    let r = g[i] - mu0 - mu1 * weights[i];
                    (i, if at_lower[i] { r } else { -r })
                })
                .collect();
            candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
            let mut released = None;
            for (i, _) in candidates {
                let mut trial = free.clone();
                trial[i] = true;
                let d = projected_direction(weights, &trial, &g)?;
                let dnorm = d.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                let inward = if at_lower[i] { d[i] } else { -d[i] };
                if dnorm > 1e-12 * gnorm && inward > 1e-12 * gnorm {
                    released = Some(d);
                    break;
                }
            }
            match released {
                Some(d) => p = d,
                None => break,
            }
        }

        // Largest step keeping every coordinate inside its box.
        let mut s_max = f64::INFINITY;
        let mut blocking = usize::MAX;
        for i in 0..m {
            let room = if p[i] > 0.0 {
                (lambda[i] - c[i]) / p[i]
            } else if p[i] < 0.0 {
                -c[i] / p[i]
            } else {
                continue;
            };
            if room < s_max {
                s_max = room;
                blocking = i;
            }
        }
        if !(s_max > 0.0 && s_max.is_finite()) {
            break;
        }
        let along = |s: f64| -> Vec<f64> {
            (0..m).map(|i| (c[i] + s * p[i]).clamp(0.0, lambda[i])).collect()
        };
        let s = bisect_max(|s| problem.objective(&along(s)), 0.0, s_max, s_max * 1e-10)?;
        let hit = s >= s_max * (1.0 - 1e-9);
        let mut next = along(if hit { s_max } else { s });
        if hit {
            next[blocking] = if p[blocking] > 0.0 { lambda[blocking] } else { 0.0 };
        }
        let next_value = problem.objective(&next);
        iterations += 1;
        if next_value < value {
            // Rounding made the step useless.
            break;
        }
        let gained = next_value - value;
        c = next;
        value = next_value;
        stalled = gained <= spec.convergence && !hit;
    }

    Ok(InnerOptimum {
        c,
        objective: value,
        iterations,
    })
}

/// Maximizes the inner objective at `(x_bar, y_bar)`; `None` if infeasible.
pub fn inner_maximize(
    params: &SystemParams,
    groups: &GroupProfile,
    x_bar: f64,
    y_bar: f64,
    spec: &GridSpec,
) -> Result<Option<InnerOptimum>> {
    let problem = InnerProblem::new(params, groups, x_bar, y_bar);
    let Some(start) = feasible_init(groups, problem.weights(), x_bar, y_bar) else {
        return Ok(None);
    };
    inner_maximize_from(&problem, start, spec).map(Some)
}

/// `y` values searched at `x_bar`. The grid always contains the `y` of the
/// even allocation so the search never loses to it at the same `x`.
pub fn y_grid(groups: &GroupProfile, weights: &[f64], x_bar: f64, step: YStep) -> Vec<f64> {
    let (lo, hi) = y_bounds(weights, groups.lambda(), x_bar);
    let mut ys = if hi - lo <= 1e-15 * hi.abs().max(1e-300) {
        vec![lo]
    } else {
        let n = match step {
            YStep::Fixed(s) => ((hi - lo) / s + 1e-9).floor() as usize,
            YStep::Divisions(n) => n,
        };
        let d = match step {
            YStep::Fixed(s) => s,
            YStep::Divisions(n) => (hi - lo) / n as f64,
        };
        let mut ys: Vec<f64> = (0..=n).map(|k| (lo + k as f64 * d).min(hi)).collect();
        if hi - ys[n] > 1e-12 * hi {
            ys.push(hi);
        }
        ys
    };
    if let Ok(even) = inner_allocate(groups, x_bar) {
        let y_even = weighted_sum(weights, even.as_slice());
        if !ys.iter().any(|y| (y - y_even).abs() <= 1e-15 * y_even.abs().max(1e-300)) {
            ys.push(y_even);
            ys.sort_by(f64::total_cmp);
        }
    }
    ys
}

/// Exhaustive `(x, y)` grid search with gradient projection at each point.
pub fn solve_exact(params: &SystemParams, groups: &GroupProfile, spec: &GridSpec) -> Result<ExactSolution> {
    spec.validate()?;
    let total = groups.total_lambda();
    let weights = groups.weights(params.alpha());
    let area = params.disk_area();
    let xs = sweep_grid(total, spec.step_x)?;

    type Line = Vec<(GridPoint, Option<InnerOptimum>)>;
    let lines: Vec<Line> = xs
        .par_iter()
        .map(|&x| -> Result<Line> {
            y_grid(groups, &weights, x, spec.step_y)
                .into_iter()
                .map(|y| {
                    let inner = inner_maximize(params, groups, x, y, spec)?;
                    let gain = inner.as_ref().map(|o| (total - x) * area * o.objective);
                    Ok((GridPoint { x, y, gain }, inner))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let flat: Vec<(GridPoint, Option<InnerOptimum>)> = lines.into_iter().flatten().collect();
    let iterations_total = flat.iter().filter_map(|p| p.1.as_ref()).map(|o| o.iterations).sum();
    let best = first_argmax(flat.iter().map(|p| p.0.gain.unwrap_or(f64::NEG_INFINITY)))
        .ok_or_else(|| Error::domain("empty search grid"))?;
    let (point, inner) = &flat[best];
    let c_star = match inner {
        Some(o) => CachingStrategy::clamped(groups, o.c.clone())?,
        None => CachingStrategy::zeros(groups),
    };
    Ok(ExactSolution {
        c_star,
        x_star: point.x,
        y_star: point.y,
        gain: point.gain.unwrap_or(0.0),
        grid_trace: flat.iter().map(|p| p.0).collect(),
        iterations_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::offload_gain;
    use crate::opt::unbiased::solve_unbiased;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> SystemParams {
        SystemParams::from_db(3.0, 3.0, 15.0, 20.0, 1e-4, 15.0).unwrap()
    }

    fn fig5_two() -> GroupProfile {
        GroupProfile::new(vec![0.02, 0.02], vec![0.1, 0.9]).unwrap()
    }

    fn fig5_three() -> GroupProfile {
        GroupProfile::new(vec![0.02; 3], vec![0.1, 0.4, 0.5]).unwrap()
    }

    fn tight_spec() -> GridSpec {
        GridSpec {
            step_x: 1e-3,
            step_y: YStep::Divisions(50),
            convergence: 1e-14,
            max_inner_iterations: 5000,
        }
    }

    #[test]
    fn y_bounds_examples() {
        assert_eq!(y_bounds(&[1.0, 1.0], &[0.05, 0.05], 0.02), (0.02, 0.02));
        let (lo, hi) = y_bounds(&[0.2, 0.8], &[0.03, 0.03], 0.04);
        assert!((lo - 0.008).abs() < 1e-15 && (hi - 0.030).abs() < 1e-15);
        assert_eq!(y_bounds(&[0.2, 0.8], &[0.03, 0.03], 0.0), (0.0, 0.0));
    }

    #[test]
    fn enumerated_range_is_inside_the_searched_interval() {
        let v = [0.2, 0.8];
        let lambda = [0.03, 0.03];
        let x: f64 = 0.04;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..=300 {
            let c1 = k as f64 * 1e-4;
            let c2 = x - c1;
            if c2 < -1e-15 || c2 > 0.03 + 1e-15 {
                continue;
            }
            let y = 0.2 * c1 + 0.8 * c2;
            lo = lo.min(y);
            hi = hi.max(y);
        }
        let (a, b) = y_bounds(&v, &lambda, x);
        assert!(a <= lo + 1e-15 && hi <= b + 1e-15);
        // Caps make the true lower end 0.014, tighter than the searched 0.008.
        assert!((lo - 0.014).abs() < 1e-12);
    }

    #[test]
    fn feasible_init_examples() {
        let g = GroupProfile::new(vec![0.03, 0.03], vec![0.5, 0.5]).unwrap();
        let c = feasible_init(&g, &[0.2, 0.8], 0.04, 0.02).unwrap();
        assert!((c[0] - 0.02).abs() < 1e-15 && (c[1] - 0.02).abs() < 1e-15);
        let u = GroupProfile::unbiased(vec![0.05, 0.01, 0.05]).unwrap();
        let c = feasible_init(&u, &[0.5, 0.5, 0.5], 0.06, 0.03).unwrap();
        assert_eq!(c, inner_allocate(&u, 0.06).unwrap().into_vec());
        assert!(feasible_init(&g, &[0.2, 0.8], 0.04, 0.010).is_none());
        assert!(feasible_init(&g, &[0.2, 0.8], 0.04, 0.0305).is_none());
    }

    #[test]
    fn feasible_init_hits_targets() {
        let g = fig5_three();
        let v = g.weights(3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x = rng.random::<f64>() * 0.06;
            let lo = weighted_sum(&v, &greedy_fill(&order_by_weight(&v, false), g.lambda(), x));
            let hi = weighted_sum(&v, &greedy_fill(&order_by_weight(&v, true), g.lambda(), x));
            let y = lo + rng.random::<f64>() * (hi - lo);
            let c = feasible_init(&g, &v, x, y).unwrap();
            assert!((c.iter().sum::<f64>() - x).abs() < 1e-14);
            assert!((weighted_sum(&v, &c) - y).abs() < 1e-14);
            assert!(c.iter().zip(g.lambda()).all(|(ci, l)| *ci >= 0.0 && ci <= l));
        }
    }

    #[test]
    fn single_group_is_fixed() {
        let g = GroupProfile::new(vec![0.03], vec![1.0]).unwrap();
        let o = inner_maximize(&params(), &g, 0.01, 0.01, &tight_spec()).unwrap().unwrap();
        assert_eq!(o.iterations, 0);
        assert_eq!(o.c, vec![0.01]);
    }

    #[test]
    fn objective_is_model_success_probability() {
        let p = params();
        let g = fig5_three();
        let v = g.weights(3.0);
        let c = vec![0.004, 0.01, 0.003];
        let y = weighted_sum(&v, &c);
        let problem = InnerProblem::new(&p, &g, 0.017, y);
        let strategy = CachingStrategy::new(&g, c.clone()).unwrap();
        let m = offload_gain(&p, &g, &strategy, None).unwrap();
        assert!((p.disk_area() * problem.objective(&c) - m.success_prob).abs() < 1e-13);
        for (a, b) in problem.active_ratio().iter().zip(&m.active_ratio) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn projection_is_idempotent_and_preserves_constraints() {
        let v = [0.2, 0.5, 0.9, 0.3];
        let pm = projection_matrix(&v).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let sq: f64 = (0..4).map(|k| pm[i][k] * pm[k][j]).sum();
                assert!((sq - pm[i][j]).abs() < 1e-12);
            }
        }
        let g = [0.3, -0.1, 0.7, 0.2];
        let d = projected_direction(&v, &[true; 4], &g).unwrap();
        assert!(d.iter().sum::<f64>().abs() < 1e-15);
        assert!(weighted_sum(&v, &d).abs() < 1e-15);
        // Equal weights fall back to the single row.
        let d = projected_direction(&[0.5; 3], &[true; 3], &[1.0, 2.0, 6.0]).unwrap();
        assert_eq!(d, vec![-2.0, -1.0, 3.0]);
        assert!(projected_direction(&v, &[false; 4], &g).is_err());
    }

    #[test]
    fn three_groups_match_segment_sweep() {
        // At fixed (x, y) three groups leave a 1-D segment of strategies.
        let p = params();
        let g = fig5_three();
        let v = g.weights(3.0);
        let x = 0.02;
        let (lo, hi) = y_bounds(&v, g.lambda(), x);
        let y = 0.5 * (lo + hi);
        let o = inner_maximize(&p, &g, x, y, &tight_spec()).unwrap().unwrap();
        let problem = InnerProblem::new(&p, &g, x, y);
        // Parameterize by c_1; solve the two equalities for c_2, c_3.
        let mut best = f64::NEG_INFINITY;
        let n = 200_000;
        for k in 0..=n {
            let c1 = 0.02 * k as f64 / n as f64;
            let rest_x = x - c1;
            let rest_y = y - v[0] * c1;
            let c3 = (rest_y - v[1] * rest_x) / (v[2] - v[1]);
            let c2 = rest_x - c3;
            if c2 < 0.0 || c3 < 0.0 || c2 > 0.02 || c3 > 0.02 {
                continue;
            }
            best = best.max(problem.objective(&[c1, c2, c3]));
        }
        assert!(best.is_finite());
        assert!(o.objective >= best - 1e-12, "{} vs {best}", o.objective);
        assert!((o.objective - best).abs() < 1e-4);
        assert!((o.c.iter().sum::<f64>() - x).abs() < 1e-12);
        assert!((weighted_sum(&v, &o.c) - y).abs() < 1e-12);
    }

    #[test]
    fn two_groups_match_sweep_along_total() {
        // With M = 2 each (x, y) pins c; the y-line maximum at x must equal
        // the best point of a dense sweep over {c_1 + c_2 = x}.
        let p = params();
        let g = fig5_two();
        let v = g.weights(3.0);
        let x = 0.02;
        let spec = GridSpec {
            step_y: YStep::Divisions(4000),
            ..tight_spec()
        };
        let mut grid_best = f64::NEG_INFINITY;
        for y in y_grid(&g, &v, x, spec.step_y) {
            if let Some(o) = inner_maximize(&p, &g, x, y, &spec).unwrap() {
                grid_best = grid_best.max(o.objective);
            }
        }
        let mut sweep_best = f64::NEG_INFINITY;
        for k in 0..=20_000 {
            let c1 = 0.02 * k as f64 / 20_000.0;
            let c = [c1, x - c1];
            let problem = InnerProblem::new(&p, &g, x, weighted_sum(&v, &c));
            sweep_best = sweep_best.max(problem.objective(&c));
        }
        assert!((grid_best - sweep_best).abs() < 1e-4 * sweep_best.max(1e-3), "{grid_best} vs {sweep_best}");
    }

    #[test]
    fn optimal_start_stops_immediately() {
        let p = params();
        let g = fig5_three();
        let v = g.weights(3.0);
        let x = 0.03;
        let (lo, hi) = y_bounds(&v, g.lambda(), x);
        let y = 0.4 * lo + 0.6 * hi;
        let problem = InnerProblem::new(&p, &g, x, y);
        let first = inner_maximize(&p, &g, x, y, &tight_spec()).unwrap().unwrap();
        let again = inner_maximize_from(&problem, first.c.clone(), &tight_spec()).unwrap();
        assert!(again.iterations <= 2);
        for (a, b) in again.c.iter().zip(&first.c) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn inner_ascent_is_monotone() {
        let p = params();
        let g = GroupProfile::new(vec![0.02, 0.03, 0.01, 0.04], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let v = g.weights(3.0);
        let x = 0.05;
        let (lo, hi) = y_bounds(&v, g.lambda(), x);
        let y = 0.3 * lo + 0.7 * hi;
        let problem = InnerProblem::new(&p, &g, x, y);
        let start = feasible_init(&g, &v, x, y).unwrap();
        let mut last = problem.objective(&start);
        for cap in 1..30 {
            let spec = GridSpec {
                max_inner_iterations: cap,
                ..tight_spec()
            };
            let o = inner_maximize_from(&problem, start.clone(), &spec).unwrap();
            assert!(o.objective >= last - 1e-15);
            last = o.objective;
        }
    }

    #[test]
    fn equal_biases_agree_with_unbiased_solver() {
        let p = params();
        let g = GroupProfile::unbiased(vec![0.02, 0.02]).unwrap();
        let spec = GridSpec {
            step_x: 1e-4,
            ..tight_spec()
        };
        let exact = solve_exact(&p, &g, &spec).unwrap();
        let unbiased = solve_unbiased(&p, &g, 1e-4).unwrap();
        assert!((exact.x_star - unbiased.x_star).abs() <= 1e-4 + 1e-12);
        assert!((exact.gain - unbiased.gain).abs() <= 5e-3 * unbiased.gain);
    }

    #[test]
    fn solution_is_consistent_with_model() {
        let p = params();
        let g = fig5_two();
        let exact = solve_exact(&p, &g, &GridSpec::default_for(&g)).unwrap();
        let v = g.weights(3.0);
        assert!((exact.c_star.total() - exact.x_star).abs() < 1e-8, "{exact:?}");
        assert!((weighted_sum(&v, exact.c_star.as_slice()) - exact.y_star).abs() < 1e-8);
        let m = offload_gain(&p, &g, &exact.c_star, None).unwrap();
        assert!((m.offload_gain - exact.gain).abs() < 1e-10);
        // The lower-bias group caches more.
        assert!(exact.c_star.as_slice()[0] >= exact.c_star.as_slice()[1]);
    }

    #[test]
    fn empty_network_has_zero_gain() {
        let g = GroupProfile::new(vec![0.0, 0.0], vec![0.3, 0.7]).unwrap();
        let sol = solve_exact(&params(), &g, &GridSpec::default_for(&g)).unwrap();
        assert_eq!(sol.gain, 0.0);
    }

    proptest! {
        #[test]
        fn gradient_matches_central_differences(
            seed in any::<u64>(),
            alpha in 2.5f64..5.0,
            db in 0.0f64..10.0,
        ) {
            let p = SystemParams::from_db(alpha, db, 15.0, 20.0, 1e-4, 15.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lambda: Vec<f64> = (0..3).map(|_| 0.01 + 0.09 * rng.random::<f64>()).collect();
            let raw: Vec<f64> = (0..3).map(|_| 0.05 + rng.random::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            let g = GroupProfile::new(lambda.clone(), raw.iter().map(|b| b / s).collect()).unwrap();
            let c: Vec<f64> = lambda.iter().map(|l| l * (0.05 + 0.9 * rng.random::<f64>())).collect();
            let v = g.weights(alpha);
            let problem = InnerProblem::new(&p, &g, c.iter().sum(), weighted_sum(&v, &c));
            let grad = problem.gradient(&c);
            for i in 0..3 {
                let h = 1e-6 * c[i];
                let mut up = c.clone();
                let mut down = c.clone();
                up[i] += h;
                down[i] -= h;
                let fd = (problem.objective(&up) - problem.objective(&down)) / (2.0 * h);
                prop_assert!(((fd - grad[i]) / grad[i]).abs() < 1e-6);
            }
        }

        #[test]
        fn directions_keep_both_totals(
            v in prop::collection::vec(0.01f64..1.0, 2..6),
            g in prop::collection::vec(-1.0f64..1.0, 6),
        ) {
            let m = v.len();
            let d = projected_direction(&v, &vec![true; m], &g[..m]).unwrap();
            prop_assert!(d.iter().sum::<f64>().abs() < 1e-10);
            prop_assert!(weighted_sum(&v, &d).abs() < 1e-10);
            let twice = projected_direction(&v, &vec![true; m], &d).unwrap();
            let err = twice.iter().zip(&d).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(err <= 1e-10);
        }
    }
}
