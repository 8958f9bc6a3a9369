//! Comparison caching policies and a common driver for all four policies.

use crate::error::{Error, Result};
use crate::model::{offload_gain, CachingStrategy, GroupProfile, SystemParams};
use crate::opt::asymptotic::{solve_asymptotic, SorSettings};
use crate::opt::exact::{solve_exact, GridSpec};
use crate::opt::unbiased::solve_unbiased;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyId {
    ProposedExact,
    ProposedAsymptotic,
    Uniform,
    OneUt,
}

impl PolicyId {
    pub const ALL: [PolicyId; 4] = [
        PolicyId::ProposedExact,
        PolicyId::ProposedAsymptotic,
        PolicyId::Uniform,
        PolicyId::OneUt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyId::ProposedExact => "proposed_exact",
            PolicyId::ProposedAsymptotic => "proposed_asymptotic",
            PolicyId::Uniform => "uniform",
            PolicyId::OneUt => "one_ut",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }
}

/// Every group caches at density `δ`, capped by its user density.
pub fn policy_one_ut(groups: &GroupProfile, delta: f64) -> Result<CachingStrategy> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::domain(format!("one-UT density must be >= 0, got {delta}")));
    }
    CachingStrategy::new(groups, groups.lambda().iter().map(|&l| delta.min(l)).collect())
}

/// The unbiased-case optimum computed as if all biases were equal. The
/// result should be evaluated with the true biases.
pub fn policy_uniform(params: &SystemParams, groups: &GroupProfile, step_x: f64) -> Result<CachingStrategy> {
    let blind = GroupProfile::unbiased(groups.lambda().to_vec())?;
    let sol = solve_unbiased(params, &blind, step_x)?;
    CachingStrategy::new(groups, sol.c_star.into_vec())
}

/// Solver controls shared by [`run_policy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySettings {
    pub grid: GridSpec,
    pub sor: SorSettings,
    /// `x` step of the unbiased and asymptotic sweeps.
    pub step_x: f64,
    /// Density used by the one-UT policy.
    pub one_ut_delta: f64,
}

impl PolicySettings {
    /// Uses the exact grid's `δ_x` for every sweep and for the one-UT density.
    pub fn default_for(groups: &GroupProfile) -> Self {
        let grid = GridSpec::default_for(groups);
        Self {
            grid,
            sor: SorSettings::default(),
            step_x: grid.step_x,
            one_ut_delta: grid.step_x,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutcome {
    pub policy: PolicyId,
    pub c: CachingStrategy,
    /// Total caching density `Σc_m`.
    pub x: f64,
    /// `Σ B_m^{2/α} c_m` at the chosen strategy.
    pub y: f64,
    /// Offloading gain of `c` under the full model with the true biases.
    pub gain: f64,
    /// Objective value reported by the policy's own solver, which differs
    /// from `gain` for the asymptotic policy.
    pub reported_gain: f64,
    pub iterations: usize,
    pub seconds: f64,
}

/// Runs one policy and evaluates its strategy under the full model.
pub fn run_policy(
    params: &SystemParams,
    groups: &GroupProfile,
    policy: PolicyId,
    settings: &PolicySettings,
) -> Result<PolicyOutcome> {
    let start = Instant::now();
    let (c, reported, iterations) = match policy {
        PolicyId::ProposedExact => {
            let s = solve_exact(params, groups, &settings.grid)?;
            (s.c_star, Some(s.gain), s.iterations_total)
        }
        PolicyId::ProposedAsymptotic => {
            let s = solve_asymptotic(params, groups, settings.step_x, &settings.sor)?;
            (s.c_star, Some(s.gain_lower), s.iterations_total)
        }
        PolicyId::Uniform => (policy_uniform(params, groups, settings.step_x)?, None, 0),
        PolicyId::OneUt => (policy_one_ut(groups, settings.one_ut_delta)?, None, 0),
    };
    let gain = offload_gain(params, groups, &c, None)?.offload_gain;
    let weights = groups.weights(params.alpha());
    Ok(PolicyOutcome {
        policy,
        x: c.total(),
        y: weights.iter().zip(c.as_slice()).map(|(v, ci)| v * ci).sum(),
        c,
        gain,
        reported_gain: reported.unwrap_or(gain),
        iterations,
        seconds: start.elapsed().as_secs_f64(),
    })
}
