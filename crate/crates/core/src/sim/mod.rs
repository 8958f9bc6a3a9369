//! Monte-Carlo simulator of the network model: Poisson users thinned into
//! UTs and URs, maximum biased-power association, Rayleigh fading and SIR
//! at a reference requester placed at the window centre.

pub mod fading;
mod realization;

pub use realization::{associate, draw_realization, measure_sir, Point, Realization, Receiver, UtId};

use crate::error::{Error, Result};
use crate::model::{CachingStrategy, GroupProfile, SystemParams};
use rayon::prelude::*;

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.575_829_303_548_901;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    /// Periodic window. Association and serving distances use the nearest
    /// copy; interference sums over `(2k+1)²` copies with `k = image_shells`.
    Torus { image_shells: usize },
    /// Plain window; gain counts only requesters at least `margin` from the edge.
    Guard { margin: f64 },
}

impl Default for Boundary {
    fn default() -> Self {
        Boundary::Torus { image_shells: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Side of the square window in metres.
    pub window_side: f64,
    pub realizations: usize,
    pub seed: u64,
    pub boundary: Boundary,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            window_side: 100.0,
            realizations: 2000,
            seed: 1,
            boundary: Boundary::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self, params: &SystemParams) -> Result<()> {
        if !(self.window_side > 0.0 && self.window_side.is_finite()) {
            return Err(Error::domain(format!("window side must be positive, got {}", self.window_side)));
        }
        if self.realizations == 0 {
            return Err(Error::domain("at least one realization is required"));
        }
        match self.boundary {
            Boundary::Guard { margin } => {
                if !(margin >= 0.0 && margin < self.window_side / 2.0) {
                    return Err(Error::domain(format!(
                        "guard margin must lie in [0, {}), got {margin}",
                        self.window_side / 2.0
                    )));
                }
            }
            Boundary::Torus { .. } => {
                if params.r_max() > self.window_side / 2.0 {
                    return Err(Error::domain(format!(
                        "D2D range {} exceeds half the torus side {}",
                        params.r_max(),
                        self.window_side
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Point estimate with its 99% normal-approximation half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEstimate {
    pub mean: f64,
    /// Standard error of the mean; NaN for a single realization.
    pub std_error: f64,
    pub ci99_half: f64,
    pub realizations: usize,
}

fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

impl SimEstimate {
    /// Sample mean of per-realization values.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = pairwise_sum(xs) / n as f64;
        let std_error = if n < 2 {
            f64::NAN
        } else {
            let sq: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
            (pairwise_sum(&sq) / (n - 1) as f64 / n as f64).sqrt()
        };
        Self::with_error(mean, std_error, n)
    }

    /// Pooled ratio `Σnum / Σden` with a delta-method standard error.
    /// `None` when the denominator never occurred.
    pub fn ratio(num: &[f64], den: &[f64]) -> Option<Self> {
        let n = num.len();
        let total = pairwise_sum(den);
        if total <= 0.0 {
            return None;
        }
        let r = pairwise_sum(num) / total;
        let std_error = if n < 2 {
            f64::NAN
        } else {
            let resid: Vec<f64> = num.iter().zip(den).map(|(a, b)| (a - r * b).powi(2)).collect();
            let mean_den = total / n as f64;
            (pairwise_sum(&resid) / (n - 1) as f64 / n as f64).sqrt() / mean_den
        };
        Some(Self::with_error(r, std_error, n))
    }

    fn with_error(mean: f64, std_error: f64, realizations: usize) -> Self {
        Self {
            mean,
            std_error,
            ci99_half: Z99 * std_error,
            realizations,
        }
    }

    fn scaled(self, k: f64) -> Self {
        Self::with_error(self.mean * k, self.std_error * k.abs(), self.realizations)
    }
}

/// How much of each realization to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Workload {
    /// SIR of the reference requester only.
    ReferenceOnly,
    /// Also the SIR of every drawn requester, for the counted offloading gain.
    AllRequesters,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    SuccessProb,
    AssocProb,
    ActiveRatio,
    OffloadGain,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::SuccessProb => "success_prob",
            Metric::AssocProb => "assoc_prob",
            Metric::ActiveRatio => "active_ratio",
            Metric::OffloadGain => "offload_gain",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Metric::SuccessProb, Metric::AssocProb, Metric::ActiveRatio, Metric::OffloadGain]
            .into_iter()
            .find(|m| m.name() == s)
    }
}

/// Aggregated estimates over all realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub realizations: usize,
    pub seed: u64,
    pub success_prob: SimEstimate,
    /// Frequency with which the reference requester is served by each group.
    pub assoc_prob: Vec<SimEstimate>,
    /// `None` for a group that never served the reference requester.
    pub success_prob_given_group: Vec<Option<SimEstimate>>,
    /// `None` for a group that never had a UT.
    pub active_ratio: Vec<Option<SimEstimate>>,
    /// UTs per unit area.
    pub ut_density: Vec<SimEstimate>,
    /// Successfully served drawn requesters per unit area; only with
    /// [`Workload::AllRequesters`].
    pub offload_gain: Option<SimEstimate>,
    /// Estimated success probability times the requester density.
    pub offload_gain_via_success: SimEstimate,
}

#[derive(Debug, Clone)]
struct Sample {
    reference_group: Option<usize>,
    reference_sir: Option<f64>,
    uts: Vec<f64>,
    active: Vec<f64>,
    served_density: f64,
}

fn run_one(
    params: &SystemParams,
    groups: &GroupProfile,
    c: &CachingStrategy,
    cfg: &SimConfig,
    index: u64,
    workload: Workload,
) -> Sample {
    let real = associate(draw_realization(params, groups, c, cfg, index), params);
    let reference_sir = measure_sir(&real, params, Receiver::Reference);
    let mut served = 0usize;
    if workload == Workload::AllRequesters {
        let gamma = params.gamma_th();
        for (group, pts) in real.urs.iter().enumerate() {
            for (i, &p) in pts.iter().enumerate() {
                if !real.in_counted_region(p) {
                    continue;
                }
                let sir = measure_sir(&real, params, Receiver::Requester { group, index: i });
                if sir.is_some_and(|s| s >= gamma) {
                    served += 1;
                }
            }
        }
    }
    Sample {
        reference_group: real.reference_association.map(|id| id.group),
        reference_sir,
        uts: real.uts.iter().map(|g| g.len() as f64).collect(),
        active: real.active.iter().map(|g| g.iter().filter(|a| **a).count() as f64).collect(),
        served_density: served as f64 / real.counted_area(),
    }
}

fn run_samples(
    params: &SystemParams,
    groups: &GroupProfile,
    c: &CachingStrategy,
    cfg: &SimConfig,
    workload: Workload,
) -> Result<Vec<Sample>> {
    cfg.validate(params)?;
    if c.as_slice().len() != groups.len() {
        return Err(Error::domain("caching strategy and group profile differ in length"));
    }
    Ok((0..cfg.realizations as u64)
        .into_par_iter()
        .map(|i| run_one(params, groups, c, cfg, i, workload))
        .collect())
}

fn success_indicator(sir: Option<f64>, gamma: f64) -> f64 {
    if sir.is_some_and(|s| s >= gamma) {
        1.0
    } else {
        0.0
    }
}

/// Runs every realization and aggregates all metrics. Results are
/// bit-identical for a given seed regardless of the worker count.
pub fn simulate(
    params: &SystemParams,
    groups: &GroupProfile,
    c: &CachingStrategy,
    cfg: &SimConfig,
    workload: Workload,
) -> Result<SimReport> {
    let samples = run_samples(params, groups, c, cfg, workload)?;
    let gamma = params.gamma_th();
    let area = cfg.window_side * cfg.window_side;
    let column = |f: &dyn Fn(&Sample) -> f64| samples.iter().map(f).collect::<Vec<f64>>();

    let success = column(&|s| success_indicator(s.reference_sir, gamma));
    let success_prob = SimEstimate::from_samples(&success);
    let m = groups.len();
    let mut assoc_prob = Vec::with_capacity(m);
    let mut given = Vec::with_capacity(m);
    let mut active_ratio = Vec::with_capacity(m);
    let mut ut_density = Vec::with_capacity(m);
    for g in 0..m {
        let served_by = column(&|s| if s.reference_group == Some(g) { 1.0 } else { 0.0 });
        let ok_by = column(&|s| {
            if s.reference_group == Some(g) {
                success_indicator(s.reference_sir, gamma)
            } else {
                0.0
            }
        });
        assoc_prob.push(SimEstimate::from_samples(&served_by));
        given.push(SimEstimate::ratio(&ok_by, &served_by));
        let uts = column(&|s| s.uts[g]);
        active_ratio.push(SimEstimate::ratio(&column(&|s| s.active[g]), &uts));
        ut_density.push(SimEstimate::from_samples(&uts).scaled(1.0 / area));
    }
    let requesters = (groups.total_lambda() - c.total()).max(0.0);
    let offload_gain =
        (workload == Workload::AllRequesters).then(|| SimEstimate::from_samples(&column(&|s| s.served_density)));
    Ok(SimReport {
        realizations: cfg.realizations,
        seed: cfg.seed,
        success_prob,
        assoc_prob,
        success_prob_given_group: given,
        active_ratio,
        ut_density,
        offload_gain,
        offload_gain_via_success: success_prob.scaled(requesters),
    })
}

/// Estimates one metric; per-group metrics return one entry per group.
pub fn estimate(
    params: &SystemParams,
    groups: &GroupProfile,
    c: &CachingStrategy,
    cfg: &SimConfig,
    metric: Metric,
) -> Result<Vec<SimEstimate>> {
    let workload = if metric == Metric::OffloadGain {
        Workload::AllRequesters
    } else {
        Workload::ReferenceOnly
    };
    let report = simulate(params, groups, c, cfg, workload)?;
    report.metric(metric)
}

impl SimReport {
    /// Extracts one metric, failing when it is conditioned on an event that
    /// never occurred.
    pub fn metric(&self, metric: Metric) -> Result<Vec<SimEstimate>> {
        match metric {
            Metric::SuccessProb => Ok(vec![self.success_prob]),
            Metric::AssocProb => Ok(self.assoc_prob.clone()),
            Metric::ActiveRatio => self
                .active_ratio
                .iter()
                .enumerate()
                .map(|(g, e)| e.ok_or_else(|| Error::DegenerateEstimate(format!("group {} never had a UT", g + 1))))
                .collect(),
            Metric::OffloadGain => self
                .offload_gain
                .map(|e| vec![e])
                .ok_or_else(|| Error::domain("offload gain needs the all-requester workload")),
        }
    }
}

/// SIR of the reference requester in each realization (`None` when it has no
/// server). The geometry does not depend on the threshold, so one call
/// serves a whole threshold sweep via [`success_from_sir`].
pub fn reference_sir_samples(
    params: &SystemParams,
    groups: &GroupProfile,
    c: &CachingStrategy,
    cfg: &SimConfig,
) -> Result<Vec<Option<f64>>> {
    Ok(run_samples(params, groups, c, cfg, Workload::ReferenceOnly)?
        .into_iter()
        .map(|s| s.reference_sir)
        .collect())
}

/// Success frequency at a linear threshold.
pub fn success_from_sir(samples: &[Option<f64>], gamma_th: f64) -> SimEstimate {
    let xs: Vec<f64> = samples.iter().map(|s| success_indicator(*s, gamma_th)).collect();
    SimEstimate::from_samples(&xs)
}
