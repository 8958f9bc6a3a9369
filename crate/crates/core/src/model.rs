//! Network parameters, per-group profiles and the closed-form performance
//! metrics: association probability, active ratio, D2D success probability
//! and offloading gain.

use crate::error::{Error, Result};
use crate::numerics::{regularized_lower_gamma, theta_bs, theta_interference};
use std::f64::consts::PI;

/// Shape of the gamma law approximating Poisson–Voronoi cell areas.
pub const CELL_SHAPE: f64 = 3.5;

/// Slack allowed before a computed probability is reported as inconsistent.
pub const PROBABILITY_SLACK: f64 = 1e-9;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Physical-layer constants. The two interference coefficients are computed
/// once on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    alpha: f64,
    gamma_th: f64,
    p_t: f64,
    p_b: f64,
    lambda_b: f64,
    r_max: f64,
    theta_i: f64,
    theta_b: f64,
}

impl SystemParams {
    /// `gamma_th` is linear; powers are in watts.
    pub fn new(alpha: f64, gamma_th: f64, p_t: f64, p_b: f64, lambda_b: f64, r_max: f64) -> Result<Self> {
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::domain(format!("D2D range must be positive, got {r_max}")));
        }
        if !(lambda_b >= 0.0 && lambda_b.is_finite()) {
            return Err(Error::domain(format!("BS density must be >= 0, got {lambda_b}")));
        }
        if !(p_t > 0.0 && p_t.is_finite()) {
            return Err(Error::domain(format!("D2D transmit power must be > 0, got {p_t}")));
        }
        if !(p_b >= 0.0 && p_b.is_finite()) {
            return Err(Error::domain(format!("BS transmit power must be >= 0, got {p_b}")));
        }
        let theta_i = theta_interference(alpha, gamma_th)?;
        let theta_b = if p_b == 0.0 {
            0.0
        } else {
            theta_bs(alpha, gamma_th, p_b / p_t)?
        };
        Ok(Self {
            alpha,
            gamma_th,
            p_t,
            p_b,
            lambda_b,
            r_max,
            theta_i,
            theta_b,
        })
    }

    /// Threshold in dB and powers in dBm.
    pub fn from_db(
        alpha: f64,
        gamma_th_db: f64,
        p_t_dbm: f64,
        p_b_dbm: f64,
        lambda_b: f64,
        r_max: f64,
    ) -> Result<Self> {
        Self::new(
            alpha,
            db_to_linear(gamma_th_db),
            dbm_to_watts(p_t_dbm),
            dbm_to_watts(p_b_dbm),
            lambda_b,
            r_max,
        )
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn gamma_th(&self) -> f64 {
        self.gamma_th
    }
    pub fn p_t(&self) -> f64 {
        self.p_t
    }
    pub fn p_b(&self) -> f64 {
        self.p_b
    }
    pub fn power_ratio(&self) -> f64 {
        self.p_b / self.p_t
    }
    pub fn lambda_b(&self) -> f64 {
        self.lambda_b
    }
    pub fn r_max(&self) -> f64 {
        self.r_max
    }
    pub fn theta_i(&self) -> f64 {
        self.theta_i
    }
    pub fn theta_b(&self) -> f64 {
        self.theta_b
    }

    /// `πR²`, the area of the D2D disk.
    pub fn disk_area(&self) -> f64 {
        PI * self.r_max * self.r_max
    }

    /// BS interference load `λ_B θ_B`.
    pub fn bs_load(&self) -> f64 {
        self.lambda_b * self.theta_b
    }

    pub fn with_r_max(&self, r_max: f64) -> Result<Self> {
        Self::new(self.alpha, self.gamma_th, self.p_t, self.p_b, self.lambda_b, r_max)
    }

    pub fn with_gamma_th(&self, gamma_th: f64) -> Result<Self> {
        Self::new(self.alpha, gamma_th, self.p_t, self.p_b, self.lambda_b, self.r_max)
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(alpha, self.gamma_th, self.p_t, self.p_b, self.lambda_b, self.r_max)
    }
}

/// Interested-user densities and trust biases of the user groups.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupProfile {
    lambda: Vec<f64>,
    bias: Vec<f64>,
}

impl GroupProfile {
    pub fn new(lambda: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() {
            return Err(Error::domain("at least one user group is required"));
        }
        if lambda.len() != bias.len() {
            return Err(Error::domain(format!(
                "{} densities but {} biases",
                lambda.len(),
                bias.len()
            )));
        }
        if let Some(l) = lambda.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return Err(Error::domain(format!("user densities must be >= 0, got {l}")));
        }
        if let Some(b) = bias.iter().find(|b| !(**b >= 0.0 && **b <= 1.0)) {
            return Err(Error::domain(format!("biases must lie in [0, 1], got {b}")));
        }
        let total: f64 = bias.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("biases must sum to 1, got {total}")));
        }
        Ok(Self { lambda, bias })
    }

    /// Groups with biases derived from verified-content counts.
    pub fn from_counts(lambda: Vec<f64>, counts: &TrustCounts) -> Result<Self> {
        Self::new(lambda, trust_bias_from_counts(counts)?)
    }

    /// Equal biases `1/M`.
    pub fn unbiased(lambda: Vec<f64>) -> Result<Self> {
        let m = lambda.len().max(1);
        Self::new(lambda, vec![1.0 / m as f64; m])
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }
    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }
    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Total interested-user density `λ_0`.
    pub fn total_lambda(&self) -> f64 {
        self.lambda.iter().sum()
    }

    /// Association weights `B_m^{2/α}`.
    pub fn weights(&self, alpha: f64) -> Vec<f64> {
        self.bias.iter().map(|b| b.powf(2.0 / alpha)).collect()
    }

    pub fn has_equal_biases(&self, tol: f64) -> bool {
        let b0 = self.bias[0];
        self.bias.iter().all(|b| (b - b0).abs() <= tol)
    }
}

/// Per-group caching densities.
#[derive(Debug, Clone, PartialEq)]
pub struct CachingStrategy {
    c: Vec<f64>,
}

impl CachingStrategy {
    pub fn new(groups: &GroupProfile, c: Vec<f64>) -> Result<Self> {
        if c.len() != groups.len() {
            return Err(Error::domain(format!(
                "{} caching densities for {} groups",
                c.len(),
                groups.len()
            )));
        }
        for (m, (&cm, &lm)) in c.iter().zip(groups.lambda()).enumerate() {
            if !(cm >= 0.0 && cm <= lm * (1.0 + 1e-12)) {
                return Err(Error::domain(format!(
                    "caching density of group {} must lie in [0, {lm}], got {cm}",
                    m + 1
                )));
            }
        }
        Ok(Self { c })
    }

    /// Builds a strategy after clamping each entry into its box, for
    /// optimizer outputs carrying rounding noise.
    pub fn clamped(groups: &GroupProfile, c: Vec<f64>) -> Result<Self> {
        let c = c
            .into_iter()
            .zip(groups.lambda())
            .map(|(cm, &lm)| cm.clamp(0.0, lm))
            .collect();
        Self::new(groups, c)
    }

    pub fn zeros(groups: &GroupProfile) -> Self {
        Self { c: vec![0.0; groups.len()] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.c
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.c
    }

    pub fn total(&self) -> f64 {
        self.c.iter().sum()
    }
}

/// Verified-content counts per group.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustCounts {
    pub counts: Vec<f64>,
}

/// Analytic metrics of one caching strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub assoc_prob: Vec<f64>,
    pub active_ratio: Vec<f64>,
    /// `φ_m`, the normalized interference term of each group.
    pub interference: Vec<f64>,
    pub success_prob_given_group: Vec<f64>,
    pub success_prob: f64,
    /// Offloaded requesters per unit area.
    pub offload_gain: f64,
    /// `ℙ_s (λ_m − c_m)` for each group.
    pub offload_gain_by_group: Vec<f64>,
    /// Offloaded requesters over an area, when one was supplied.
    pub offload_gain_abs: Option<f64>,
}

/// Normalizes verified-content counts into trust biases.
pub fn trust_bias_from_counts(counts: &TrustCounts) -> Result<Vec<f64>> {
    if let Some(n) = counts.counts.iter().find(|n| !(**n >= 0.0 && n.is_finite())) {
        return Err(Error::domain(format!("trust counts must be >= 0, got {n}")));
    }
    let total: f64 = counts.counts.iter().sum();
    if !(total > 0.0) {
        return Err(Error::domain("at least one trust count must be positive"));
    }
    Ok(counts.counts.iter().map(|n| n / total).collect())
}

// Below this the kernels switch to their Taylor series.
const SERIES_CUTOFF: f64 = 1.0;
const SERIES_TERMS: i32 = 30;

/// `(1 − e^{−t})/t` without argument checks.
pub(crate) fn kernel(t: f64) -> f64 {
    if t < SERIES_CUTOFF {
        // Σ_k (−t)^k / (k+1)!
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..SERIES_TERMS {
            term *= -t / (k + 1) as f64;
            sum += term;
        }
        sum
    } else {
        -(-t).exp_m1() / t
    }
}

pub(crate) fn kernel_d1(t: f64) -> f64 {
    if t < SERIES_CUTOFF {
        // Σ_{k≥1} k (−1)^k t^{k−1} / (k+1)!
        let mut pow = 1.0;
        let mut fact = 2.0;
        let mut sum = 0.0;
        for k in 1..SERIES_TERMS {
            sum += k as f64 * if k % 2 == 1 { -pow } else { pow } / fact;
            pow *= t;
            fact *= (k + 2) as f64;
        }
        sum
    } else {
        (-t).exp() * (t - t.exp() + 1.0) / (t * t)
    }
}

pub(crate) fn kernel_d2(t: f64) -> f64 {
    if t < SERIES_CUTOFF {
        // Σ_{k≥2} k (k−1) (−1)^k t^{k−2} / (k+1)!
        let mut pow = 1.0;
        let mut fact = 6.0;
        let mut sum = 0.0;
        for k in 2..SERIES_TERMS {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * (k * (k - 1)) as f64 * pow / fact;
            pow *= t;
            fact *= (k + 2) as f64;
        }
        sum
    } else {
        (-t).exp() * (-2.0 + 2.0 * t.exp() - 2.0 * t - t * t) / (t * t * t)
    }
}

fn check_kernel_arg(t: f64) -> Result<()> {
    if t >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("kernel argument must be >= 0, got {t}")))
    }
}

/// `f(t) = (1 − e^{−t})/t`, with `f(0) = 1`.
pub fn f_kernel(t: f64) -> Result<f64> {
    check_kernel_arg(t)?;
    Ok(kernel(t))
}

/// `f'(t) = e^{−t}(t − e^t + 1)/t²`.
pub fn f_kernel_derivative(t: f64) -> Result<f64> {
    check_kernel_arg(t)?;
    Ok(kernel_d1(t))
}

/// `f''(t) = e^{−t}(−2 + 2e^t − 2t − t²)/t³`.
pub fn f_kernel_second_derivative(t: f64) -> Result<f64> {
    check_kernel_arg(t)?;
    Ok(kernel_d2(t))
}

/// Association probabilities from weights and densities; `disk_area = πR²`.
pub(crate) fn assoc_prob_raw(disk_area: f64, v: &[f64], c: &[f64]) -> Vec<f64> {
    let y: f64 = v.iter().zip(c).map(|(vi, ci)| vi * ci).sum();
    v.iter()
        .zip(c)
        .map(|(&vm, &cm)| {
            if y <= 0.0 || vm <= 0.0 || cm <= 0.0 {
                0.0
            } else {
                vm * cm / y * -(-disk_area * y / vm).exp_m1()
            }
        })
        .collect()
}

/// Fraction of UTs selected by at least one requester.
///
/// `ut_per_assoc` is `c_m/𝒫_m`, the UT density per unit association
/// probability; the Voronoi-cell rate is `3.5·ut_per_assoc`. Returns 0 when
/// either argument is 0.
pub fn active_ratio_at(disk_area: f64, requester_density: f64, ut_per_assoc: f64) -> f64 {
    if !(ut_per_assoc > 0.0) || !(requester_density > 0.0) {
        return 0.0;
    }
    let k = CELL_SHAPE * ut_per_assoc;
    let lead = (1.0 + requester_density / k).powf(-CELL_SHAPE);
    let num = regularized_lower_gamma(CELL_SHAPE, (requester_density + k) * disk_area).unwrap_or(1.0);
    let den = regularized_lower_gamma(CELL_SHAPE, k * disk_area).unwrap_or(1.0);
    if den <= 0.0 {
        // Both truncations vanish; the ratio tends to (1 + Λ/k)^{3.5}.
        return 0.0;
    }
    1.0 - lead * num / den
}

/// Probability that the serving UT of a typical requester belongs to each group.
pub fn assoc_prob(params: &SystemParams, groups: &GroupProfile, c: &CachingStrategy) -> Vec<f64> {
    assoc_prob_raw(params.disk_area(), &groups.weights(params.alpha), c.as_slice())
}

/// Active ratio of each group's UTs given the association probabilities.
pub fn active_ratio(
    params: &SystemParams,
    groups: &GroupProfile,
    c: &CachingStrategy,
    assoc: &[f64],
) -> Vec<f64> {
    let requesters = groups.total_lambda() - c.total();
    c.as_slice()
        .iter()
        .zip(assoc)
        .map(|(&cm, &pm)| {
            if cm <= 0.0 || pm <= 0.0 {
                0.0
            } else {
                active_ratio_at(params.disk_area(), requesters.max(0.0), cm / pm)
            }
        })
        .collect()
}

fn check_probability(what: &str, value: f64) -> Result<()> {
    if value >= -PROBABILITY_SLACK && value <= 1.0 + PROBABILITY_SLACK {
        Ok(())
    } else {
        Err(Error::Consistency {
            what: what.to_string(),
            value,
        })
    }
}

/// Evaluates every analytic metric of `c`.
pub fn success_prob(params: &SystemParams, groups: &GroupProfile, c: &CachingStrategy) -> Result<Metrics> {
    let area = params.disk_area();
    let v = groups.weights(params.alpha);
    let cs = c.as_slice();
    let y: f64 = v.iter().zip(cs).map(|(vi, ci)| vi * ci).sum();
    let assoc = assoc_prob_raw(area, &v, cs);
    let rho = active_ratio(params, groups, c, &assoc);

    let mut interference = vec![0.0; cs.len()];
    let mut given = vec![0.0; cs.len()];
    let mut ps = 0.0;
    for m in 0..cs.len() {
        if v[m] <= 0.0 || cs[m] <= 0.0 {
            continue;
        }
        let phi = area * (y / v[m] + params.bs_load() + cs[m] * rho[m] * params.theta_i);
        interference[m] = phi;
        let share = area * cs[m] * kernel(phi);
        ps += share;
        if assoc[m] > 0.0 {
            given[m] = share / assoc[m];
        }
    }

    let total_assoc: f64 = assoc.iter().sum();
    check_probability("sum of association probabilities", total_assoc)?;
    for m in 0..cs.len() {
        check_probability(&format!("association probability of group {}", m + 1), assoc[m])?;
        check_probability(&format!("active ratio of group {}", m + 1), rho[m])?;
        check_probability(&format!("success probability of group {}", m + 1), given[m])?;
    }
    check_probability("success probability", ps)?;
    let recombined: f64 = assoc.iter().zip(&given).map(|(p, g)| p * g).sum();
    if (recombined - ps).abs() > PROBABILITY_SLACK {
        return Err(Error::Consistency {
            what: "success probability recombined from groups".into(),
            value: recombined,
        });
    }

    let requesters = groups.total_lambda() - c.total();
    Ok(Metrics {
        offload_gain: requesters * ps,
        offload_gain_by_group: groups
            .lambda()
            .iter()
            .zip(cs)
            .map(|(l, cm)| ps * (l - cm))
            .collect(),
        assoc_prob: assoc,
        active_ratio: rho,
        interference,
        success_prob_given_group: given,
        success_prob: ps,
        offload_gain_abs: None,
    })
}

/// [`success_prob`] with the gain also scaled to an area, if given (m²).
pub fn offload_gain(
    params: &SystemParams,
    groups: &GroupProfile,
    c: &CachingStrategy,
    area: Option<f64>,
) -> Result<Metrics> {
    let mut m = success_prob(params, groups, c)?;
    m.offload_gain_abs = area.map(|a| a * m.offload_gain);
    Ok(m)
}
