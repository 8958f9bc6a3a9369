//! Data series behind figures 1–12. Each figure starts from built-in
//! defaults that any config key can override.

use crate::baselines::{run_policy, PolicyId};
use crate::config::{ExperimentConfig, RawConfig};
use crate::error::{Error, Result};
use crate::model::{success_prob, CachingStrategy, GroupProfile, SystemParams};
use crate::numerics::project_capped_simplex;
use crate::opt::asymptotic::{ps_infinity, solve_asymptotic, solve_sor_from, SorProblem};
use crate::opt::exact::solve_exact;
use crate::opt::unbiased::inner_allocate;
use crate::sim::{reference_sir_samples, simulate, success_from_sir, Workload};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct FigureRow {
    pub x: f64,
    pub series: String,
    pub value: f64,
    pub ci99_half: Option<f64>,
}

const FIG1_GROUPS: &str = "
groups.lambda = 0.1, 0.1, 0.1
groups.bias = 0.1, 0.3, 0.6
";

const TWO_GROUPS: &str = "
groups.bias = 0.1, 0.9
system.alpha = 3
system.gamma_th_db = 3
system.r_max = 15
";

/// Built-in configuration of a figure.
pub fn defaults(id: u32) -> Result<RawConfig> {
    let body = match id {
        1 => format!(
            "{FIG1_GROUPS}strategy.c = 0.05, 0.09, 0.08\nfigure.x = 0, 2, 4, 6, 8, 10\nfigure.alpha = 3, 4\nfigure.simulate = true"
        ),
        2 => format!(
            "{FIG1_GROUPS}figure.x = 0.02, 0.04, 0.06, 0.08, 0.1\nfigure.series = 10, 15, 20\nfigure.simulate = true"
        ),
        3 => format!(
            "{FIG1_GROUPS}strategy.c = 0.05, 0.09, 0.08\nfigure.x = 0, 2, 4, 6, 8, 10\nfigure.series = 5, 10, 15, 20, 30\nfigure.alpha = 3, 4"
        ),
        4 => format!("{FIG1_GROUPS}figure.x = 0.02, 0.04, 0.06, 0.08, 0.1\nfigure.series = 5, 10, 15, 20, 30"),
        5 => format!(
            "{TWO_GROUPS}groups.lambda = 0.02, 0.02\nfigure.xbar = 0.02\nfigure.extra_lambda = 0.02, 0.02, 0.02\nfigure.extra_bias = 0.1, 0.4, 0.5"
        ),
        6 => format!("{TWO_GROUPS}groups.lambda = 0.02, 0.02\nfigure.x = 5, 10, 15, 20, 25, 30\nfigure.alpha = 3, 4"),
        7 => format!("{TWO_GROUPS}groups.lambda = 0.02, 0.02\nfigure.x = 0.02, 0.04, 0.06, 0.08, 0.1"),
        8 => format!("{TWO_GROUPS}groups.lambda = 0.04, 0.02\nfigure.x = 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9"),
        9 => format!("{TWO_GROUPS}groups.lambda = 0.03, 0.01\nfigure.x = 0, 2, 4, 6, 8, 10"),
        10 => format!("{TWO_GROUPS}groups.lambda = 0.03, 0.01\nfigure.x = 3, 3.5, 4, 4.5, 5"),
        11 => format!(
            "{TWO_GROUPS}groups.lambda = 0.1, 0.1\nfigure.x = 0.2, 0.4, 0.6, 0.8, 1\nfigure.series = 0.1, 0.2, 0.4, 0.6, 0.8, 1"
        ),
        12 => format!(
            "{TWO_GROUPS}groups.lambda = 0.05, 0.05\ngroups.trust_count = 10, 1\nfigure.x = 0, 2, 4, 6, 8, 10\nfigure.alpha = 3, 4"
        )
        .replace("groups.bias = 0.1, 0.9\n", ""),
        _ => return Err(Error::config("figure.id", format!("unknown figure {id}; expected 1..=12"))),
    };
    let mut raw = RawConfig::parse(&body)?;
    raw.set("figure.id", &id.to_string())?;
    Ok(raw)
}

fn params_at(cfg: &ExperimentConfig, alpha: f64, gamma_db: f64, r_max: f64) -> Result<SystemParams> {
    let s = &cfg.system;
    SystemParams::from_db(alpha, gamma_db, s.p_t_dbm, s.p_b_dbm, s.lambda_b, r_max)
}

fn row(x: f64, series: impl Into<String>, value: f64) -> FigureRow {
    FigureRow {
        x,
        series: series.into(),
        value,
        ci99_half: None,
    }
}

fn label(v: f64) -> String {
    v.to_string()
}

/// Every group at the same density with half of it caching.
fn equal_density(cfg: &ExperimentConfig, lambda: f64) -> Result<(GroupProfile, CachingStrategy)> {
    let m = cfg.profile().len();
    let groups = GroupProfile::new(vec![lambda; m], cfg.profile().bias().to_vec())?;
    let c = CachingStrategy::new(&groups, vec![0.5 * lambda; m])?;
    Ok((groups, c))
}

pub fn run(cfg: &ExperimentConfig) -> Result<Vec<FigureRow>> {
    let id = cfg
        .figure
        .id
        .ok_or_else(|| Error::config("figure.id", "no figure selected"))?;
    match id {
        1 => success_vs_threshold(cfg),
        2 => success_vs_density(cfg),
        3 => gap_vs_threshold(cfg),
        4 => gap_vs_density(cfg),
        5 => convergence(cfg),
        6 => gain_gap_vs_range(cfg),
        7..=10 => policy_gains(cfg, id),
        11 => structure_vs_ratios(cfg),
        12 => structure_vs_threshold(cfg),
        _ => Err(Error::config("figure.id", format!("unknown figure {id}; expected 1..=12"))),
    }
}

fn success_vs_threshold(cfg: &ExperimentConfig) -> Result<Vec<FigureRow>> {
    let (groups, c) = (cfg.profile(), cfg.strategy()?);
    let mut rows = Vec::new();
    for &alpha in &cfg.figure.alpha {
        let sir = if cfg.figure.simulate {
            let p = params_at(cfg, alpha, 0.0, cfg.system.r_max)?;
            Some(reference_sir_samples(&p, groups, &c, &cfg.sim.config)?)
        } else {
            None
        };
        for &g in &cfg.figure.x {
            let p = params_at(cfg, alpha, g, cfg.system.r_max)?;
            rows.push(row(g, format!("analytic_alpha{}", label(alpha)), success_prob(&p, groups, &c)?.success_prob));
            if let Some(sir) = &sir {
                let e = success_from_sir(sir, p.gamma_th());
                rows.push(FigureRow {
                    ci99_half: Some(e.ci99_half),
                    ..row(g, format!("sim_alpha{}", label(alpha)), e.mean)
                });
            }
        }
    }
    Ok(rows)
}

fn success_vs_density(cfg: &ExperimentConfig) -> Result<Vec<FigureRow>> {
    let mut rows = Vec::new();
    for &r in &cfg.figure.series {
        let p = params_at(cfg, cfg.system.alpha, cfg.system.gamma_th_db, r)?;
        for &lambda in &cfg.figure.x {
            let (groups, c) = equal_density(cfg, lambda)?;
            rows.push(row(lambda, format!("analytic_R{}", label(r)), success_prob(&p, &groups, &c)?.success_prob));
            if cfg.figure.simulate {
                let e = simulate(&p, &groups, &c, &cfg.sim.config, Workload::ReferenceOnly)?.success_prob;
                rows.push(FigureRow {
                    ci99_half: Some(e.ci99_half),
                    ..row(lambda, format!("sim_R{}", label(r)), e.mean)
                });
            }
        }
    }
    Ok(rows)
}

fn gap_rows(
    rows: &mut Vec<FigureRow>,
    x: f64,
    tag: &str,
    p: &SystemParams,
    groups: &GroupProfile,
    c: &CachingStrategy,
    r: f64,
    with_limit: bool,
) -> Result<()> {
    let ps = success_prob(p, groups, c)?.success_prob;
    let limit = ps_infinity(p, groups, c.as_slice(), c.total());
    if with_limit {
        rows.push(row(x, format!("ps_inf{tag}"), limit));
    }
    rows.push(row(x, format!("ps{tag}_R{}", label(r)), ps));
    rows.push(row(x, format!("gap{tag}_R{}", label(r)), (ps - limit).abs()));
    Ok(())
}

fn gap_vs_threshold(cfg: &ExperimentConfig) -> Result<Vec<FigureRow>> {
    let (groups, c) = (cfg.profile(), cfg.strategy()?);
    let mut rows = Vec::new();
    for &alpha in &cfg.figure.alpha {
        let tag = format!("_alpha{}", label(alpha));
        for &g in &cfg.figure.x {
            for (k, &r) in cfg.figure.series.iter().enumerate() {
                let p = params_at(cfg, alpha, g, r)?;
                gap_rows(&mut rows, g, &tag, &p, groups, &c, r, k == 0)?;
            }
        }
    }
    Ok(rows)
}

fn gap_vs_density(cfg: &ExperimentConfig) -> Result<Vec<FigureRow>> {
    let mut rows = Vec::new();
    for &lambda in &cfg.figure.x {
        let (groups, c) = equal_density(cfg, lambda)?;
        for (k, &r) in cfg.figure.series.iter().enumerate() {
            let p = params_at(cfg, cfg.system.alpha, cfg.system.gamma_th_db, r)?;
            gap_rows(&mut rows, lambda, "", &p, &groups, &c, r, k == 0)?;
        }
    }
    Ok(rows)
}

/// Exhaustive maximum of the sum-of-ratios objective over a grid on the
/// capped simplex `Σc = x`; `None` when the grid is too large.
pub fn brute_force_sor(problem: &SorProblem, lambda: &[f64], x_bar: f64, step: f64) -> Option<f64> {
    let n = (x_bar / step).round() as usize;
    let m = lambda.len();
    let mut count = 1f64;
    for k in 1..m {
        count *= (n + k) as f64 / k as f64;
    }
    if count > 5e6 || m == 0 {
        return None;
    }
    fn walk(problem: &SorProblem, lambda: &[f64], c: &mut Vec<f64>, left: usize, step: f64, best: &mut f64) {
        let k = c.len();
        if k + 1 == lambda.len() {
            let last = left as f64 * step;
            if last <= lambda[k] * (1.0 + 1e-12) {
                c.push(last);
                *best = best.max(problem.objective(c));
                c.pop();
            }
            return;
        }
        for i in 0..=left {
            let ci = i as f64 * step;
            if ci > lambda[k] * (1.0 + 1e-12) {
                break;
            }
            c.push(ci);
            walk(problem, lambda, c, left - i, step, best);
            c.pop();
        }
    }
    let mut best = f64::NEG_INFINITY;
    walk(problem, lambda, &mut Vec::with_capacity(m), n, step, &mut best);
    best.is_finite().then_some(best)
}

fn random_start(groups: &GroupProfile, x_bar: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..groups.len()).map(|_| rng.random::<f64>()).collect();
    let total: f64 = w.iter().sum();
    let z: Vec<f64> = w.iter().map(|v| v / total * x_bar).collect();
    project_capped_simplex(&z, groups.lambda(), x_bar)
}

fn convergence(cfg: &ExperimentConfig) -> Result<Vec<FigureRow>> {
    let p = cfg.params();
    let x_bar = cfg.figure.xbar;
    let settings = cfg.sor_settings();
    let mut profiles = vec![cfg.profile().clone()];
    if !cfg.figure.extra_lambda.is_empty() {
        profiles.push(
            GroupProfile::new(cfg.figure.extra_lambda.clone(), cfg.figure.extra_bias.clone())
                .map_err(|e| Error::config("figure.extra_bias", e.to_string()))?,
        );
    }
    let mut rows = Vec::new();
    for groups in &profiles {
        let tag = format!("M{}", groups.len());
        let starts = [
            ("uniform", inner_allocate(groups, x_bar)?.into_vec()),
            ("random1", random_start(groups, x_bar, cfg.sim.config.seed)?),
            ("random2", random_start(groups, x_bar, cfg.sim.config.seed.wrapping_add(1))?),
        ];
        for (name, start) in starts {
            let out = solve_sor_from(p, groups, x_bar, Some(start), &settings)?;
            for (i, b) in out.trace.iter().enumerate() {
                rows.push(row(i as f64, format!("{tag}_{name}"), *b));
            }
        }
        let problem = SorProblem::new(p, groups, x_bar)?;
        if let Some(best) = brute_force_sor(&problem, groups.lambda(), x_bar, 2e-4) {
            rows.push(row(0.0, format!("{tag}_brute_force"), best));
        }
    }
    Ok(rows)
}

fn gain_gap_vs_range(cfg: &ExperimentConfig) -> Result<Vec<FigureRow>> {
    let area = cfg.sim.config.window_side.powi(2);
    let groups = cfg.profile();
    let mut rows = Vec::new();
    for &alpha in &cfg.figure.alpha {
        for &r in &cfg.figure.x {
            let p = params_at(cfg, alpha, cfg.system.gamma_th_db, r)?;
            let exact = solve_exact(&p, groups, &cfg.grid_spec())?;
            let asym = solve_asymptotic(&p, groups, cfg.grid_spec().step_x, &cfg.sor_settings())?;
            rows.push(row(r, format!("exact_alpha{}", label(alpha)), exact.gain * area));
            rows.push(row(r, format!("asymptotic_alpha{}", label(alpha)), asym.gain_lower * area));
        }
    }
    Ok(rows)
}

/// Config of one x-point of figures 7–10.
fn policy_point(cfg: &ExperimentConfig, id: u32, x: f64) -> Result<ExperimentConfig> {
    let mut raw = cfg.to_raw();
    match id {
        7 => raw.set("groups.lambda.1", &x.to_string())?,
        8 => {
            raw.remove("groups.trust_count");
            raw.set("groups.bias", &format!("{x}, {}", 1.0 - x))?;
        }
        9 => raw.set("system.gamma_th_db", &x.to_string())?,
        _ => raw.set("system.alpha", &x.to_string())?,
    }
    ExperimentConfig::from_raw(&raw)
}

fn policy_gains(cfg: &ExperimentConfig, id: u32) -> Result<Vec<FigureRow>> {
    let area = cfg.sim.config.window_side.powi(2);
    let mut rows = Vec::new();
    for &x in &cfg.figure.x {
        let point = policy_point(cfg, id, x)?;
        let settings = point.policy_settings();
        for policy in PolicyId::ALL {
            let out = run_policy(point.params(), point.profile(), policy, &settings)?;
            if policy == PolicyId::ProposedAsymptotic {
                rows.push(row(x, policy.name(), out.reported_gain * area));
                rows.push(row(x, "proposed_asymptotic_model", out.gain * area));
            } else {
                rows.push(row(x, policy.name(), out.gain * area));
            }
            if cfg.figure.simulate && policy == PolicyId::ProposedExact {
                let report = simulate(point.params(), point.profile(), &out.c, &point.sim.config, Workload::AllRequesters)?;
                let e = report.offload_gain.expect("all-requester workload");
                rows.push(FigureRow {
                    ci99_half: Some(e.ci99_half * area),
                    ..row(x, "sim_proposed_exact", e.mean * area)
                });
            }
        }
    }
    Ok(rows)
}

fn optimized_c(cfg: &ExperimentConfig, params: &SystemParams, groups: &GroupProfile) -> Result<Vec<f64>> {
    let mut settings = cfg.policy_settings();
    if cfg.solver.step_x.is_none() {
        settings.grid.step_x = groups.total_lambda() / 200.0;
        settings.step_x = settings.grid.step_x;
    }
    Ok(run_policy(params, groups, cfg.figure.algorithm, &settings)?.c.into_vec())
}

fn structure_vs_ratios(cfg: &ExperimentConfig) -> Result<Vec<FigureRow>> {
    let p = cfg.params();
    let lambda2 = *cfg.profile().lambda().get(1).ok_or_else(|| Error::config("groups.lambda", "figure 11 needs two groups"))?;
    let bias = cfg.profile().bias().to_vec();
    let mut rows = Vec::new();
    for &ratio in &cfg.figure.x {
        let groups = GroupProfile::new(vec![ratio * lambda2, lambda2], bias.clone())?;
        let c = optimized_c(cfg, p, &groups)?;
        rows.push(row(ratio, "c1_density_ratio", c[0]));
        rows.push(row(ratio, "c2_density_ratio", c[1]));
    }
    for &ratio in &cfg.figure.series {
        let b1 = ratio / (1.0 + ratio);
        let groups = GroupProfile::new(vec![lambda2, lambda2], vec![b1, 1.0 - b1])?;
        let c = optimized_c(cfg, p, &groups)?;
        rows.push(row(ratio, "c1_bias_ratio", c[0]));
        rows.push(row(ratio, "c2_bias_ratio", c[1]));
    }
    Ok(rows)
}

fn structure_vs_threshold(cfg: &ExperimentConfig) -> Result<Vec<FigureRow>> {
    let groups = cfg.profile();
    let mut rows = Vec::new();
    for &alpha in &cfg.figure.alpha {
        for &g in &cfg.figure.x {
            let p = params_at(cfg, alpha, g, cfg.system.r_max)?;
            let c = optimized_c(cfg, &p, groups)?;
            for (m, cm) in c.iter().enumerate() {
                rows.push(row(g, format!("c{}_alpha{}", m + 1, label(alpha)), *cm));
            }
        }
    }
    Ok(rows)
}
