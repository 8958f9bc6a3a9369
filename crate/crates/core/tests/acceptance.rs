//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use d2dcache::baselines::{run_policy, PolicyId, PolicySettings};
use d2dcache::config::ExperimentConfig;
use d2dcache::figures;
use d2dcache::model::{
    db_to_linear, f_kernel, f_kernel_derivative, f_kernel_second_derivative, success_prob, CachingStrategy,
    GroupProfile, SystemParams,
};
use d2dcache::numerics::{full_line_integral_quadrature, project_capped_simplex, theta_bs, QuadratureSpec};
use d2dcache::opt::asymptotic::{ps_infinity, solve_asymptotic, solve_sor_from, SorProblem, SorSettings};
use d2dcache::opt::exact::{projected_direction, solve_exact, GridSpec, InnerProblem};
use d2dcache::opt::unbiased::{inner_allocate, solve_unbiased};
use d2dcache::sim::{reference_sir_samples, success_from_sir, Boundary, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

type Outcome = (bool, String);

fn params(alpha: f64, gamma_db: f64, r_max: f64) -> SystemParams {
    SystemParams::from_db(alpha, gamma_db, 15.0, 20.0, 1e-4, r_max).unwrap()
}

fn three_groups() -> (GroupProfile, CachingStrategy) {
    let g = GroupProfile::new(vec![0.1; 3], vec![0.1, 0.3, 0.6]).unwrap();
    let c = CachingStrategy::new(&g, vec![0.05, 0.09, 0.08]).unwrap();
    (g, c)
}

const THRESHOLDS_DB: [f64; 6] = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0];

/// Analytic success probability against Monte-Carlo on a 100 m torus.
fn analytic_vs_simulation() -> Outcome {
    let start = Instant::now();
    let (g, c) = three_groups();
    let cfg = SimConfig {
        window_side: 100.0,
        realizations: 2000,
        seed: 1,
        boundary: Boundary::Torus { image_shells: 2 },
    };
    let mut worst = (0.0f64, String::new());
    let mut ok = true;
    for alpha in [3.0, 4.0] {
        let samples = reference_sir_samples(&params(alpha, 0.0, 15.0), &g, &c, &cfg).unwrap();
        for db in THRESHOLDS_DB {
            let analytic = success_prob(&params(alpha, db, 15.0), &g, &c).unwrap().success_prob;
            let mc = success_from_sir(&samples, db_to_linear(db));
            let diff = (analytic - mc.mean).abs();
            let tol = 0.02f64.max(3.0 * mc.std_error);
            ok &= diff <= tol;
            if worst.1.is_empty() || diff - tol > worst.0 {
                worst = (diff - tol, format!("alpha={alpha} {db}dB: |{analytic:.4}-{:.4}|={diff:.4} tol {tol:.4}", mc.mean));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs <= 300.0;
    (ok, format!("tightest {}; {secs:.1}s", worst.1))
}

/// Finite-range success probability approaches its unlimited-range limit.
fn range_gap() -> Outcome {
    let (g, c) = three_groups();
    let ranges = [5.0, 10.0, 15.0, 20.0, 30.0];
    let mut ok = true;
    let mut gap15 = 0.0f64;
    for alpha in [3.0, 4.0] {
        for db in THRESHOLDS_DB {
            let limit = ps_infinity(&params(alpha, db, 15.0), &g, c.as_slice(), c.total());
            let gaps: Vec<f64> = ranges
                .iter()
                .map(|&r| (success_prob(&params(alpha, db, r), &g, &c).unwrap().success_prob - limit).abs())
                .collect();
            ok &= gaps.windows(2).all(|w| w[1] <= w[0] + 1e-12);
            if alpha == 3.0 {
                gap15 = gap15.max(gaps[2]);
            }
        }
    }
    ok &= gap15 <= 0.05;
    (ok, format!("max gap at R=15, alpha=3: {gap15:.2e}"))
}

fn random_start(groups: &GroupProfile, x_bar: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..groups.len()).map(|_| rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    let z: Vec<f64> = w.iter().map(|v| v / s * x_bar).collect();
    project_capped_simplex(&z, groups.lambda(), x_bar).unwrap()
}

/// Solvers agree with each other and with brute force.
fn optimizer_cross_validation() -> Outcome {
    let start = Instant::now();
    let p = params(3.0, 3.0, 15.0);
    let mut ok = true;
    let mut notes = Vec::new();

    for lambda in [vec![0.04, 0.02], vec![0.03, 0.01, 0.02]] {
        let m = lambda.len();
        let g = GroupProfile::new(lambda, vec![1.0 / m as f64; m]).unwrap();
        let spec = GridSpec::default_for(&g);
        let exact = solve_exact(&p, &g, &spec).unwrap();
        let unb = solve_unbiased(&p, &g, spec.step_x).unwrap();
        let dx = (exact.x_star - unb.x_star).abs();
        let rel = (exact.gain - unb.gain).abs() / unb.gain;
        ok &= dx <= spec.step_x * (1.0 + 1e-9) && rel <= 0.005;
        notes.push(format!("M={m} equal: dx={dx:.1e} rel={rel:.1e}"));
    }

    let x_bar = 0.02;
    let settings = SorSettings::default();
    for (lambda, bias) in [(vec![0.02, 0.02], vec![0.1, 0.9]), (vec![0.02; 3], vec![0.1, 0.4, 0.5])] {
        let g = GroupProfile::new(lambda, bias).unwrap();
        let problem = SorProblem::new(&p, &g, x_bar).unwrap();
        let brute = figures::brute_force_sor(&problem, g.lambda(), x_bar, 2e-4).unwrap();
        let starts = [
            inner_allocate(&g, x_bar).unwrap().into_vec(),
            random_start(&g, x_bar, 1),
            random_start(&g, x_bar, 2),
        ];
        for s in starts {
            let out = solve_sor_from(&p, &g, x_bar, Some(s), &settings).unwrap();
            let last = *out.trace.last().unwrap();
            let rel = (last - brute).abs() / brute;
            let monotone = out.trace.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs());
            ok &= rel <= 0.01 && monotone;
            notes.push(format!("M={} sor rel={rel:.1e}", g.len()));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs <= 120.0;
    (ok, format!("{}; {secs:.1}s", notes.join(", ")))
}

/// Proposed policies dominate the baselines on the density and bias sweeps.
fn policy_ordering() -> Outcome {
    let p = params(3.0, 3.0, 15.0);
    let mut points = Vec::new();
    for l1 in [0.02, 0.04, 0.06, 0.08, 0.1] {
        points.push((format!("lambda1={l1}"), GroupProfile::new(vec![l1, 0.02], vec![0.1, 0.9]).unwrap()));
    }
    for k in 1..=9 {
        let b1 = k as f64 / 10.0;
        points.push((format!("B1={b1}"), GroupProfile::new(vec![0.04, 0.02], vec![b1, 1.0 - b1]).unwrap()));
    }
    let mut ok = true;
    let mut failures = Vec::new();
    let mut worst_margin = f64::INFINITY;
    for (label, g) in &points {
        let s = PolicySettings::default_for(g);
        let exact = run_policy(&p, g, PolicyId::ProposedExact, &s).unwrap().gain;
        let asym = solve_asymptotic(&p, g, s.step_x, &s.sor).unwrap();
        let uniform = run_policy(&p, g, PolicyId::Uniform, &s).unwrap().gain;
        let one = run_policy(&p, g, PolicyId::OneUt, &s).unwrap().gain;
        let reported = asym.gain_lower.max(asym.gain_unbounded).max(asym.gain_model);
        let margin = (exact - (reported - 0.05 * exact)) / exact;
        worst_margin = worst_margin.min(margin);
        let point_ok = margin >= 0.0 && exact >= uniform && uniform >= one;
        if !point_ok {
            failures.push(format!("{label}: exact {exact:.4e} asym {reported:.4e} uniform {uniform:.4e} one {one:.4e}"));
        }
        ok &= point_ok;
    }
    let detail = if failures.is_empty() {
        format!("{} points, smallest asymptotic margin {:.3} of exact", points.len(), worst_margin)
    } else {
        failures.join("; ")
    };
    (ok, detail)
}

/// Derivatives, projections and closed forms against independent evaluations.
fn numerical_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_grad = 0.0f64;
    let mut worst_hess = f64::NEG_INFINITY;
    let mut worst_proj = 0.0f64;
    let mut worst_identity = 0.0f64;
    for _ in 0..100 {
        let alpha = rng.random_range(2.5..5.0);
        let p = params(alpha, rng.random_range(0.0..10.0), rng.random_range(5.0..30.0));
        let m = rng.random_range(2..=5);
        let lambda: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..0.1)).collect();
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let g = GroupProfile::new(lambda.clone(), raw.iter().map(|b| b / s).collect()).unwrap();
        let c: Vec<f64> = lambda.iter().map(|l| l * rng.random_range(0.05..0.95)).collect();
        let v = g.weights(alpha);
        let x: f64 = c.iter().sum();
        let y: f64 = v.iter().zip(&c).map(|(a, b)| a * b).sum();
        let problem = InnerProblem::new(&p, &g, x, y);
        let grad = problem.gradient(&c);
        let area = p.disk_area();
        for i in 0..m {
            let h = 1e-6 * c[i];
            let (mut up, mut down) = (c.clone(), c.clone());
            up[i] += h;
            down[i] -= h;
            let fd = (problem.objective(&up) - problem.objective(&down)) / (2.0 * h);
            worst_grad = worst_grad.max(((fd - grad[i]) / grad[i]).abs());

            let a = area * problem.active_ratio()[i] * p.theta_i();
            let phi = area * (y / v[i] + p.bs_load() + a / area * c[i]);
            let d2 = 2.0 * a * f_kernel_derivative(phi).unwrap() + a * a * c[i] * f_kernel_second_derivative(phi).unwrap();
            worst_hess = worst_hess.max(d2);
        }

        let gvec: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d = projected_direction(&v, &vec![true; m], &gvec).unwrap();
        let n1: f64 = d.iter().sum();
        let n2: f64 = v.iter().zip(&d).map(|(a, b)| a * b).sum();
        worst_proj = worst_proj.max(n1.abs()).max(n2.abs());

        let cs = CachingStrategy::new(&g, c.clone()).unwrap();
        let metrics = success_prob(&p, &g, &cs).unwrap();
        for i in 0..m {
            let lhs = area * c[i] * f_kernel(metrics.interference[i]).unwrap();
            let rhs = metrics.assoc_prob[i] * metrics.success_prob_given_group[i];
            worst_identity = worst_identity.max((lhs - rhs).abs() / rhs.abs().max(1e-300));
        }
    }

    let mut worst_theta = 0.0f64;
    let spec = QuadratureSpec::new(1e-12, 200).unwrap();
    for alpha in [2.5, 3.0, 3.5, 4.0, 4.5, 5.0] {
        for db in THRESHOLDS_DB {
            let gamma = db_to_linear(db);
            let ratio = db_to_linear(20.0 - 15.0);
            let closed = theta_bs(alpha, gamma, ratio).unwrap();
            let quad = (gamma * ratio).powf(2.0 / alpha) * full_line_integral_quadrature(alpha, spec).unwrap();
            worst_theta = worst_theta.max(((closed - quad) / closed).abs());
        }
    }

    let ok = worst_grad <= 1e-6 && worst_hess < 0.0 && worst_proj <= 1e-10 && worst_theta <= 1e-8 && worst_identity <= 1e-12;
    (
        ok,
        format!(
            "grad {worst_grad:.1e}, max hess diag {worst_hess:.2e}, N.p {worst_proj:.1e}, theta {worst_theta:.1e}, identity {worst_identity:.1e}"
        ),
    )
}

fn nondecreasing(xs: &[f64], slack: f64) -> bool {
    xs.windows(2).all(|w| w[1] >= w[0] - slack)
}

/// Structure of the optimized strategy across density and bias ratios.
fn strategy_structure() -> Outcome {
    let raw = figures::defaults(11).unwrap();
    let cfg = ExperimentConfig::from_raw(&raw).unwrap();
    let rows = figures::run(&cfg).unwrap();
    let series = |name: &str| -> Vec<f64> { rows.iter().filter(|r| r.series == name).map(|r| r.value).collect() };
    // One grid cell of the largest profile in the grid.
    let cell = 0.2 / 200.0;
    let c1_density = series("c1_density_ratio");
    let c1_bias = series("c1_bias_ratio");
    let c2_bias = series("c2_bias_ratio");
    let neg: Vec<f64> = c1_bias.iter().map(|v| -v).collect();
    let ok = !c1_density.is_empty()
        && nondecreasing(&c1_density, cell)
        && nondecreasing(&neg, cell)
        && nondecreasing(&c2_bias, cell);
    (
        ok,
        format!("c1 vs density {c1_density:.4?}; c1 vs bias {c1_bias:.4?}; c2 vs bias {c2_bias:.4?}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 6] = [
        ("analytic success probability matches simulation", analytic_vs_simulation),
        ("range gap shrinks and is small at 15 m", range_gap),
        ("optimizers agree with each other and brute force", optimizer_cross_validation),
        ("proposed policies dominate baselines", policy_ordering),
        ("numerical property suite", numerical_properties),
        ("optimized strategy structure", strategy_structure),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = check();
        println!("criterion {}: {} ({name}) {detail}", i + 1, if ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
