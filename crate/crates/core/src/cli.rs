//! Command implementations behind the `d2dcache` binary. Each command turns
//! an [`ExperimentConfig`] into a [`Table`] that is written as CSV.

use crate::baselines::{run_policy, PolicyId};
use crate::config::{Algorithm, ExperimentConfig, RawConfig};
use crate::error::{Error, Result};
use crate::figures;
use crate::model::offload_gain;
use crate::opt::unbiased::solve_unbiased;
use crate::sim::{associate, draw_realization, simulate, Metric, SimEstimate, Workload};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Eval,
    Optimize,
    Simulate,
    Figure,
}

/// A CSV document held in memory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::BiasMismatch(_) => 2,
        Error::NonConvergence { .. } => 3,
        Error::DegenerateEstimate(_) => 4,
        _ => 1,
    }
}

/// Reads a config file and applies overrides. For [`Command::Figure`] the
/// figure's built-in defaults sit underneath the file.
pub fn load_config(command: Command, path: &Path, sets: &[String], seed: Option<u64>) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config(path.display().to_string(), format!("cannot read config: {e}")))?;
    let file = RawConfig::parse(&text)?;
    let mut raw = if command == Command::Figure {
        let mut probe = file.clone();
        for s in sets {
            probe.apply_override(s)?;
        }
        let id = probe
            .get("figure.id")
            .ok_or_else(|| Error::config("figure.id", "select a figure with figure.id = N"))?;
        let id: u32 = id
            .parse()
            .map_err(|_| Error::config("figure.id", format!("cannot parse `{id}`")))?;
        let mut base = figures::defaults(id)?;
        base.merge(&file);
        base
    } else {
        file
    };
    for s in sets {
        raw.apply_override(s)?;
    }
    if let Some(seed) = seed {
        raw.set("sim.seed", &seed.to_string())?;
    }
    ExperimentConfig::from_raw(&raw)
}

pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<Table> {
    match command {
        Command::Eval => cmd_eval(cfg),
        Command::Optimize => cmd_optimize(cfg),
        Command::Simulate => cmd_simulate(cfg),
        Command::Figure => cmd_figure(cfg),
    }
}

fn sweep_header(cfg: &ExperimentConfig) -> Vec<String> {
    cfg.sweep.iter().map(|a| a.path.clone()).collect()
}

/// Analytic metrics of the configured strategy, one row per sweep point.
pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<Table> {
    let m = cfg.profile().len();
    let mut header = sweep_header(cfg);
    header.extend(["success_prob", "offload_gain", "offload_gain_window"].map(String::from));
    for name in ["assoc_prob", "active_ratio", "success_prob_given"] {
        header.extend((1..=m).map(|g| format!("{name}_{g}")));
    }
    let mut table = Table::new(header);
    for (coords, point) in cfg.sweep_points()? {
        let c = point.strategy()?;
        let area = point.sim.config.window_side.powi(2);
        let metrics = offload_gain(point.params(), point.profile(), &c, Some(area))?;
        let mut row: Vec<String> = coords.iter().map(|v| num(*v)).collect();
        row.push(num(metrics.success_prob));
        row.push(num(metrics.offload_gain));
        row.push(num(metrics.offload_gain_abs.unwrap_or(f64::NAN)));
        for list in [&metrics.assoc_prob, &metrics.active_ratio, &metrics.success_prob_given_group] {
            row.extend(list.iter().map(|v| num(*v)));
        }
        table.rows.push(row);
    }
    Ok(table)
}

/// Runs the configured solver(s): `algorithm,x,y,gain,c_1..c_M,iters,seconds`.
pub fn cmd_optimize(cfg: &ExperimentConfig) -> Result<Table> {
    let m = cfg.profile().len();
    let mut header = sweep_header(cfg);
    header.extend(["algorithm", "x", "y", "gain"].map(String::from));
    header.extend((1..=m).map(|g| format!("c_{g}")));
    header.extend(["iters", "seconds"].map(String::from));
    let mut table = Table::new(header);
    for (coords, point) in cfg.sweep_points()? {
        let prefix: Vec<String> = coords.iter().map(|v| num(*v)).collect();
        let mut push = |name: &str, x: f64, y: f64, gain: f64, c: &[f64], iters: usize, secs: f64| {
            let mut row = prefix.clone();
            row.extend([name.to_string(), num(x), num(y), num(gain)]);
            row.extend(c.iter().map(|v| num(*v)));
            row.extend([iters.to_string(), num(secs)]);
            table.rows.push(row);
        };
        let (params, groups) = (point.params(), point.profile());
        let policies: Vec<PolicyId> = match point.solver.algorithm {
            Algorithm::Unbiased => {
                let start = Instant::now();
                let s = solve_unbiased(params, groups, point.grid_spec().step_x)?;
                let weights = groups.weights(params.alpha());
                let y = weights.iter().zip(s.c_star.as_slice()).map(|(v, c)| v * c).sum();
                let secs = start.elapsed().as_secs_f64();
                push("unbiased", s.x_star, y, s.gain, s.c_star.as_slice(), s.trace.len(), secs);
                Vec::new()
            }
            Algorithm::Policy(p) => vec![p],
            Algorithm::All => PolicyId::ALL.to_vec(),
        };
        let settings = point.policy_settings();
        for p in policies {
            let out = run_policy(params, groups, p, &settings)?;
            push(p.name(), out.x, out.y, out.gain, out.c.as_slice(), out.iterations, out.seconds);
        }
    }
    Ok(table)
}

fn estimate_rows(report_metric: Result<Vec<SimEstimate>>, name: &str, per_group: bool) -> Result<Vec<(String, SimEstimate)>> {
    let list = report_metric?;
    Ok(list
        .into_iter()
        .enumerate()
        .map(|(g, e)| {
            let label = if per_group { format!("{name}_{}", g + 1) } else { name.to_string() };
            (label, e)
        })
        .collect())
}

/// Monte-Carlo estimates: `metric,mean,ci99_half,realizations,seed`.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Table> {
    let mut header = sweep_header(cfg);
    header.extend(["metric", "mean", "ci99_half", "realizations", "seed"].map(String::from));
    let mut table = Table::new(header);
    for (coords, point) in cfg.sweep_points()? {
        let c = point.strategy()?;
        let (params, groups, sim) = (point.params(), point.profile(), &point.sim);
        if let Some(path) = &sim.dump {
            let real = associate(draw_realization(params, groups, &c, &sim.config, 0), params);
            let file = fs::File::create(path)?;
            real.write_dump(std::io::BufWriter::new(file))?;
        }
        let workload = if sim.metrics.contains(&Metric::OffloadGain) {
            Workload::AllRequesters
        } else {
            Workload::ReferenceOnly
        };
        let report = simulate(params, groups, &c, &sim.config, workload)?;
        let mut estimates = Vec::new();
        for &metric in &sim.metrics {
            let per_group = matches!(metric, Metric::AssocProb | Metric::ActiveRatio);
            estimates.extend(estimate_rows(report.metric(metric), metric.name(), per_group)?);
            if metric == Metric::OffloadGain {
                estimates.push(("offload_gain_via_success".into(), report.offload_gain_via_success));
            }
        }
        for (name, e) in estimates {
            let mut row: Vec<String> = coords.iter().map(|v| num(*v)).collect();
            row.extend([name, num(e.mean), num(e.ci99_half), e.realizations.to_string(), report.seed.to_string()]);
            table.rows.push(row);
        }
    }
    Ok(table)
}

/// Figure series: `x,series,value,ci99_half` with an empty half-width for
/// analytic series.
pub fn cmd_figure(cfg: &ExperimentConfig) -> Result<Table> {
    let mut table = Table::new(["x", "series", "value", "ci99_half"].map(String::from).to_vec());
    for r in figures::run(cfg)? {
        table.rows.push(vec![
            num(r.x),
            r.series,
            num(r.value),
            r.ci99_half.map(num).unwrap_or_default(),
        ]);
    }
    Ok(table)
}
