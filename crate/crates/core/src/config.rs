//! Experiment configuration: a flat `block.key = value` text format with `#`
//! comments and comma-separated lists, plus its typed form.

use crate::baselines::{PolicyId, PolicySettings};
use crate::error::{Error, Result};
use crate::model::{CachingStrategy, GroupProfile, SystemParams, TrustCounts};
use crate::opt::exact::{GridSpec, YStep};
use crate::opt::asymptotic::SorSettings;
use crate::sim::{Boundary, Metric, SimConfig};
use std::collections::BTreeMap;
use std::path::PathBuf;

const KNOWN_KEYS: &[&str] = &[
    "system.alpha",
    "system.gamma_th_db",
    "system.p_t_dbm",
    "system.p_b_dbm",
    "system.lambda_b",
    "system.r_max",
    "groups.lambda",
    "groups.bias",
    "groups.trust_count",
    "strategy.c",
    "solver.algorithm",
    "solver.step_x",
    "solver.step_y",
    "solver.y_divisions",
    "solver.tol_c",
    "solver.max_inner_iterations",
    "solver.zeta",
    "solver.eps",
    "solver.tol",
    "solver.max_iterations",
    "solver.step_fraction",
    "solver.one_ut_delta",
    "sim.window",
    "sim.realizations",
    "sim.seed",
    "sim.boundary",
    "sim.image_shells",
    "sim.margin",
    "sim.metrics",
    "sim.dump",
    "sweep.path",
    "sweep.values",
    "figure.id",
    "figure.x",
    "figure.series",
    "figure.alpha",
    "figure.simulate",
    "figure.algorithm",
    "figure.xbar",
    "figure.extra_lambda",
    "figure.extra_bias",
];

/// Untyped key/value entries, sorted by key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(format!("line {}", n + 1), "expected `block.key = value`"));
            };
            let key = key.trim().to_string();
            check_key(&key)?;
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::config(key, "set more than once"));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    /// Sets `key`, or one element of a list with `key.N` (1-based).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if KNOWN_KEYS.contains(&key) {
            self.entries.insert(key.to_string(), value.trim().to_string());
            return Ok(());
        }
        let (base, index) = key
            .rsplit_once('.')
            .and_then(|(b, i)| Some((b, i.parse::<usize>().ok()?)))
            .ok_or_else(|| Error::config(key, "unknown key"))?;
        check_key(base)?;
        let current = self
            .get(base)
            .ok_or_else(|| Error::config(base, "cannot set an element of an unset list"))?;
        let mut items: Vec<String> = split_list(current).map(str::to_string).collect();
        if index == 0 || index > items.len() {
            return Err(Error::config(key, format!("index out of range 1..={}", items.len())));
        }
        items[index - 1] = value.trim().to_string();
        self.entries.insert(base.to_string(), items.join(", "));
        Ok(())
    }

    /// Applies a `block.key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment, "override must look like block.key=value"))?;
        self.set(k.trim(), v)
    }

    /// Entries of `other` replace those of `self`.
    pub fn merge(&mut self, other: &RawConfig) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn check_key(key: &str) -> Result<()> {
    if KNOWN_KEYS.contains(&key) {
        Ok(())
    } else {
        Err(Error::config(key, "unknown key"))
    }
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty())
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

struct Reader<'a> {
    raw: &'a RawConfig,
}

impl Reader<'_> {
    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw.get(key) {
            None => Ok(None),
            Some(s) => s
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::config(key, format!("cannot parse `{s}`"))),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.raw.get(key) {
            None => Ok(None),
            Some(s) => split_list(s)
                .map(|t| t.parse::<f64>().map_err(|_| Error::config(key, format!("cannot parse `{t}`"))))
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }
}

/// Which solver `optimize` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// The equal-bias closed-form solver; fails on unequal biases.
    Unbiased,
    Policy(PolicyId),
    /// Every policy in [`PolicyId::ALL`].
    All,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Unbiased => "unbiased",
            Algorithm::Policy(p) => p.name(),
            Algorithm::All => "all",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "unbiased" => Some(Algorithm::Unbiased),
            "all" => Some(Algorithm::All),
            _ => PolicyId::parse(s).map(Algorithm::Policy),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemBlock {
    pub alpha: f64,
    pub gamma_th_db: f64,
    pub p_t_dbm: f64,
    pub p_b_dbm: f64,
    pub lambda_b: f64,
    pub r_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BiasSource {
    Bias(Vec<f64>),
    TrustCount(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupsBlock {
    pub lambda: Vec<f64>,
    pub source: BiasSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverBlock {
    pub algorithm: Algorithm,
    /// Defaults to `λ_0/200`.
    pub step_x: Option<f64>,
    /// Fixed `y` step; when unset the `y` range is split into `y_divisions`.
    pub step_y: Option<f64>,
    pub y_divisions: usize,
    pub tol_c: f64,
    pub max_inner_iterations: usize,
    pub zeta: f64,
    pub eps: f64,
    pub tol: f64,
    pub max_iterations: usize,
    pub step_fraction: f64,
    /// Defaults to the `x` step.
    pub one_ut_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimBlock {
    pub config: SimConfig,
    pub metrics: Vec<Metric>,
    /// Where to write the first realization's point dump, if anywhere.
    pub dump: Option<PathBuf>,
}

/// One sweep axis: a config key and the values it takes.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub path: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureBlock {
    pub id: Option<u32>,
    pub x: Vec<f64>,
    pub series: Vec<f64>,
    pub alpha: Vec<f64>,
    pub simulate: bool,
    pub algorithm: PolicyId,
    pub xbar: f64,
    pub extra_lambda: Vec<f64>,
    pub extra_bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub system: SystemBlock,
    pub groups: GroupsBlock,
    pub strategy: Option<Vec<f64>>,
    pub solver: SolverBlock,
    pub sim: SimBlock,
    /// Axes of a Cartesian sweep, outermost first.
    pub sweep: Vec<SweepAxis>,
    pub figure: FigureBlock,
    params: SystemParams,
    profile: GroupProfile,
}

fn as_config(path: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config { .. } => e,
        other => Error::config(path, other.to_string()),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_raw(&RawConfig::parse(text)?)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let r = Reader { raw };
        let system = SystemBlock {
            alpha: r.f64_or("system.alpha", 3.0)?,
            gamma_th_db: r.f64_or("system.gamma_th_db", 3.0)?,
            p_t_dbm: r.f64_or("system.p_t_dbm", 15.0)?,
            p_b_dbm: r.f64_or("system.p_b_dbm", 20.0)?,
            lambda_b: r.f64_or("system.lambda_b", 1e-4)?,
            r_max: r.f64_or("system.r_max", 15.0)?,
        };
        let params = SystemParams::from_db(
            system.alpha,
            system.gamma_th_db,
            system.p_t_dbm,
            system.p_b_dbm,
            system.lambda_b,
            system.r_max,
        )
        .map_err(as_config("system"))?;

        let lambda = r
            .list("groups.lambda")?
            .filter(|l| !l.is_empty())
            .ok_or_else(|| Error::config("groups.lambda", "at least one group is required"))?;
        let source = match (r.list("groups.bias")?, r.list("groups.trust_count")?) {
            (Some(b), None) => BiasSource::Bias(b),
            (None, Some(t)) => BiasSource::TrustCount(t),
            (None, None) => BiasSource::Bias(vec![1.0 / lambda.len() as f64; lambda.len()]),
            (Some(_), Some(_)) => {
                return Err(Error::config("groups", "give either bias or trust_count, not both"));
            }
        };
        let (key, given) = match &source {
            BiasSource::Bias(b) => ("groups.bias", b),
            BiasSource::TrustCount(t) => ("groups.trust_count", t),
        };
        if given.len() != lambda.len() {
            return Err(Error::config(key, format!("{} entries for {} groups", given.len(), lambda.len())));
        }
        let profile = match &source {
            BiasSource::Bias(b) => GroupProfile::new(lambda.clone(), b.clone()),
            BiasSource::TrustCount(t) => GroupProfile::from_counts(lambda.clone(), &TrustCounts { counts: t.clone() }),
        }
        .map_err(as_config(key))?;
        let groups = GroupsBlock { lambda, source };

        let strategy = r.list("strategy.c")?;
        if let Some(c) = &strategy {
            CachingStrategy::new(&profile, c.clone()).map_err(as_config("strategy.c"))?;
        }

        let algorithm = match raw.get("solver.algorithm") {
            None => Algorithm::All,
            Some(s) => Algorithm::parse(s).ok_or_else(|| Error::config("solver.algorithm", format!("unknown algorithm `{s}`")))?,
        };
        let solver = SolverBlock {
            algorithm,
            step_x: r.parsed("solver.step_x")?,
            step_y: r.parsed("solver.step_y")?,
            y_divisions: r.parsed("solver.y_divisions")?.unwrap_or(200),
            tol_c: r.f64_or("solver.tol_c", 1e-9)?,
            max_inner_iterations: r.parsed("solver.max_inner_iterations")?.unwrap_or(1000),
            zeta: r.f64_or("solver.zeta", 0.5)?,
            eps: r.f64_or("solver.eps", 0.01)?,
            tol: r.f64_or("solver.tol", 1e-8)?,
            max_iterations: r.parsed("solver.max_iterations")?.unwrap_or(500),
            step_fraction: r.f64_or("solver.step_fraction", 0.05)?,
            one_ut_delta: r.parsed("solver.one_ut_delta")?,
        };

        let boundary = match raw.get("sim.boundary").unwrap_or("torus") {
            "torus" => Boundary::Torus {
                image_shells: r.parsed("sim.image_shells")?.unwrap_or(2),
            },
            "guard" => Boundary::Guard {
                margin: r.f64_or("sim.margin", 10.0)?,
            },
            other => return Err(Error::config("sim.boundary", format!("expected torus or guard, got `{other}`"))),
        };
        let metrics = match raw.get("sim.metrics") {
            None => vec![Metric::SuccessProb, Metric::AssocProb, Metric::ActiveRatio, Metric::OffloadGain],
            Some(s) => split_list(s)
                .map(|t| Metric::parse(t).ok_or_else(|| Error::config("sim.metrics", format!("unknown metric `{t}`"))))
                .collect::<Result<_>>()?,
        };
        let sim = SimBlock {
            config: SimConfig {
                window_side: r.f64_or("sim.window", 100.0)?,
                realizations: r.parsed("sim.realizations")?.unwrap_or(2000),
                seed: r.parsed("sim.seed")?.unwrap_or(1),
                boundary,
            },
            metrics,
            dump: raw.get("sim.dump").map(PathBuf::from),
        };
        sim.config.validate(&params).map_err(as_config("sim"))?;

        let sweep = match (raw.get("sweep.path"), raw.get("sweep.values")) {
            (None, None) => Vec::new(),
            (Some(p), Some(v)) => {
                let paths: Vec<&str> = split_list(p).collect();
                let lists: Vec<&str> = v.split('|').collect();
                if paths.len() != lists.len() {
                    return Err(Error::config("sweep.values", "give one `|`-separated value list per path"));
                }
                let mut axes = Vec::new();
                for (path, list) in paths.into_iter().zip(lists) {
                    let mut probe = raw.clone();
                    probe.set(path, "0").map_err(|_| Error::config("sweep.path", format!("unknown key `{path}`")))?;
                    let values = split_list(list)
                        .map(|t| t.parse().map_err(|_| Error::config("sweep.values", format!("cannot parse `{t}`"))))
                        .collect::<Result<Vec<f64>>>()?;
                    if values.is_empty() {
                        return Err(Error::config("sweep.values", format!("no values for `{path}`")));
                    }
                    axes.push(SweepAxis {
                        path: path.to_string(),
                        values,
                    });
                }
                axes
            }
            _ => return Err(Error::config("sweep", "path and values must be given together")),
        };

        let figure = FigureBlock {
            id: r.parsed("figure.id")?,
            x: r.list("figure.x")?.unwrap_or_default(),
            series: r.list("figure.series")?.unwrap_or_default(),
            alpha: r.list("figure.alpha")?.unwrap_or_default(),
            simulate: r.parsed("figure.simulate")?.unwrap_or(false),
            algorithm: match raw.get("figure.algorithm") {
                None => PolicyId::ProposedAsymptotic,
                Some(s) => PolicyId::parse(s).ok_or_else(|| Error::config("figure.algorithm", format!("unknown policy `{s}`")))?,
            },
            xbar: r.f64_or("figure.xbar", 0.02)?,
            extra_lambda: r.list("figure.extra_lambda")?.unwrap_or_default(),
            extra_bias: r.list("figure.extra_bias")?.unwrap_or_default(),
        };

        Ok(Self {
            system,
            groups,
            strategy,
            solver,
            sim,
            sweep,
            figure,
            params,
            profile,
        })
    }

    /// Serializes every field so that parsing the result reproduces `self`.
    pub fn to_raw(&self) -> RawConfig {
        let mut e = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            e.insert(k.to_string(), v);
        };
        let s = &self.system;
        put("system.alpha", s.alpha.to_string());
        put("system.gamma_th_db", s.gamma_th_db.to_string());
        put("system.p_t_dbm", s.p_t_dbm.to_string());
        put("system.p_b_dbm", s.p_b_dbm.to_string());
        put("system.lambda_b", s.lambda_b.to_string());
        put("system.r_max", s.r_max.to_string());
        put("groups.lambda", fmt_list(&self.groups.lambda));
        match &self.groups.source {
            BiasSource::Bias(b) => put("groups.bias", fmt_list(b)),
            BiasSource::TrustCount(t) => put("groups.trust_count", fmt_list(t)),
        }
        if let Some(c) = &self.strategy {
            put("strategy.c", fmt_list(c));
        }
        let v = &self.solver;
        put("solver.algorithm", v.algorithm.name().to_string());
        if let Some(x) = v.step_x {
            put("solver.step_x", x.to_string());
        }
        if let Some(y) = v.step_y {
            put("solver.step_y", y.to_string());
        }
        put("solver.y_divisions", v.y_divisions.to_string());
        put("solver.tol_c", v.tol_c.to_string());
        put("solver.max_inner_iterations", v.max_inner_iterations.to_string());
        put("solver.zeta", v.zeta.to_string());
        put("solver.eps", v.eps.to_string());
        put("solver.tol", v.tol.to_string());
        put("solver.max_iterations", v.max_iterations.to_string());
        put("solver.step_fraction", v.step_fraction.to_string());
        if let Some(d) = v.one_ut_delta {
            put("solver.one_ut_delta", d.to_string());
        }
        let m = &self.sim;
        put("sim.window", m.config.window_side.to_string());
        put("sim.realizations", m.config.realizations.to_string());
        put("sim.seed", m.config.seed.to_string());
        match m.config.boundary {
            Boundary::Torus { image_shells } => {
                put("sim.boundary", "torus".into());
                put("sim.image_shells", image_shells.to_string());
            }
            Boundary::Guard { margin } => {
                put("sim.boundary", "guard".into());
                put("sim.margin", margin.to_string());
            }
        }
        put(
            "sim.metrics",
            m.metrics.iter().map(|x| x.name()).collect::<Vec<_>>().join(", "),
        );
        if let Some(d) = &m.dump {
            put("sim.dump", d.display().to_string());
        }
        if !self.sweep.is_empty() {
            put(
                "sweep.path",
                self.sweep.iter().map(|a| a.path.as_str()).collect::<Vec<_>>().join(", "),
            );
            put(
                "sweep.values",
                self.sweep.iter().map(|a| fmt_list(&a.values)).collect::<Vec<_>>().join(" | "),
            );
        }
        let f = &self.figure;
        if let Some(id) = f.id {
            put("figure.id", id.to_string());
        }
        for (key, list) in [
            ("figure.x", &f.x),
            ("figure.series", &f.series),
            ("figure.alpha", &f.alpha),
            ("figure.extra_lambda", &f.extra_lambda),
            ("figure.extra_bias", &f.extra_bias),
        ] {
            if !list.is_empty() {
                put(key, fmt_list(list));
            }
        }
        put("figure.simulate", f.simulate.to_string());
        put("figure.algorithm", f.algorithm.name().to_string());
        put("figure.xbar", f.xbar.to_string());
        RawConfig { entries: e }
    }

    pub fn to_text(&self) -> String {
        self.to_raw().to_text()
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn profile(&self) -> &GroupProfile {
        &self.profile
    }

    /// The configured caching strategy, or an error asking for one.
    pub fn strategy(&self) -> Result<CachingStrategy> {
        let c = self.strategy.as_ref().ok_or_else(|| {
            Error::config("strategy.c", "no caching densities given; run `optimize` or set strategy.c")
        })?;
        CachingStrategy::new(&self.profile, c.clone()).map_err(as_config("strategy.c"))
    }

    pub fn grid_spec(&self) -> GridSpec {
        let mut g = GridSpec::default_for(&self.profile);
        if let Some(x) = self.solver.step_x {
            g.step_x = x;
        }
        g.step_y = match self.solver.step_y {
            Some(y) => YStep::Fixed(y),
            None => YStep::Divisions(self.solver.y_divisions),
        };
        g.convergence = self.solver.tol_c;
        g.max_inner_iterations = self.solver.max_inner_iterations;
        g
    }

    pub fn sor_settings(&self) -> SorSettings {
        SorSettings {
            zeta: self.solver.zeta,
            eps: self.solver.eps,
            tol: self.solver.tol,
            max_iterations: self.solver.max_iterations,
            step_fraction: self.solver.step_fraction,
        }
    }

    pub fn policy_settings(&self) -> PolicySettings {
        let grid = self.grid_spec();
        PolicySettings {
            grid,
            sor: self.sor_settings(),
            step_x: grid.step_x,
            one_ut_delta: self.solver.one_ut_delta.unwrap_or(grid.step_x),
        }
    }

    /// Every point of the sweep as `(axis values, config)`; a config without
    /// a sweep yields itself once with no axis values.
    pub fn sweep_points(&self) -> Result<Vec<(Vec<f64>, ExperimentConfig)>> {
        let mut points = vec![(Vec::new(), self.to_raw())];
        for axis in &self.sweep {
            let mut next = Vec::new();
            for (coords, raw) in &points {
                for &v in &axis.values {
                    let mut raw = raw.clone();
                    raw.set(&axis.path, &v.to_string())?;
                    let mut coords = coords.clone();
                    coords.push(v);
                    next.push((coords, raw));
                }
            }
            points = next;
        }
        points
            .into_iter()
            .map(|(coords, mut raw)| {
                raw.remove("sweep.path");
                raw.remove("sweep.values");
                Ok((coords, Self::from_raw(&raw)?))
            })
            .collect()
    }
}
