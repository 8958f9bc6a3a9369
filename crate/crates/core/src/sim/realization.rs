//! One random network snapshot: point sets, association and link SIR.

use super::fading::{bs_id, exponential, user_id, LinkKey, REFERENCE_RECEIVER};
use super::{Boundary, SimConfig};
use crate::model::{CachingStrategy, GroupProfile, SystemParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use std::io::{self, Write};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

/// A UT identified by group and position in that group's point set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UtId {
    pub group: usize,
    pub index: usize,
}

/// Whose SIR is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Receiver {
    /// The requester added at the window centre.
    Reference,
    /// A requester drawn from the process.
    Requester { group: usize, index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub index: u64,
    pub seed: u64,
    pub window_side: f64,
    pub boundary: Boundary,
    pub bias: Vec<f64>,
    pub uts: Vec<Vec<Point>>,
    pub urs: Vec<Vec<Point>>,
    pub bss: Vec<Point>,
    pub reference: Point,
    /// Serving UT of each drawn requester, filled by [`associate`].
    pub association: Vec<Vec<Option<UtId>>>,
    pub reference_association: Option<UtId>,
    /// Whether each UT serves at least one drawn requester.
    pub active: Vec<Vec<bool>>,
}

fn poisson_count(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite mean");
    d.sample(rng) as usize
}

/// Draws users of every group, splits them into UTs and URs by independent
/// thinning with probability `c_m/λ_m`, and draws the BSs. The stream index
/// selects an independent ChaCha stream under the configured seed.
pub fn draw_realization(
    params: &SystemParams,
    groups: &GroupProfile,
    c: &CachingStrategy,
    cfg: &SimConfig,
    stream_index: u64,
) -> Realization {
    let w = cfg.window_side;
    let area = w * w;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream_index);

    let m = groups.len();
    let mut uts = Vec::with_capacity(m);
    let mut urs = Vec::with_capacity(m);
    for (&lambda, &cm) in groups.lambda().iter().zip(c.as_slice()) {
        let q = if lambda > 0.0 { (cm / lambda).clamp(0.0, 1.0) } else { 0.0 };
        let n = poisson_count(&mut rng, lambda * area);
        let mut t = Vec::with_capacity((n as f64 * q) as usize + 1);
        let mut r = Vec::with_capacity((n as f64 * (1.0 - q)) as usize + 1);
        for _ in 0..n {
            let p = Point {
                x: rng.random::<f64>() * w,
                y: rng.random::<f64>() * w,
            };
            if rng.random::<f64>() < q {
                t.push(p);
            } else {
                r.push(p);
            }
        }
        uts.push(t);
        urs.push(r);
    }
    let nb = poisson_count(&mut rng, params.lambda_b() * area);
    let bss = (0..nb)
        .map(|_| Point {
            x: rng.random::<f64>() * w,
            y: rng.random::<f64>() * w,
        })
        .collect();

    Realization::from_points(cfg, stream_index, groups.bias().to_vec(), uts, urs, bss)
}

impl Realization {
    /// Wraps given point sets; the reference requester sits at the centre.
    pub fn from_points(
        cfg: &SimConfig,
        index: u64,
        bias: Vec<f64>,
        uts: Vec<Vec<Point>>,
        urs: Vec<Vec<Point>>,
        bss: Vec<Point>,
    ) -> Self {
        let half = cfg.window_side / 2.0;
        let active = uts.iter().map(|g| vec![false; g.len()]).collect();
        let association = urs.iter().map(|g| vec![None; g.len()]).collect();
        Self {
            index,
            seed: cfg.seed,
            window_side: cfg.window_side,
            boundary: cfg.boundary,
            bias,
            uts,
            urs,
            bss,
            reference: Point { x: half, y: half },
            association,
            reference_association: None,
            active,
        }
    }

    /// Displacement from `a` to `b` under the boundary metric.
    pub fn displacement(&self, a: Point, b: Point) -> (f64, f64) {
        let (mut dx, mut dy) = (b.x - a.x, b.y - a.y);
        if let Boundary::Torus { .. } = self.boundary {
            let w = self.window_side;
            dx -= w * (dx / w).round();
            dy -= w * (dy / w).round();
        }
        (dx, dy)
    }

    pub fn distance(&self, a: Point, b: Point) -> f64 {
        let (dx, dy) = self.displacement(a, b);
        dx.hypot(dy)
    }

    /// Offsets of the periodic copies that contribute interference; the
    /// nearest copy comes first.
    pub fn image_offsets(&self) -> Vec<(f64, f64)> {
        match self.boundary {
            Boundary::Guard { .. } => vec![(0.0, 0.0)],
            Boundary::Torus { image_shells } => {
                let k = image_shells as i64;
                let w = self.window_side;
                let mut out = vec![(0.0, 0.0)];
                for i in -k..=k {
                    for j in -k..=k {
                        if i != 0 || j != 0 {
                            out.push((i as f64 * w, j as f64 * w));
                        }
                    }
                }
                out
            }
        }
    }

    /// Whether a point counts towards the offloading-gain estimate.
    pub fn in_counted_region(&self, p: Point) -> bool {
        match self.boundary {
            Boundary::Torus { .. } => true,
            Boundary::Guard { margin } => {
                let hi = self.window_side - margin;
                p.x >= margin && p.x <= hi && p.y >= margin && p.y <= hi
            }
        }
    }

    /// Area of the region used by [`Self::in_counted_region`].
    pub fn counted_area(&self) -> f64 {
        match self.boundary {
            Boundary::Torus { .. } => self.window_side * self.window_side,
            Boundary::Guard { margin } => (self.window_side - 2.0 * margin).powi(2),
        }
    }

    /// Writes one `kind group x y` line per point. BS lines carry group 0,
    /// user groups are numbered from 1; the reference requester is omitted.
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (g, pts) in self.uts.iter().enumerate() {
            for p in pts {
                writeln!(out, "UT {} {:.6} {:.6}", g + 1, p.x, p.y)?;
            }
        }
        for (g, pts) in self.urs.iter().enumerate() {
            for p in pts {
                writeln!(out, "UR {} {:.6} {:.6}", g + 1, p.x, p.y)?;
            }
        }
        for p in &self.bss {
            writeln!(out, "BS 0 {:.6} {:.6}", p.x, p.y)?;
        }
        Ok(())
    }
}

/// Bucket grid over the window with cells of at least half the D2D range,
/// so every UT in range lies within two cells of the query point.
struct UtGrid {
    n: usize,
    cell: f64,
    window: f64,
    wrap: bool,
    cells: Vec<Vec<(Point, UtId)>>,
}

impl UtGrid {
    fn new(real: &Realization, r_max: f64) -> Self {
        let n = ((2.0 * real.window_side / r_max).floor() as usize).clamp(1, 2048);
        let cell = real.window_side / n as f64;
        let wrap = matches!(real.boundary, Boundary::Torus { .. });
        let mut grid = Self {
            n,
            cell,
            window: real.window_side,
            wrap,
            cells: vec![Vec::new(); n * n],
        };
        for (group, pts) in real.uts.iter().enumerate() {
            for (index, p) in pts.iter().enumerate() {
                let (i, j) = grid.cell_of(*p);
                grid.cells[i * n + j].push((*p, UtId { group, index }));
            }
        }
        grid
    }

    fn cell_of(&self, p: Point) -> (usize, usize) {
        let i = ((p.x / self.cell) as usize).min(self.n - 1);
        let j = ((p.y / self.cell) as usize).min(self.n - 1);
        (i, j)
    }

    /// Calls `f` with the squared distance to every UT that may lie in range.
    fn for_each_near(&self, real: &Realization, p: Point, mut f: impl FnMut(f64, UtId)) {
        if self.n < 5 {
            for &(q, id) in self.cells.iter().flatten() {
                let (dx, dy) = real.displacement(p, q);
                f(dx * dx + dy * dy, id);
            }
            return;
        }
        let (ci, cj) = self.cell_of(p);
        let n = self.n as i64;
        for di in -2..=2i64 {
            let (i, sx) = self.wrapped(ci as i64 + di, n);
            let Some(i) = i else { continue };
            for dj in -2..=2i64 {
                let (j, sy) = self.wrapped(cj as i64 + dj, n);
                let Some(j) = j else { continue };
                for &(q, id) in &self.cells[(i * n + j) as usize] {
                    let (dx, dy) = (q.x + sx - p.x, q.y + sy - p.y);
                    f(dx * dx + dy * dy, id);
                }
            }
        }
    }

    /// Cell index after wrapping, with the coordinate shift of the copy.
    fn wrapped(&self, i: i64, n: i64) -> (Option<i64>, f64) {
        if (0..n).contains(&i) {
            (Some(i), 0.0)
        } else if !self.wrap {
            (None, 0.0)
        } else if i < 0 {
            (Some(i + n), -self.window)
        } else {
            (Some(i - n), self.window)
        }
    }
}

fn best_server(real: &Realization, grid: &UtGrid, weights: &[f64], r2: f64, p: Point) -> Option<UtId> {
    // Maximizing B d^{-α} is minimizing d² / B^{2/α}.
    let mut best: Option<(f64, UtId)> = None;
    grid.for_each_near(real, p, |d2, id| {
        let v = weights[id.group];
        if d2 > r2 || v <= 0.0 {
            return;
        }
        let score = d2 / v;
        let better = match best {
            None => true,
            Some((s, b)) => score < s || (score == s && id < b),
        };
        if better {
            best = Some((score, id));
        }
    });
    best.map(|(_, id)| id)
}

/// Every requester selects the in-range UT of maximal biased received power;
/// a UT is active when at least one drawn requester selected it.
pub fn associate(mut real: Realization, params: &SystemParams) -> Realization {
    let r = params.r_max();
    let weights: Vec<f64> = real.bias.iter().map(|b| b.powf(2.0 / params.alpha())).collect();
    let grid = UtGrid::new(&real, r);
    let r2 = r * r;
    let mut active: Vec<Vec<bool>> = real.uts.iter().map(|g| vec![false; g.len()]).collect();
    let mut association = Vec::with_capacity(real.urs.len());
    for pts in &real.urs {
        let picks: Vec<Option<UtId>> = pts
            .iter()
            .map(|&p| best_server(&real, &grid, &weights, r2, p))
            .collect();
        for id in picks.iter().flatten() {
            active[id.group][id.index] = true;
        }
        association.push(picks);
    }
    real.reference_association = best_server(&real, &grid, &weights, r2, real.reference);
    real.association = association;
    real.active = active;
    real
}

fn path_gain(d2: f64, alpha: f64) -> f64 {
    if alpha == 4.0 {
        1.0 / (d2 * d2)
    } else if alpha == 3.0 {
        1.0 / (d2 * d2.sqrt())
    } else {
        d2.powf(-alpha / 2.0)
    }
}

/// SIR of a requester against its serving UT, with interference from the
/// other active UTs of the serving group and from every BS. `None` when the
/// requester has no server; `+∞` when nothing interferes.
pub fn measure_sir(real: &Realization, params: &SystemParams, receiver: Receiver) -> Option<f64> {
    let (pos, server, rx) = match receiver {
        Receiver::Reference => (real.reference, real.reference_association?, REFERENCE_RECEIVER),
        Receiver::Requester { group, index } => {
            (real.urs[group][index], real.association[group][index]?, user_id(group, index))
        }
    };
    let alpha = params.alpha();
    let images = real.image_offsets();
    let fade = |transmitter: u64, image: usize| {
        exponential(
            real.seed,
            real.index,
            LinkKey {
                receiver: rx,
                transmitter,
                image: image as u64,
            },
        )
    };
    let gain_sum = |d: (f64, f64), transmitter: u64, skip_nearest: bool| {
        let mut acc = 0.0;
        for (k, off) in images.iter().enumerate() {
            if skip_nearest && k == 0 {
                continue;
            }
            let (dx, dy) = (d.0 + off.0, d.1 + off.1);
            acc += fade(transmitter, k) * path_gain(dx * dx + dy * dy, alpha);
        }
        acc
    };

    let g = server.group;
    let (sx, sy) = real.displacement(pos, real.uts[g][server.index]);
    let signal = fade(user_id(g, server.index), 0) * path_gain(sx * sx + sy * sy, alpha);

    let mut interference = 0.0;
    for (j, (&on, &p)) in real.active[g].iter().zip(&real.uts[g]).enumerate() {
        if on {
            interference += gain_sum(real.displacement(pos, p), user_id(g, j), j == server.index);
        }
    }
    if !real.bss.is_empty() && params.p_b() > 0.0 {
        let mut bs = 0.0;
        for (j, &p) in real.bss.iter().enumerate() {
            bs += gain_sum(real.displacement(pos, p), bs_id(j), false);
        }
        interference += params.power_ratio() * bs;
    }
    Some(if interference > 0.0 {
        signal / interference
    } else {
        f64::INFINITY
    })
}
